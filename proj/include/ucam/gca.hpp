// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Gradient-certainty attention: the certainty mask built from the
// uncertainty and classification gradients at the attended feature map, its
// residual injection into the classification gradient, and the training step
// that ties the losses, the mask and the two optimizers together.

#ifndef UCAM_GCA_HPP_
#define UCAM_GCA_HPP_

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ucam/losses.hpp"
#include "ucam/model.hpp"
#include "ucam/optim.hpp"

namespace ucam {

enum class MaskNormalization { softmax, sum };

struct GCAConfig {
  double lambda = 1.0;
  double gamma = -10.0;
  MaskNormalization normalization = MaskNormalization::softmax;
  double eps_norm = 1e-12;
  // Multiplies the normalized mask at injection; 1 is the plain residual sum.
  double mask_scale = 1.0;
};

struct CertaintyMask {
  RealArray values;  // [u, v, d]
};

/// Max-normalized map over grid cells.
struct CertaintyHeatmap {
  RealArray map;  // [u, v]
};

/// -lambda * grad_u (.) grad_y
GradientField certainty_product(const GradientField& grad_u, const GradientField& grad_y, double lambda);
/// ReLU(x) + gamma ReLU(-x). Throws if gamma > 0.
GradientField certainty_activation(const GradientField& grad, double gamma);
/// Softmax over every entry, or division by the total with an all-zero
/// result when |total| < eps_norm.
CertaintyMask normalize_mask(const GradientField& grad, const GCAConfig& cfg);
GradientField inject_residual_gradient(const GradientField& grad_y, const CertaintyMask& mask);
/// Convenience: product, activation and normalization in sequence.
CertaintyMask build_certainty_mask(const GradientField& grad_u, const GradientField& grad_y, const GCAConfig& cfg);

/// heat[u,v] = ReLU(sum_d w_d F[u,v,d]) with w_d the spatial mean of
/// `gradient` on channel d, then divided by its maximum.
CertaintyHeatmap certainty_map(const AttendedFeatureMap& features, const GradientField& gradient);

// --- training -------------------------------------------------------------

struct TrainingExample {
  std::uint64_t id = 0;
  Scene scene;
  std::vector<std::size_t> tokens;
  std::size_t target = 0;
};

struct LossSettings {
  double eta_loss = 0.5;
  double udl_alpha = 1.0;
  double sigma0 = 0.0;
  UdlVariant udl_variant = UdlVariant::piecewise;
  PerturbScale perturb_scale = PerturbScale::stddev;
  std::size_t mc_samples = 10;
  // Predictive modes: when false the entropy term of the variance is a
  // constant for differentiation and only the softplus head learns from L_u.
  bool entropy_gradient = false;
};

struct StepConfig {
  Mode mode = Mode::baseline;
  GCAConfig gca;
  LossSettings loss;
  double dropout = 0.3;
  AdamConfig adam;
  SgdConfig sgd;
};

/// Streams used for one example at one step.
struct ExampleStreams {
  RngStream dropout{0, 0};
  RngStream noise{0, 0};
  static ExampleStreams derive(std::uint64_t seed, std::uint64_t step, std::uint64_t record_id);
};

/// Losses of one example plus the head seeds of L_y and L_u.
struct ExampleLosses {
  LossBundle bundle;
  std::vector<HeadSeed> seeds_y;
  std::vector<HeadSeed> seeds_u;
  std::vector<double> variance;  // sigma2_W fed to the distortion
  double entropy = 0.0;          // H of the MC predictive distribution (predictive modes)
};

/// Adds the head passes the mode needs to `pass` and evaluates every loss.
ExampleLosses evaluate_example(ForwardPass& pass, const Parameters& params, std::size_t target,
                               const StepConfig& cfg, const ExampleStreams& streams);

struct ExampleGradient {
  GradientField grad_y;  // dL_y/dF
  GradientField grad_u;  // dL_u/dF (zero without uncertainty components)
  CertaintyMask mask;    // empty unless the mode uses GCA
  GradientField final_y; // dL_y/dF after injection
};

/// Accumulates d(L_y + eta L_u) into `grads`, with the certainty mask injected
/// at F when the mode uses GCA and `inject` is true.
ExampleGradient accumulate_example_gradient(const ForwardPass& pass, const Parameters& params,
                                            const ExampleLosses& losses, const StepConfig& cfg, Parameters& grads,
                                            bool inject = true);

/// Parameters plus optimizer state; replaced wholesale at the end of a step.
struct TrainerState {
  TrainerState(Parameters initial, const StepConfig& cfg) : params(std::move(initial)), adam(cfg.adam, params) {}

  Parameters params;
  Adam adam;
  std::uint64_t step = 0;
};

struct StepOutput {
  LossBundle mean;
  std::vector<LossBundle> per_example;
};

inline constexpr std::array<Partition, 5> kClassificationPartitions = {
    Partition::image, Partition::question, Partition::attention, Partition::classifier, Partition::answer};
inline constexpr std::array<Partition, 1> kUncertaintyPartitions = {Partition::uncertainty};

/// One optimization step over `batch` for cfg.mode. Throws on an empty batch.
StepOutput gca_training_step(std::span<const TrainingExample> batch, TrainerState& state, const StepConfig& cfg,
                             const ModelConfig& model_cfg, std::uint64_t seed);

/// Reference trainer: cross-entropy only, no uncertainty machinery.
StepOutput sce_training_step(std::span<const TrainingExample> batch, TrainerState& state, const StepConfig& cfg,
                             const ModelConfig& model_cfg, std::uint64_t seed);

}  // namespace ucam

#endif  // UCAM_GCA_HPP_
