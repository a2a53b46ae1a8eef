// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Classification and uncertainty losses: cross-entropy, Monte Carlo
// distorted-logit loss (aleatoric and predictive variants), variance
// equalizer, uncertainty-distorted loss, and their combination per
// ablation mode. Each loss with a gradient has a *_grad form returning the
// value together with its vector-Jacobian inputs.

#ifndef UCAM_LOSSES_HPP_
#define UCAM_LOSSES_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ucam/model.hpp"
#include "ucam/numerics.hpp"

namespace ucam {

enum class PerturbScale { stddev, variance };

struct MCConfig {
  std::size_t samples = 10;  // T
  RngStream stream{0, 0};
  PerturbScale perturb_scale = PerturbScale::stddev;
  /// Test-only: return the log-likelihood itself instead of its negative.
  bool unnegated = false;
};

// --- cross-entropy --------------------------------------------------------

/// Throws std::out_of_range when target >= logits.size().
double cross_entropy(std::span<const double> logits, std::size_t target);

struct LossGrad {
  double value = 0.0;
  std::vector<double> d_logits;
};
LossGrad cross_entropy_grad(std::span<const double> logits, std::size_t target);

// --- distorted-logit loss -------------------------------------------------

/// Per-class perturbation scale for a variance vector (sqrt or identity).
double perturb_scale(double variance, PerturbScale mode);

/// y_hat + eps_t * scale(sigma2); eps_t is drawn from mc.stream.child(t).
/// Throws std::invalid_argument on a negative variance.
std::vector<double> distort_logits(std::span<const double> logits, std::span<const double> sigma2,
                                   const MCConfig& mc, std::size_t t);

double aleatoric_loss(std::span<const double> logits, std::span<const double> sigma2, std::size_t target,
                      const MCConfig& mc);

struct DistortedLossGrad {
  double value = 0.0;
  std::vector<double> d_logits;
  std::vector<double> d_variance;
};
DistortedLossGrad aleatoric_loss_grad(std::span<const double> logits, std::span<const double> sigma2,
                                      std::size_t target, const MCConfig& mc);

/// Same estimator with a single scalar variance broadcast to every class.
double predictive_loss(std::span<const double> logits, double sigma2_p, std::size_t target, const MCConfig& mc);

// --- Monte Carlo predictive uncertainty -------------------------------------

struct MCPrediction {
  ProbabilityVector mean_probability;         // p(y_hat_c), averaged softmax
  std::vector<double> sample_variance;        // v^a_t: class-mean softplus(s_t)
  std::vector<std::vector<double>> aleatoric; // softplus(s_t) per sample and class
  std::vector<std::size_t> heads;             // head-pass indices inside the ForwardPass
};

/// Appends `mc.samples` dropout head passes to `pass`; pass t draws its
/// dropout mask from mc.stream.child(t).
MCPrediction mc_predictive_distribution(ForwardPass& pass, const Parameters& params, double dropout_rate,
                                        const MCConfig& mc);

struct UncertaintyEstimate {
  std::vector<double> sigma2_a;  // per-class aleatoric variance
  double entropy = 0.0;          // H
  double mean_aleatoric = 0.0;   // (1/T) sum_t v^a_t
  double sigma2_p = 0.0;         // H + mean_aleatoric
};

UncertaintyEstimate predictive_uncertainty(const ProbabilityVector& p, std::span<const double> sample_variance,
                                           std::vector<double> sigma2_a = {});

// --- auxiliary losses -----------------------------------------------------

/// sum_c ReLU(exp(sigma2_c) - exp(sigma0^2)).
double variance_equalizer(std::span<const double> sigma2, double sigma0);
std::vector<double> variance_equalizer_grad(std::span<const double> sigma2, double sigma0);

enum class UdlVariant { piecewise, algorithm };

/// Piecewise: alpha (exp(d) - 1) for d < 0, else d, with d = L_p - L_y.
/// Algorithm: exp(L_y - L_p)^2.
double uncertainty_distorted_loss(double loss_p, double loss_y, double alpha,
                                  UdlVariant variant = UdlVariant::piecewise);
/// Derivative with respect to L_p; the derivative with respect to L_y is its negative.
double uncertainty_distorted_loss_slope(double loss_p, double loss_y, double alpha,
                                        UdlVariant variant = UdlVariant::piecewise);

// --- modes and bundles ----------------------------------------------------

/// Rows of the ablation table.
enum class Mode {
  baseline,
  ve,
  udl,
  aul,
  pul,
  udl_ve,
  aul_ve,
  pul_ve,
  aul_udl,
  pul_udl,
  a_gca,
  p_gca,
};

enum class VarianceSource { aleatoric, predictive };

struct ModeSpec {
  bool distorted = false;  // L_p enters L_u
  bool ve = false;
  bool udl = false;
  bool gca = false;
  VarianceSource variance = VarianceSource::aleatoric;

  bool any_uncertainty() const { return distorted || ve || udl; }
  bool needs_distorted_loss() const { return distorted || udl; }
};

ModeSpec mode_spec(Mode mode);
std::string_view mode_name(Mode mode);
/// Accepts the names printed by mode_name, case-insensitively.
std::optional<Mode> parse_mode(std::string_view name);
const std::vector<Mode>& all_modes();

struct LossComponents {
  double loss_y = 0.0;
  std::optional<double> loss_p;  // absent when no Monte Carlo estimate was made
  double loss_ve = 0.0;
  double loss_udl = 0.0;
};

struct LossBundle {
  Mode mode = Mode::baseline;
  double loss_y = 0.0;
  double loss_p = 0.0;
  double loss_ve = 0.0;
  double loss_udl = 0.0;
  double loss_u = 0.0;
  double total = 0.0;  // L_y + eta * L_u for one example, or the batch cost
};

/// Zeroes disabled components and sums the rest. Throws std::invalid_argument
/// when the mode needs L_p but the components carry none.
LossBundle total_uncertainty_loss(const LossComponents& components, Mode mode, double eta_loss);

/// (1/n) sum_j [L_y^j + eta L_u^j]. Throws on an empty batch.
double total_cost(std::span<const LossBundle> bundles, double eta_loss);

/// Component-wise mean of per-example bundles, with total = total_cost.
LossBundle mean_bundle(std::span<const LossBundle> bundles, double eta_loss);

}  // namespace ucam

#endif  // UCAM_LOSSES_HPP_
