// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Toy multimodal classifier: image-grid encoder, question encoder, single-hop
// bilinear attention, classifier with dropout, answer and log-variance heads.
//
// Every operation has a hand-written vector-Jacobian product. The backward
// pass is split at the attended feature map F so callers can read the
// gradient there ("the tap") and inject an additive override before the
// upstream parameters receive their gradients.

#ifndef UCAM_MODEL_HPP_
#define UCAM_MODEL_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ucam/numerics.hpp"

namespace ucam {

struct ModelConfig {
  std::size_t grid_rows = 7;       // u
  std::size_t grid_cols = 7;       // v
  std::size_t cell_kinds = 13;     // symbolic cell vocabulary (empty + shape x color)
  std::size_t image_channels = 32; // C_img
  std::size_t vocab_size = 14;
  std::size_t question_dim = 32;   // d_q
  std::size_t attention_dim = 32;  // rank of the bilinear score
  std::size_t feature_dim = 32;    // d, channels of F
  std::size_t hidden = 64;
  std::size_t answers = 16;        // C_ans
  double dropout = 0.3;            // classifier hidden layers only
  double init_scale = 1.0;

  std::size_t cells() const { return grid_rows * grid_cols; }
};

enum class Partition : std::uint8_t { image, question, attention, classifier, answer, uncertainty };
inline constexpr std::array<Partition, 6> kAllPartitions = {
    Partition::image,      Partition::question, Partition::attention,
    Partition::classifier, Partition::answer,   Partition::uncertainty};
std::string_view partition_name(Partition p);
Partition partition_from_name(std::string_view name);

/// All learnable arrays, grouped into the six partitions
/// theta_i, theta_q, theta_f, theta_c, theta_y, theta_u.
/// The same type carries gradients.
struct Parameters {
  // image
  RealArray cell_embedding;   // [kinds, C_img]
  // question
  RealArray token_embedding;  // [vocab, d_q]
  // attention
  RealArray key_image;        // [k, C_img]
  RealArray key_question;     // [k, d_q]
  RealArray value_image;      // [d, C_img]
  RealArray value_question;   // [d, d_q]
  RealArray value_bias;       // [d]
  // classifier
  RealArray w1, b1;           // [hidden, d], [hidden]
  RealArray w2, b2;           // [hidden, hidden], [hidden]
  // answer
  RealArray w_answer, b_answer;  // [C_ans, hidden], [C_ans]
  // uncertainty
  RealArray w_variance, b_variance;  // [C_ans, hidden], [C_ans]

  /// Zero-filled arrays with the shapes implied by `cfg`.
  static Parameters zeros(const ModelConfig& cfg);
  static Parameters initialize(const ModelConfig& cfg, std::uint64_t seed);
  Parameters zeros_like() const;

  /// Visits (partition, tensor name, array) in a fixed order.
  template <class Fn>
  void for_each(Fn&& fn) {
    for_each_impl(*this, fn);
  }
  template <class Fn>
  void for_each(Fn&& fn) const {
    for_each_impl(*this, fn);
  }

  std::size_t count() const;
  friend bool operator==(const Parameters&, const Parameters&) = default;

 private:
  template <class Self, class Fn>
  static void for_each_impl(Self& p, Fn& fn) {
    fn(Partition::image, "cell_embedding", p.cell_embedding);
    fn(Partition::question, "token_embedding", p.token_embedding);
    fn(Partition::attention, "key_image", p.key_image);
    fn(Partition::attention, "key_question", p.key_question);
    fn(Partition::attention, "value_image", p.value_image);
    fn(Partition::attention, "value_question", p.value_question);
    fn(Partition::attention, "value_bias", p.value_bias);
    fn(Partition::classifier, "w1", p.w1);
    fn(Partition::classifier, "b1", p.b1);
    fn(Partition::classifier, "w2", p.w2);
    fn(Partition::classifier, "b2", p.b2);
    fn(Partition::answer, "w_answer", p.w_answer);
    fn(Partition::answer, "b_answer", p.b_answer);
    fn(Partition::uncertainty, "w_variance", p.w_variance);
    fn(Partition::uncertainty, "b_variance", p.b_variance);
  }
};

/// this += scale * other, for every array.
void axpy(Parameters& self, double scale, const Parameters& other);

// --- domain types ---------------------------------------------------------

/// Symbolic scene: one cell-kind id per grid cell, row-major.
struct Scene {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> cells;

  friend bool operator==(const Scene&, const Scene&) = default;
};

struct ImageGrid {
  RealArray features;  // [u, v, C_img]
};

struct QuestionEmbedding {
  RealArray vector;  // [d_q], tanh(mean of token embeddings)
  std::vector<std::size_t> tokens;
};

struct AttentionWeights {
  RealArray alpha;  // [u, v]
};

/// F[u,v,:] = alpha[u,v] * value[u,v,:]; the attended vector is sum over (u,v).
struct AttendedFeatureMap {
  RealArray map;  // [u, v, d]
  RealArray pooled() const;
};

/// Gradient (or mask) aligned with AttendedFeatureMap.
struct GradientField {
  RealArray values;  // [u, v, d]
  static GradientField zeros(const ModelConfig& cfg);
};

struct AttentionResult {
  AttentionWeights weights;
  AttendedFeatureMap features;
  RealArray scores;      // [u*v]
  RealArray keys;        // [u*v, k]
  RealArray query;       // [k]
  RealArray values;      // [u*v, d]
};

struct DropoutSpec {
  double rate = 0.0;
  RngStream stream{0, 0};
};

/// Activations of one classifier pass (one dropout draw).
struct ClassifierState {
  RealArray pooled;  // f
  RealArray pre1, h1, mask1;
  RealArray pre2, h2, mask2;
  const RealArray& hidden() const { return h2; }
};

struct HeadPass {
  ClassifierState classifier;
  RealArray logits;        // y_hat [C_ans]
  RealArray log_variance;  // s [C_ans], sigma2_a = softplus(s)
};

/// One recorded forward pass: encoder/attention once, any number of
/// classifier+head passes sharing the same F.
struct ForwardPass {
  Scene scene;
  ImageGrid image;
  QuestionEmbedding question;
  AttentionResult attention;
  std::vector<HeadPass> heads;
};

// --- forward operations ---------------------------------------------------

ImageGrid encode_image(const Scene& scene, const Parameters& params, const ModelConfig& cfg);
/// Throws std::invalid_argument("out-of-vocabulary") for unknown ids and on empty input.
QuestionEmbedding encode_question(std::span<const std::size_t> tokens, const Parameters& params,
                                  const ModelConfig& cfg);
AttentionResult attend(const ImageGrid& image, const QuestionEmbedding& question, const Parameters& params,
                       const ModelConfig& cfg);
/// Pools F and applies two ReLU layers with inverted dropout drawn from `dropout.stream`.
ClassifierState classify(const AttendedFeatureMap& features, const Parameters& params, DropoutSpec& dropout);
RealArray predict_logits(const RealArray& hidden, const Parameters& params);
RealArray predict_log_variance(const RealArray& hidden, const Parameters& params);

ForwardPass forward_encoder(const Scene& scene, std::span<const std::size_t> tokens, const Parameters& params,
                            const ModelConfig& cfg);
/// Appends one classifier/head pass and returns its index.
std::size_t add_head_pass(ForwardPass& pass, const Parameters& params, DropoutSpec& dropout);

// --- backward -------------------------------------------------------------

/// Upstream gradient arriving at one head pass. Empty arrays mean zero.
struct HeadSeed {
  std::size_t head = 0;
  RealArray d_logits;
  RealArray d_log_variance;
};

/// Backpropagates head seeds to the tap. Accumulates classifier, answer and
/// uncertainty gradients (times `grad_scale`) into `grads` and returns the
/// unscaled dLoss/dF. Throws std::out_of_range if a seed names a head not in
/// the pass.
GradientField backward_heads(const ForwardPass& pass, const Parameters& params, std::span<const HeadSeed> seeds,
                             Parameters& grads, double grad_scale = 1.0);

/// Backpropagates a field at F into attention, question and image gradients.
void backward_encoder(const ForwardPass& pass, const Parameters& params, const GradientField& d_features,
                      Parameters& grads);

struct BackwardResult {
  GradientField tap;  // dLoss/dF before injection
  Parameters grads;
};

/// Full reverse pass. When `injection` is given it is added to the tap
/// gradient before the upstream (encoder) parameters are reached.
BackwardResult backward(const ForwardPass& pass, const Parameters& params, std::span<const HeadSeed> seeds,
                        const GradientField* injection = nullptr);

}  // namespace ucam

#endif  // UCAM_MODEL_HPP_
