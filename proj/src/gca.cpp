// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "ucam/gca.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ucam {

namespace {

void require_same(const RealArray& a, const RealArray& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("gradient field shape mismatch");
}

enum StreamPurpose : std::uint64_t { kDropoutPurpose = 0xd50, kNoisePurpose = 0x401 };

}  // namespace

GradientField certainty_product(const GradientField& grad_u, const GradientField& grad_y, double lambda) {
  require_same(grad_u.values, grad_y.values);
  GradientField out{RealArray(grad_y.values.shape())};
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = -lambda * grad_u.values[i] * grad_y.values[i];
  }
  return out;
}

GradientField certainty_activation(const GradientField& grad, double gamma) {
  if (gamma > 0.0) throw std::invalid_argument("gamma must be <= 0");
  GradientField out{RealArray(grad.values.shape())};
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const double x = grad.values[i];
    out.values[i] = x > 0.0 ? x : (x < 0.0 ? gamma * -x : 0.0);
  }
  return out;
}

CertaintyMask normalize_mask(const GradientField& grad, const GCAConfig& cfg) {
  if (!(cfg.eps_norm > 0.0)) throw std::invalid_argument("eps_norm must be positive");
  CertaintyMask mask{RealArray(grad.values.shape())};
  if (grad.values.empty()) return mask;
  if (cfg.normalization == MaskNormalization::softmax) {
    const ProbabilityVector p = softmax(grad.values.span());
    std::copy(p.values().begin(), p.values().end(), mask.values.data());
    return mask;
  }
  double total = 0.0;
  for (double v : grad.values.span()) total += v;
  if (std::abs(total) < cfg.eps_norm) return mask;
  for (std::size_t i = 0; i < grad.values.size(); ++i) mask.values[i] = grad.values[i] / total;
  return mask;
}

GradientField inject_residual_gradient(const GradientField& grad_y, const CertaintyMask& mask) {
  require_same(grad_y.values, mask.values);
  GradientField out = grad_y;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += mask.values[i];
  return out;
}

CertaintyMask build_certainty_mask(const GradientField& grad_u, const GradientField& grad_y, const GCAConfig& cfg) {
  return normalize_mask(certainty_activation(certainty_product(grad_u, grad_y, cfg.lambda), cfg.gamma), cfg);
}

CertaintyHeatmap certainty_map(const AttendedFeatureMap& features, const GradientField& gradient) {
  require_same(features.map, gradient.values);
  const std::size_t rows = features.map.dim(0), cols = features.map.dim(1), d = features.map.dim(2);
  const std::size_t cells = rows * cols;
  std::vector<double> weight(d, 0.0);
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t k = 0; k < d; ++k) weight[k] += gradient.values[c * d + k];
  }
  for (double& w : weight) w /= static_cast<double>(cells);

  CertaintyHeatmap heat{RealArray({rows, cols})};
  double peak = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += weight[k] * features.map[c * d + k];
    heat.map[c] = std::max(s, 0.0);
    peak = std::max(peak, heat.map[c]);
  }
  if (peak > 0.0) {
    for (std::size_t c = 0; c < cells; ++c) heat.map[c] /= peak;
  }
  return heat;
}

ExampleStreams ExampleStreams::derive(std::uint64_t seed, std::uint64_t step, std::uint64_t record_id) {
  const RngStream root(seed, 0x7a1e);
  return ExampleStreams{root.child({kDropoutPurpose, step, record_id}), root.child({kNoisePurpose, step, record_id})};
}

ExampleLosses evaluate_example(ForwardPass& pass, const Parameters& params, std::size_t target,
                               const StepConfig& cfg, const ExampleStreams& streams) {
  const ModeSpec spec = mode_spec(cfg.mode);
  ExampleLosses out;

  DropoutSpec main_dropout{cfg.dropout, streams.dropout.child(0)};
  const std::size_t main = add_head_pass(pass, params, main_dropout);
  // copies: the MC passes below may reallocate pass.heads
  const RealArray logits = pass.heads[main].logits;
  const RealArray log_variance = pass.heads[main].log_variance;

  const LossGrad ly = cross_entropy_grad(logits.span(), target);
  out.seeds_y.push_back(HeadSeed{main, RealArray::vector(ly.d_logits), RealArray{}});

  LossComponents comp;
  comp.loss_y = ly.value;
  if (!spec.any_uncertainty()) {
    out.bundle = total_uncertainty_loss(comp, cfg.mode, cfg.loss.eta_loss);
    return out;
  }

  const std::size_t n = logits.size();
  std::vector<double> variance(n), d_variance_d_s(n);
  for (std::size_t c = 0; c < n; ++c) {
    variance[c] = softplus(log_variance[c]);
    d_variance_d_s[c] = sigmoid(log_variance[c]);
  }

  // Predictive modes add the entropy of the MC-dropout predictive distribution.
  MCPrediction prediction;
  if (spec.variance == VarianceSource::predictive) {
    MCConfig dropout_mc;
    dropout_mc.samples = cfg.loss.mc_samples;
    dropout_mc.stream = streams.dropout.child(1);
    prediction = mc_predictive_distribution(pass, params, cfg.dropout, dropout_mc);
    out.entropy = entropy(prediction.mean_probability);
    for (double& v : variance) v += out.entropy;
  }
  out.variance = variance;

  std::vector<double> du_dlogits(n, 0.0), du_dvariance(n, 0.0);
  if (spec.needs_distorted_loss()) {
    MCConfig noise_mc;
    noise_mc.samples = cfg.loss.mc_samples;
    noise_mc.stream = streams.noise;
    noise_mc.perturb_scale = cfg.loss.perturb_scale;
    const DistortedLossGrad lp = aleatoric_loss_grad(logits.span(), variance, target, noise_mc);
    comp.loss_p = lp.value;
    comp.loss_udl = uncertainty_distorted_loss(lp.value, ly.value, cfg.loss.udl_alpha, cfg.loss.udl_variant);
    if (spec.distorted) {
      for (std::size_t c = 0; c < n; ++c) {
        du_dlogits[c] += lp.d_logits[c];
        du_dvariance[c] += lp.d_variance[c];
      }
    }
    if (spec.udl) {
      const double slope =
          uncertainty_distorted_loss_slope(lp.value, ly.value, cfg.loss.udl_alpha, cfg.loss.udl_variant);
      for (std::size_t c = 0; c < n; ++c) {
        du_dlogits[c] += slope * (lp.d_logits[c] - ly.d_logits[c]);
        du_dvariance[c] += slope * lp.d_variance[c];
      }
    }
  }
  if (spec.ve) {
    comp.loss_ve = variance_equalizer(variance, cfg.loss.sigma0);
    const std::vector<double> g = variance_equalizer_grad(variance, cfg.loss.sigma0);
    for (std::size_t c = 0; c < n; ++c) du_dvariance[c] += g[c];
  }
  out.bundle = total_uncertainty_loss(comp, cfg.mode, cfg.loss.eta_loss);

  RealArray d_log_variance({n});
  for (std::size_t c = 0; c < n; ++c) d_log_variance[c] = du_dvariance[c] * d_variance_d_s[c];
  out.seeds_u.push_back(HeadSeed{main, RealArray::vector(du_dlogits), std::move(d_log_variance)});

  if (spec.variance == VarianceSource::predictive && cfg.loss.entropy_gradient) {
    // variance_c = softplus(s_c) + H(p_bar), p_bar = mean_t softmax(y_t)
    double d_entropy = 0.0;
    for (double g : du_dvariance) d_entropy += g;
    const ProbabilityVector& mean = prediction.mean_probability;
    std::vector<double> d_mean(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
      if (mean[c] > 0.0) d_mean[c] = -(std::log(mean[c]) + 1.0) * d_entropy;
    }
    const double inv_t = 1.0 / static_cast<double>(prediction.heads.size());
    for (std::size_t h : prediction.heads) {
      const ProbabilityVector p = softmax(pass.heads[h].logits.span());
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += p[c] * d_mean[c];
      RealArray d_logits({n});
      for (std::size_t c = 0; c < n; ++c) d_logits[c] = inv_t * p[c] * (d_mean[c] - dot);
      out.seeds_u.push_back(HeadSeed{h, std::move(d_logits), RealArray{}});
    }
  }
  return out;
}

ExampleGradient accumulate_example_gradient(const ForwardPass& pass, const Parameters& params,
                                            const ExampleLosses& losses, const StepConfig& cfg, Parameters& grads,
                                            bool inject) {
  const ModeSpec spec = mode_spec(cfg.mode);
  ExampleGradient g;
  g.grad_y = backward_heads(pass, params, losses.seeds_y, grads);
  if (losses.seeds_u.empty()) {
    g.grad_u = GradientField{RealArray(g.grad_y.values.shape())};
    g.final_y = g.grad_y;
    backward_encoder(pass, params, g.grad_y, grads);
    return g;
  }
  const double eta = cfg.loss.eta_loss;
  g.grad_u = backward_heads(pass, params, losses.seeds_u, grads, eta);
  if (spec.gca && inject) {
    g.mask = build_certainty_mask(g.grad_u, g.grad_y, cfg.gca);
    if (cfg.gca.mask_scale == 1.0) {
      g.final_y = inject_residual_gradient(g.grad_y, g.mask);
    } else {
      CertaintyMask scaled = g.mask;
      for (double& v : scaled.values.values()) v *= cfg.gca.mask_scale;
      g.final_y = inject_residual_gradient(g.grad_y, scaled);
    }
  } else {
    g.final_y = g.grad_y;
  }
  GradientField upstream = g.final_y;
  for (std::size_t i = 0; i < upstream.values.size(); ++i) upstream.values[i] += eta * g.grad_u.values[i];
  backward_encoder(pass, params, upstream, grads);
  return g;
}

namespace {

void scale_all(Parameters& p, double s) {
  p.for_each([s](Partition, std::string_view, RealArray& a) {
    for (double& v : a.values()) v *= s;
  });
}

void apply_updates(TrainerState& state, const Parameters& grads, const StepConfig& cfg) {
  state.adam.step(state.params, grads, kClassificationPartitions);
  sgd_step(cfg.sgd, state.params, grads, kUncertaintyPartitions);
  ++state.step;
}

}  // namespace

StepOutput gca_training_step(std::span<const TrainingExample> batch, TrainerState& state, const StepConfig& cfg,
                             const ModelConfig& model_cfg, std::uint64_t seed) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const Parameters& params = state.params;
  Parameters grads = params.zeros_like();
  StepOutput out;
  out.per_example.reserve(batch.size());
  for (const TrainingExample& ex : batch) {
    ForwardPass pass = forward_encoder(ex.scene, ex.tokens, params, model_cfg);
    const ExampleStreams streams = ExampleStreams::derive(seed, state.step, ex.id);
    const ExampleLosses losses = evaluate_example(pass, params, ex.target, cfg, streams);
    accumulate_example_gradient(pass, params, losses, cfg, grads);
    out.per_example.push_back(losses.bundle);
  }
  scale_all(grads, 1.0 / static_cast<double>(batch.size()));
  out.mean = mean_bundle(out.per_example, cfg.loss.eta_loss);
  apply_updates(state, grads, cfg);
  return out;
}

StepOutput sce_training_step(std::span<const TrainingExample> batch, TrainerState& state, const StepConfig& cfg,
                             const ModelConfig& model_cfg, std::uint64_t seed) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const Parameters& params = state.params;
  Parameters grads = params.zeros_like();
  StepOutput out;
  for (const TrainingExample& ex : batch) {
    ForwardPass pass = forward_encoder(ex.scene, ex.tokens, params, model_cfg);
    const ExampleStreams streams = ExampleStreams::derive(seed, state.step, ex.id);
    DropoutSpec dropout{cfg.dropout, streams.dropout.child(0)};
    const std::size_t h = add_head_pass(pass, params, dropout);
    const LossGrad ce = cross_entropy_grad(pass.heads[h].logits.span(), ex.target);
    const HeadSeed seed_y{h, RealArray::vector(ce.d_logits), RealArray{}};
    const GradientField tap = backward_heads(pass, params, std::span(&seed_y, 1), grads);
    backward_encoder(pass, params, tap, grads);
    LossBundle b;
    b.mode = Mode::baseline;
    b.loss_y = ce.value;
    b.total = ce.value;
    out.per_example.push_back(b);
  }
  scale_all(grads, 1.0 / static_cast<double>(batch.size()));
  out.mean = mean_bundle(out.per_example, 0.0);
  apply_updates(state, grads, cfg);
  return out;
}

}  // namespace ucam
