// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "ucam/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace ucam {

double cross_entropy(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) throw std::out_of_range("target class out of range");
  return -(logits[target] - log_sum_exp(logits));
}

LossGrad cross_entropy_grad(std::span<const double> logits, std::size_t target) {
  LossGrad g;
  g.value = cross_entropy(logits, target);
  g.d_logits = softmax(logits).values();
  g.d_logits[target] -= 1.0;
  return g;
}

double perturb_scale(double variance, PerturbScale mode) {
  return mode == PerturbScale::stddev ? std::sqrt(variance) : variance;
}

namespace {

void check_variance(std::span<const double> logits, std::span<const double> sigma2) {
  if (sigma2.size() != logits.size()) throw std::invalid_argument("variance/logit size mismatch");
  for (double v : sigma2) {
    if (!(v >= 0.0)) throw std::invalid_argument("negative variance");
  }
}

std::vector<double> noise(const MCConfig& mc, std::size_t t, std::size_t n) {
  RngStream s = mc.stream.child(t);
  std::vector<double> eps(n);
  for (double& e : eps) e = s.normal();
  return eps;
}

}  // namespace

std::vector<double> distort_logits(std::span<const double> logits, std::span<const double> sigma2,
                                   const MCConfig& mc, std::size_t t) {
  check_variance(logits, sigma2);
  std::vector<double> out = noise(mc, t, logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out[c] = logits[c] + out[c] * perturb_scale(sigma2[c], mc.perturb_scale);
  }
  return out;
}

DistortedLossGrad aleatoric_loss_grad(std::span<const double> logits, std::span<const double> sigma2,
                                      std::size_t target, const MCConfig& mc) {
  if (mc.samples < 1) throw std::invalid_argument("Monte Carlo sample count must be >= 1");
  if (target >= logits.size()) throw std::out_of_range("target class out of range");
  check_variance(logits, sigma2);
  const std::size_t n = logits.size(), samples = mc.samples;

  std::vector<double> scale(n);
  for (std::size_t c = 0; c < n; ++c) scale[c] = perturb_scale(sigma2[c], mc.perturb_scale);

  // log q_t = log softmax(z_t)[target]
  std::vector<double> log_q(samples);
  std::vector<std::vector<double>> eps(samples), probs(samples);
  std::vector<double> z(n);
  for (std::size_t t = 0; t < samples; ++t) {
    eps[t] = noise(mc, t, n);
    for (std::size_t c = 0; c < n; ++c) z[c] = logits[c] + eps[t][c] * scale[c];
    log_q[t] = z[target] - log_sum_exp(z);
    probs[t] = softmax(z).values();
  }

  // L = -(logsumexp_t log q_t - log T)
  const double lse = log_sum_exp(log_q);
  const double sign = mc.unnegated ? -1.0 : 1.0;
  DistortedLossGrad g;
  g.value = sign * -(lse - std::log(static_cast<double>(samples)));
  g.d_logits.assign(n, 0.0);
  g.d_variance.assign(n, 0.0);
  std::vector<double> d_scale(n, 0.0);
  for (std::size_t t = 0; t < samples; ++t) {
    const double w = sign * std::exp(log_q[t] - lse);  // responsibility of sample t
    for (std::size_t c = 0; c < n; ++c) {
      const double dz = w * (probs[t][c] - (c == target ? 1.0 : 0.0));
      g.d_logits[c] += dz;
      d_scale[c] += dz * eps[t][c];
    }
  }
  for (std::size_t c = 0; c < n; ++c) {
    if (mc.perturb_scale == PerturbScale::variance) {
      g.d_variance[c] = d_scale[c];
    } else if (scale[c] > 0.0) {
      g.d_variance[c] = d_scale[c] / (2.0 * scale[c]);
    }
  }
  return g;
}

double aleatoric_loss(std::span<const double> logits, std::span<const double> sigma2, std::size_t target,
                      const MCConfig& mc) {
  return aleatoric_loss_grad(logits, sigma2, target, mc).value;
}

double predictive_loss(std::span<const double> logits, double sigma2_p, std::size_t target, const MCConfig& mc) {
  const std::vector<double> sigma2(logits.size(), sigma2_p);
  return aleatoric_loss(logits, sigma2, target, mc);
}

MCPrediction mc_predictive_distribution(ForwardPass& pass, const Parameters& params, double dropout_rate,
                                        const MCConfig& mc) {
  if (mc.samples < 1) throw std::invalid_argument("Monte Carlo sample count must be >= 1");
  MCPrediction out;
  std::vector<double> mean;
  for (std::size_t t = 0; t < mc.samples; ++t) {
    DropoutSpec dropout{dropout_rate, mc.stream.child(t)};
    const std::size_t h = add_head_pass(pass, params, dropout);
    out.heads.push_back(h);
    const HeadPass& head = pass.heads[h];
    const ProbabilityVector p = softmax(head.logits.span());
    if (mean.empty()) mean.assign(p.size(), 0.0);
    for (std::size_t c = 0; c < p.size(); ++c) mean[c] += p[c];
    std::vector<double> va(head.log_variance.size());
    double avg = 0.0;
    for (std::size_t c = 0; c < va.size(); ++c) {
      va[c] = softplus(head.log_variance[c]);
      avg += va[c];
    }
    out.sample_variance.push_back(avg / static_cast<double>(va.size()));
    out.aleatoric.push_back(std::move(va));
  }
  for (double& m : mean) m /= static_cast<double>(mc.samples);
  // renormalize against accumulated rounding so the invariant holds to 1e-9
  double total = 0.0;
  for (double m : mean) total += m;
  for (double& m : mean) m /= total;
  out.mean_probability = ProbabilityVector(std::move(mean));
  return out;
}

UncertaintyEstimate predictive_uncertainty(const ProbabilityVector& p, std::span<const double> sample_variance,
                                           std::vector<double> sigma2_a) {
  UncertaintyEstimate u;
  u.sigma2_a = std::move(sigma2_a);
  u.entropy = entropy(p);
  double total = 0.0;
  for (double v : sample_variance) {
    if (!(v >= 0.0)) throw std::invalid_argument("negative variance");
    total += v;
  }
  u.mean_aleatoric = sample_variance.empty() ? 0.0 : total / static_cast<double>(sample_variance.size());
  u.sigma2_p = u.entropy + u.mean_aleatoric;
  return u;
}

double variance_equalizer(std::span<const double> sigma2, double sigma0) {
  const double ref = std::exp(sigma0 * sigma0);
  double total = 0.0;
  for (double v : sigma2) {
    if (!(v >= 0.0)) throw std::invalid_argument("negative variance");
    total += std::max(std::exp(v) - ref, 0.0);
  }
  return total;
}

std::vector<double> variance_equalizer_grad(std::span<const double> sigma2, double sigma0) {
  const double ref = std::exp(sigma0 * sigma0);
  std::vector<double> g(sigma2.size(), 0.0);
  for (std::size_t c = 0; c < sigma2.size(); ++c) {
    const double e = std::exp(sigma2[c]);
    if (e > ref) g[c] = e;
  }
  return g;
}

double uncertainty_distorted_loss(double loss_p, double loss_y, double alpha, UdlVariant variant) {
  if (variant == UdlVariant::algorithm) {
    const double e = std::exp(loss_y - loss_p);
    return e * e;
  }
  const double delta = loss_p - loss_y;
  return delta < 0.0 ? alpha * std::expm1(delta) : delta;
}

double uncertainty_distorted_loss_slope(double loss_p, double loss_y, double alpha, UdlVariant variant) {
  if (variant == UdlVariant::algorithm) {
    const double e = std::exp(loss_y - loss_p);
    return -2.0 * e * e;
  }
  const double delta = loss_p - loss_y;
  return delta < 0.0 ? alpha * std::exp(delta) : 1.0;
}

ModeSpec mode_spec(Mode mode) {
  ModeSpec s;
  switch (mode) {
    case Mode::baseline: break;
    case Mode::ve: s.ve = true; break;
    case Mode::udl: s.udl = true; break;
    case Mode::aul: s.distorted = true; break;
    case Mode::pul: s.distorted = true; s.variance = VarianceSource::predictive; break;
    case Mode::udl_ve: s.udl = s.ve = true; break;
    case Mode::aul_ve: s.distorted = s.ve = true; break;
    case Mode::pul_ve: s.distorted = s.ve = true; s.variance = VarianceSource::predictive; break;
    case Mode::aul_udl: s.distorted = s.udl = true; break;
    case Mode::pul_udl: s.distorted = s.udl = true; s.variance = VarianceSource::predictive; break;
    case Mode::a_gca: s.distorted = s.ve = s.udl = s.gca = true; break;
    case Mode::p_gca:
      s.distorted = s.ve = s.udl = s.gca = true;
      s.variance = VarianceSource::predictive;
      break;
  }
  return s;
}

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::baseline: return "baseline";
    case Mode::ve: return "ve";
    case Mode::udl: return "udl";
    case Mode::aul: return "aul";
    case Mode::pul: return "pul";
    case Mode::udl_ve: return "udl+ve";
    case Mode::aul_ve: return "aul+ve";
    case Mode::pul_ve: return "pul+ve";
    case Mode::aul_udl: return "aul+udl";
    case Mode::pul_udl: return "pul+udl";
    case Mode::a_gca: return "a-gca";
    case Mode::p_gca: return "p-gca";
  }
  return "?";
}

const std::vector<Mode>& all_modes() {
  static const std::vector<Mode> modes = {Mode::baseline, Mode::ve,     Mode::udl,     Mode::aul,
                                          Mode::pul,      Mode::udl_ve, Mode::aul_ve,  Mode::pul_ve,
                                          Mode::aul_udl,  Mode::pul_udl, Mode::a_gca, Mode::p_gca};
  return modes;
}

std::optional<Mode> parse_mode(std::string_view name) {
  std::string lower;
  for (char c : name) {
    if (c == ' ') continue;
    lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  for (Mode m : all_modes()) {
    if (mode_name(m) == lower) return m;
  }
  return std::nullopt;
}

LossBundle total_uncertainty_loss(const LossComponents& components, Mode mode, double eta_loss) {
  const ModeSpec spec = mode_spec(mode);
  if (spec.needs_distorted_loss() && !components.loss_p) {
    throw std::invalid_argument(std::string("mode ") + std::string(mode_name(mode)) +
                                " requires a Monte Carlo configuration");
  }
  LossBundle b;
  b.mode = mode;
  b.loss_y = components.loss_y;
  b.loss_p = spec.distorted ? *components.loss_p : 0.0;
  b.loss_ve = spec.ve ? components.loss_ve : 0.0;
  b.loss_udl = spec.udl ? components.loss_udl : 0.0;
  b.loss_u = b.loss_p + b.loss_ve + b.loss_udl;
  b.total = b.loss_y + eta_loss * b.loss_u;
  return b;
}

double total_cost(std::span<const LossBundle> bundles, double eta_loss) {
  if (bundles.empty()) throw std::invalid_argument("empty batch");
  double total = 0.0;
  for (const LossBundle& b : bundles) total += b.loss_y + eta_loss * b.loss_u;
  return total / static_cast<double>(bundles.size());
}

LossBundle mean_bundle(std::span<const LossBundle> bundles, double eta_loss) {
  if (bundles.empty()) throw std::invalid_argument("empty batch");
  LossBundle m;
  m.mode = bundles.front().mode;
  for (const LossBundle& b : bundles) {
    m.loss_y += b.loss_y;
    m.loss_p += b.loss_p;
    m.loss_ve += b.loss_ve;
    m.loss_udl += b.loss_udl;
    m.loss_u += b.loss_u;
  }
  const double n = static_cast<double>(bundles.size());
  m.loss_y /= n;
  m.loss_p /= n;
  m.loss_ve /= n;
  m.loss_udl /= n;
  m.loss_u /= n;
  m.total = total_cost(bundles, eta_loss);
  return m;
}

}  // namespace ucam
