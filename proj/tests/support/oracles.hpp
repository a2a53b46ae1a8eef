// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used only by tests: central finite
// differences, brute-force rank correlation, and a dense simplex solver for
// the transportation LP.

#ifndef UCAM_TESTS_ORACLES_HPP_
#define UCAM_TESTS_ORACLES_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "ucam/gca.hpp"
#include "ucam/losses.hpp"
#include "ucam/model.hpp"

namespace ucam::testing {

/// Central differences of `f` with respect to every entry of `x`.
inline std::vector<double> numeric_gradient(const std::function<double()>& f, RealArray& x, double step = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f();
    x[i] = saved - step;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||), or the absolute difference norm when both are tiny.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max(std::sqrt(std::max(na, nb)), 1e-8);
  return std::sqrt(diff) / denom;
}

/// Rank by counting: 1 + #smaller + (#equal others) / 2.
inline double brute_rank_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  auto ranks = [n](const std::vector<double>& x) {
    std::vector<long double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      long double less = 0, equal = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (x[j] < x[i]) less += 1;
        if (j != i && x[j] == x[i]) equal += 1;
      }
      r[i] = 1 + less + equal / 2;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  long double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  long double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return static_cast<double>(sab / std::sqrt(saa * sbb));
}

/// Minimizes c.x subject to A x = b, x >= 0 (b >= 0, A full row rank) with a
/// two-phase tableau simplex and Bland's rule.
inline long double simplex_minimize(const std::vector<std::vector<long double>>& a, const std::vector<long double>& b,
                                    const std::vector<long double>& c) {
  constexpr long double kTol = 1e-13L;
  const std::size_t m = a.size(), n = c.size(), cols = n + m;
  std::vector<std::vector<long double>> t(m, std::vector<long double>(cols + 1, 0));
  std::vector<std::size_t> basis(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) t[i][j] = a[i][j];
    t[i][n + i] = 1;
    t[i][cols] = b[i];
    basis[i] = n + i;
  }
  auto pivot = [&](std::size_t row, std::size_t col) {
    const long double p = t[row][col];
    for (auto& v : t[row]) v /= p;
    for (std::size_t i = 0; i < m; ++i) {
      if (i == row || t[i][col] == 0) continue;
      const long double f = t[i][col];
      for (std::size_t j = 0; j <= cols; ++j) t[i][j] -= f * t[row][j];
    }
    basis[row] = col;
  };
  auto run = [&](const std::vector<long double>& cost, std::size_t allowed) {
    for (;;) {
      std::size_t enter = cols;
      for (std::size_t j = 0; j < allowed; ++j) {
        long double r = cost[j];
        for (std::size_t i = 0; i < m; ++i) r -= cost[basis[i]] * t[i][j];
        if (r < -kTol) {
          enter = j;
          break;
        }
      }
      if (enter == cols) return;
      std::size_t leave = m;
      long double best = std::numeric_limits<long double>::infinity();
      for (std::size_t i = 0; i < m; ++i) {
        if (t[i][enter] > kTol) {
          const long double ratio = t[i][cols] / t[i][enter];
          if (ratio < best - kTol || (ratio <= best + kTol && leave < m && basis[i] < basis[leave])) {
            best = ratio;
            leave = i;
          }
        }
      }
      if (leave == m) throw std::runtime_error("unbounded LP");
      pivot(leave, enter);
    }
  };
  std::vector<long double> phase1(cols, 0);
  for (std::size_t j = n; j < cols; ++j) phase1[j] = 1;
  run(phase1, cols);
  for (std::size_t i = 0; i < m; ++i) {
    if (basis[i] < n) continue;
    if (t[i][cols] > 1e-10L) throw std::runtime_error("infeasible LP");
    for (std::size_t j = 0; j < n; ++j) {
      if (std::fabs(t[i][j]) > kTol) {
        pivot(i, j);
        break;
      }
    }
  }
  std::vector<long double> phase2(cols, 0);
  for (std::size_t j = 0; j < n; ++j) phase2[j] = c[j];
  run(phase2, n);
  long double value = 0;
  for (std::size_t i = 0; i < m; ++i) value += phase2[basis[i]] * t[i][cols];
  return value;
}

/// Earth mover distance between two [rows, cols] maps as a transportation LP.
inline double lp_emd(const RealArray& a, const RealArray& b) {
  const std::size_t rows = a.dim(0), cols = a.dim(1), n = rows * cols;
  // variables x[i][j] for i, j over cells; constraints: row sums (n) and the
  // first n-1 column sums (the last is implied by balance)
  std::vector<std::vector<long double>> mat(2 * n - 1, std::vector<long double>(n * n, 0));
  std::vector<long double> rhs(2 * n - 1), cost(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const long double dy = static_cast<long double>(i / cols) - static_cast<long double>(j / cols);
      const long double dx = static_cast<long double>(i % cols) - static_cast<long double>(j % cols);
      cost[i * n + j] = std::sqrt(dy * dy + dx * dx);
      mat[i][i * n + j] = 1;
      if (j + 1 < n) mat[n + j][i * n + j] = 1;
    }
    rhs[i] = a[i];
    if (i + 1 < n) rhs[n + i] = b[i];
  }
  // make the column constraints consistent with the row totals exactly
  long double ta = 0, tb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ta += a[i];
    tb += b[i];
  }
  for (std::size_t j = 0; j + 1 < n; ++j) rhs[n + j] *= ta / tb;
  return static_cast<double>(simplex_minimize(mat, rhs, cost));
}

/// Random nonnegative map summing to one; `tie_levels` > 0 quantizes values to force ties.
inline RealArray random_map(std::mt19937_64& rng, std::size_t rows, std::size_t cols, int tie_levels = 0,
                            double zero_fraction = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RealArray m({rows, cols});
  double total = 0.0;
  for (double& v : m.values()) {
    v = u(rng);
    if (tie_levels > 0) v = std::floor(v * tie_levels) + 1.0;
    if (u(rng) < zero_fraction) v = 0.0;
    total += v;
  }
  if (total == 0.0) {
    m[0] = 1.0;
    total = 1.0;
  }
  for (double& v : m.values()) v /= total;
  return m;
}

/// Small model configuration for gradient checks.
inline ModelConfig small_config(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dim(2, 5);
  ModelConfig cfg;
  cfg.grid_rows = dim(rng) - 1;
  cfg.grid_cols = dim(rng) - 1;
  cfg.cell_kinds = 5;
  cfg.vocab_size = 6;
  cfg.image_channels = dim(rng);
  cfg.question_dim = dim(rng);
  cfg.attention_dim = dim(rng);
  cfg.feature_dim = dim(rng);
  cfg.hidden = dim(rng) + 2;
  cfg.answers = dim(rng);
  return cfg;
}

inline Scene random_scene(std::mt19937_64& rng, const ModelConfig& cfg) {
  Scene s{cfg.grid_rows, cfg.grid_cols, std::vector<std::uint8_t>(cfg.cells())};
  std::uniform_int_distribution<int> kind(0, static_cast<int>(cfg.cell_kinds) - 1);
  for (auto& c : s.cells) c = static_cast<std::uint8_t>(kind(rng));
  return s;
}

inline std::vector<std::size_t> random_tokens(std::mt19937_64& rng, const ModelConfig& cfg) {
  std::uniform_int_distribution<std::size_t> len(1, 5), tok(0, cfg.vocab_size - 1);
  std::vector<std::size_t> t(len(rng));
  for (auto& x : t) x = tok(rng);
  return t;
}

/// Parameters with every bias randomized too, so no gradient is trivially structured.
inline Parameters random_parameters(std::mt19937_64& rng, const ModelConfig& cfg) {
  Parameters p = Parameters::initialize(cfg, rng());
  std::normal_distribution<double> n(0.0, 0.3);
  p.for_each([&](Partition, std::string_view, RealArray& a) {
    for (double& v : a.values()) v += n(rng);
  });
  return p;
}


struct GradientCheck {
  std::array<double, 6> partition_error{};  // indexed by Partition
  double tap_error = 0.0;
  double worst() const {
    double w = tap_error;
    for (double e : partition_error) w = std::max(w, e);
    return w;
  }
};

namespace detail {

inline void compare_partitions(GradientCheck& out, Parameters& params, const Parameters& analytic,
                               const std::function<double()>& f) {
  std::vector<const RealArray*> grads;
  analytic.for_each([&](Partition, std::string_view, const RealArray& g) { grads.push_back(&g); });
  std::array<std::vector<double>, 6> num, ana;
  std::size_t k = 0;
  params.for_each([&](Partition p, std::string_view, RealArray& w) {
    const std::vector<double> g = numeric_gradient(f, w);
    auto& nv = num[static_cast<std::size_t>(p)];
    auto& av = ana[static_cast<std::size_t>(p)];
    nv.insert(nv.end(), g.begin(), g.end());
    av.insert(av.end(), grads[k]->values().begin(), grads[k]->values().end());
    ++k;
  });
  for (std::size_t p = 0; p < 6; ++p) out.partition_error[p] = relative_error(ana[p], num[p]);
}

}  // namespace detail

/// Loss = CE(logits, target) + r . s on one dropout head pass of a random
/// small model. Compares every partition and the tap against central differences.
inline GradientCheck check_model_gradients(std::mt19937_64& rng, double dropout_rate = 0.3) {
  const ModelConfig cfg = small_config(rng);
  Parameters params = random_parameters(rng, cfg);
  const Scene scene = random_scene(rng, cfg);
  const std::vector<std::size_t> tokens = random_tokens(rng, cfg);
  const std::size_t target = rng() % cfg.answers;
  const std::uint64_t mask_seed = rng();
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> r(cfg.answers);
  for (double& v : r) v = n(rng);

  auto head_loss = [&](const RealArray& logits, const RealArray& s) {
    double l = cross_entropy(logits.span(), target);
    for (std::size_t c = 0; c < r.size(); ++c) l += r[c] * s[c];
    return l;
  };
  auto objective = [&]() {
    ForwardPass pass = forward_encoder(scene, tokens, params, cfg);
    DropoutSpec d{dropout_rate, RngStream(mask_seed, 1)};
    const std::size_t h = add_head_pass(pass, params, d);
    return head_loss(pass.heads[h].logits, pass.heads[h].log_variance);
  };

  ForwardPass pass = forward_encoder(scene, tokens, params, cfg);
  DropoutSpec d{dropout_rate, RngStream(mask_seed, 1)};
  const std::size_t h = add_head_pass(pass, params, d);
  const LossGrad ce = cross_entropy_grad(pass.heads[h].logits.span(), target);
  const HeadSeed seed{h, RealArray::vector(ce.d_logits), RealArray::vector(r)};
  const BackwardResult res = backward(pass, params, std::span(&seed, 1));

  GradientCheck out;
  detail::compare_partitions(out, params, res.grads, objective);

  AttendedFeatureMap features = pass.attention.features;
  auto from_tap = [&]() {
    DropoutSpec dd{dropout_rate, RngStream(mask_seed, 1)};
    const ClassifierState cs = classify(features, params, dd);
    return head_loss(predict_logits(cs.hidden(), params), predict_log_variance(cs.hidden(), params));
  };
  const std::vector<double> tap_fd = numeric_gradient(from_tap, features.map);
  out.tap_error = relative_error(res.tap.values.span(), tap_fd);
  return out;
}

/// Full per-example training objective L_y + eta L_u for `mode` (no mask
/// injection) against central differences, with all random streams held fixed.
inline GradientCheck check_training_gradients(std::mt19937_64& rng, Mode mode) {
  const ModelConfig cfg = small_config(rng);
  Parameters params = random_parameters(rng, cfg);
  const Scene scene = random_scene(rng, cfg);
  const std::vector<std::size_t> tokens = random_tokens(rng, cfg);
  const std::size_t target = rng() % cfg.answers;
  StepConfig step;
  step.mode = mode;
  step.loss.mc_samples = 4;
  step.loss.entropy_gradient = true;
  const ExampleStreams streams = ExampleStreams::derive(rng(), 0, 1);

  auto objective = [&]() {
    ForwardPass pass = forward_encoder(scene, tokens, params, cfg);
    return evaluate_example(pass, params, target, step, streams).bundle.total;
  };
  ForwardPass pass = forward_encoder(scene, tokens, params, cfg);
  const ExampleLosses losses = evaluate_example(pass, params, target, step, streams);
  Parameters grads = params.zeros_like();
  const ExampleGradient eg = accumulate_example_gradient(pass, params, losses, step, grads, false);

  GradientCheck out;
  detail::compare_partitions(out, params, grads, objective);

  // tap: d(L_y + eta L_u)/dF
  AttendedFeatureMap features = pass.attention.features;
  auto from_tap = [&]() {
    ForwardPass p2 = pass;
    p2.heads.clear();
    p2.attention.features = features;
    return evaluate_example(p2, params, target, step, streams).bundle.total;
  };
  const std::vector<double> tap_fd = numeric_gradient(from_tap, features.map);
  std::vector<double> tap(eg.grad_y.values.size());
  for (std::size_t i = 0; i < tap.size(); ++i) tap[i] = eg.grad_y.values[i] + step.loss.eta_loss * eg.grad_u.values[i];
  out.tap_error = relative_error(tap, tap_fd);
  return out;
}

/// Independent large-sample estimate of -log E[softmax(y + eps * sqrt(sigma2))_target].
/// Also returns the delta-method standard error of a `small_t`-sample estimator.
struct AulOracle {
  double value = 0.0;
  double oracle_se = 0.0;
  double small_t_se = 0.0;
};

inline AulOracle aul_oracle(const std::vector<double>& logits, const std::vector<double>& sigma2, std::size_t target,
                            std::size_t samples, std::size_t small_t, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  long double sum = 0, sum2 = 0;
  std::vector<double> y(logits.size());
  for (std::size_t t = 0; t < samples; ++t) {
    for (std::size_t c = 0; c < y.size(); ++c) y[c] = logits[c] + n(eng) * std::sqrt(sigma2[c]);
    long double z = 0;
    for (double v : y) z += std::exp(static_cast<long double>(v - y[target]));
    const long double q = 1 / z;
    sum += q;
    sum2 += q * q;
  }
  const long double mean = sum / samples;
  const long double var = sum2 / samples - mean * mean;
  const long double sd = std::sqrt(std::max(var, 0.0L));
  AulOracle o;
  o.value = static_cast<double>(-std::log(mean));
  o.oracle_se = static_cast<double>(sd / (mean * std::sqrt(static_cast<long double>(samples))));
  o.small_t_se = static_cast<double>(sd / (mean * std::sqrt(static_cast<long double>(small_t))));
  return o;
}

/// Least-squares slope of log(sd of repeated T-sample estimates) against log T.
inline double aul_se_slope(const std::vector<double>& logits, const std::vector<double>& sigma2, std::size_t target,
                           const std::vector<std::size_t>& sample_counts, std::size_t repeats, std::uint64_t seed) {
  std::vector<double> xs, ys;
  for (std::size_t t : sample_counts) {
    std::vector<double> est;
    for (std::size_t r = 0; r < repeats; ++r) {
      MCConfig mc;
      mc.samples = t;
      mc.stream = RngStream(seed, (t << 20) + r);
      est.push_back(aleatoric_loss(logits, sigma2, target, mc));
    }
    double m = 0;
    for (double e : est) m += e;
    m /= static_cast<double>(est.size());
    double v = 0;
    for (double e : est) v += (e - m) * (e - m);
    v /= static_cast<double>(est.size() - 1);
    xs.push_back(std::log(static_cast<double>(t)));
    ys.push_back(0.5 * std::log(v));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace ucam::testing

#endif  // UCAM_TESTS_ORACLES_HPP_
