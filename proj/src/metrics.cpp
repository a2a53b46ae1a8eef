// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "ucam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace ucam {

AttentionMapNormalized::AttentionMapNormalized(RealArray map) : map_(std::move(map)) {
  if (map_.rank() != 2 || map_.empty()) throw std::invalid_argument("attention map must be a nonempty 2-D array");
  double total = 0.0;
  for (double v : map_.span()) {
    if (!(v >= 0.0)) throw std::invalid_argument("unnormalized attention map");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("unnormalized attention map");
}

AttentionMapNormalized AttentionMapNormalized::normalize(RealArray map) {
  double total = 0.0;
  for (double v : map.span()) total += v;
  if (!(total > 0.0)) throw std::invalid_argument("cannot normalize a zero map");
  for (double& v : map.values()) v /= total;
  return AttentionMapNormalized(std::move(map));
}

double vqa_accuracy(std::string_view predicted, std::span<const std::string> annotations) {
  if (annotations.size() != 10) throw std::invalid_argument("expected exactly 10 annotations");
  const auto matches = std::count(annotations.begin(), annotations.end(), predicted);
  return std::min(static_cast<double>(matches) / 3.0, 1.0);
}

std::vector<double> fractional_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) share rank mean(i+1..j+1)
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson: size mismatch");
  const std::size_t n = a.size();
  if (n < 2) return std::nullopt;
  auto constant = [](std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
  };
  if (constant(a) || constant(b)) return std::nullopt;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double rank_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("rank_correlation: dimension mismatch");
  const std::vector<double> ra = fractional_ranks(a);
  const std::vector<double> rb = fractional_ranks(b);
  const std::optional<double> r = pearson(ra, rb);
  if (!r) throw std::domain_error("undefined correlation");
  return *r;
}

double rank_correlation(const AttentionMapNormalized& a, const AttentionMapNormalized& b) {
  if (a.map().shape() != b.map().shape()) throw std::invalid_argument("rank_correlation: dimension mismatch");
  return rank_correlation(a.map().span(), b.map().span());
}

RealArray area_downsample(const RealArray& map, std::size_t out_rows, std::size_t out_cols) {
  const std::size_t rows = map.dim(0), cols = map.dim(1);
  RealArray out({out_rows, out_cols});
  // Each source cell spreads its mass over the output cells it overlaps, in
  // proportion to overlap area.
  const double sy = static_cast<double>(out_rows) / static_cast<double>(rows);
  const double sx = static_cast<double>(out_cols) / static_cast<double>(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double y0 = static_cast<double>(r) * sy, y1 = static_cast<double>(r + 1) * sy;
    for (std::size_t c = 0; c < cols; ++c) {
      const double x0 = static_cast<double>(c) * sx, x1 = static_cast<double>(c + 1) * sx;
      const double mass = map[r * cols + c];
      const double area = (y1 - y0) * (x1 - x0);
      for (auto oy = static_cast<std::size_t>(std::floor(y0)); oy < out_rows && static_cast<double>(oy) < y1; ++oy) {
        const double hy = std::min(y1, static_cast<double>(oy + 1)) - std::max(y0, static_cast<double>(oy));
        if (hy <= 0.0) continue;
        for (auto ox = static_cast<std::size_t>(std::floor(x0)); ox < out_cols && static_cast<double>(ox) < x1;
             ++ox) {
          const double hx = std::min(x1, static_cast<double>(ox + 1)) - std::max(x0, static_cast<double>(ox));
          if (hx <= 0.0) continue;
          out[oy * out_cols + ox] += mass * hy * hx / area;
        }
      }
    }
  }
  return out;
}

namespace {

// Transportation problem solved by successive shortest paths with Johnson
// potentials on the dense bipartite residual graph.
double transport_cost(std::span<const double> supply, std::span<const double> demand,
                      const std::vector<std::vector<double>>& cost) {
  constexpr double kEps = 1e-15;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const std::size_t n = supply.size(), m = demand.size();
  // nodes: 0 = source, 1..n supplies, n+1..n+m demands, n+m+1 = sink
  const std::size_t nodes = n + m + 2, src = 0, sink = n + m + 1;
  std::vector<double> sent(n, 0.0), received(m, 0.0);
  std::vector<std::vector<double>> flow(n, std::vector<double>(m, 0.0));
  std::vector<double> potential(nodes, 0.0), dist(nodes);
  std::vector<std::size_t> parent(nodes);
  std::vector<bool> done(nodes);

  double remaining = 0.0;
  for (double s : supply) remaining += s;

  for (std::size_t iter = 0; remaining > 1e-14 && iter < 100 * (n + m + 1); ++iter) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(done.begin(), done.end(), false);
    dist[src] = 0.0;
    for (;;) {
      std::size_t u = nodes;
      double best = kInf;
      for (std::size_t v = 0; v < nodes; ++v) {
        if (!done[v] && dist[v] < best) {
          best = dist[v];
          u = v;
        }
      }
      if (u == nodes) break;
      done[u] = true;
      auto relax = [&](std::size_t v, double c) {
        const double reduced = std::max(c + potential[u] - potential[v], 0.0);
        if (dist[u] + reduced < dist[v]) {
          dist[v] = dist[u] + reduced;
          parent[v] = u;
        }
      };
      if (u == src) {
        for (std::size_t i = 0; i < n; ++i) {
          if (supply[i] - sent[i] > kEps) relax(1 + i, 0.0);
        }
      } else if (u <= n) {
        const std::size_t i = u - 1;
        for (std::size_t j = 0; j < m; ++j) relax(n + 1 + j, cost[i][j]);
      } else if (u < sink) {
        const std::size_t j = u - n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          if (flow[i][j] > kEps) relax(1 + i, -cost[i][j]);
        }
        if (demand[j] - received[j] > kEps) relax(sink, 0.0);
      }
    }
    if (dist[sink] == kInf) break;
    for (std::size_t v = 0; v < nodes; ++v) {
      if (dist[v] < kInf) potential[v] += dist[v];
    }
    // bottleneck along the path
    double push = kInf;
    for (std::size_t v = sink; v != src; v = parent[v]) {
      const std::size_t u = parent[v];
      if (u == src) {
        push = std::min(push, supply[v - 1] - sent[v - 1]);
      } else if (v == sink) {
        push = std::min(push, demand[u - n - 1] - received[u - n - 1]);
      } else if (u > n) {  // backward edge demand -> supply
        push = std::min(push, flow[v - 1][u - n - 1]);
      }
    }
    for (std::size_t v = sink; v != src; v = parent[v]) {
      const std::size_t u = parent[v];
      if (u == src) {
        sent[v - 1] += push;
      } else if (v == sink) {
        received[u - n - 1] += push;
      } else if (u <= n) {
        flow[u - 1][v - n - 1] += push;
      } else {
        flow[v - 1][u - n - 1] -= push;
      }
    }
    remaining -= push;
  }

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) total += flow[i][j] * cost[i][j];
  }
  return total;
}

}  // namespace

double emd_2d(const AttentionMapNormalized& a, const AttentionMapNormalized& b) {
  if (a.map().shape() != b.map().shape()) throw std::invalid_argument("emd_2d: dimension mismatch");
  RealArray ma = a.map(), mb = b.map();
  if (ma.dim(0) > 16 || ma.dim(1) > 16) {
    ma = area_downsample(ma, 14, 14);
    mb = area_downsample(mb, 14, 14);
  }
  const std::size_t cols = ma.dim(1);
  std::vector<double> supply, demand;
  std::vector<std::pair<double, double>> src_xy, dst_xy;
  for (std::size_t k = 0; k < ma.size(); ++k) {
    // common mass stays in place at zero cost
    const double common = std::min(ma[k], mb[k]);
    const double y = static_cast<double>(k / cols), x = static_cast<double>(k % cols);
    if (ma[k] - common > 0.0) {
      supply.push_back(ma[k] - common);
      src_xy.emplace_back(y, x);
    }
    if (mb[k] - common > 0.0) {
      demand.push_back(mb[k] - common);
      dst_xy.emplace_back(y, x);
    }
  }
  if (supply.empty() || demand.empty()) return 0.0;
  // balance rounding residue between the two sides
  double ts = 0.0, td = 0.0;
  for (double s : supply) ts += s;
  for (double d : demand) td += d;
  const double fix = td / ts;
  for (double& s : supply) s *= fix;
  std::vector<std::vector<double>> cost(supply.size(), std::vector<double>(demand.size()));
  for (std::size_t i = 0; i < supply.size(); ++i) {
    for (std::size_t j = 0; j < demand.size(); ++j) {
      cost[i][j] = std::hypot(src_xy[i].first - dst_xy[j].first, src_xy[i].second - dst_xy[j].second);
    }
  }
  return transport_cost(supply, demand, cost);
}

double classification_error(double p_misclassification) {
  if (!(p_misclassification >= 0.0) || p_misclassification >= 1.0) {
    throw std::invalid_argument("misclassification probability must lie in [0, 1)");
  }
  return -std::log1p(-p_misclassification);
}

double top2_gap(std::span<const double> logits) {
  if (logits.size() < 2) throw std::invalid_argument("top2_gap needs at least two classes");
  std::vector<double> p = softmax(logits).values();
  std::partial_sort(p.begin(), p.begin() + 2, p.end(), std::greater<>());
  return p[0] - p[1];
}

std::optional<double> auroc(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw std::invalid_argument("auroc: size mismatch");
  const std::vector<double> ranks = fractional_ranks(scores);
  double rank_sum = 0.0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (positive[i]) {
      rank_sum += ranks[i];
      ++npos;
    }
  }
  const std::size_t nneg = scores.size() - npos;
  if (npos == 0 || nneg == 0) return std::nullopt;
  const double np = static_cast<double>(npos), nn = static_cast<double>(nneg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

UncertaintyReport uncertainty_error_analysis(std::span<const UncertaintyRecord> records) {
  if (records.size() < 2) throw std::invalid_argument("uncertainty analysis needs at least two records");
  UncertaintyReport r;
  r.count = records.size();
  std::vector<double> sigma, err;
  std::vector<bool> wrong;
  for (const UncertaintyRecord& rec : records) {
    sigma.push_back(rec.sigma2_p);
    err.push_back(rec.class_error);
    wrong.push_back(!rec.correct);
    if (rec.correct) {
      r.mean_sigma2_correct += rec.sigma2_p;
      ++r.n_correct;
    } else {
      r.mean_sigma2_incorrect += rec.sigma2_p;
      ++r.n_incorrect;
    }
  }
  if (r.n_correct) r.mean_sigma2_correct /= static_cast<double>(r.n_correct);
  if (r.n_incorrect) r.mean_sigma2_incorrect /= static_cast<double>(r.n_incorrect);
  r.pearson_uncertainty_error = pearson(sigma, err);
  // std::vector<bool> has no contiguous storage
  std::unique_ptr<bool[]> flags(new bool[wrong.size()]);
  for (std::size_t i = 0; i < wrong.size(); ++i) flags[i] = wrong[i];
  r.auroc = auroc(sigma, std::span<const bool>(flags.get(), wrong.size()));
  return r;
}

}  // namespace ucam
