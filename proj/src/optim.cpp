// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "ucam/optim.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ucam {

namespace {

bool selected(Partition p, std::span<const Partition> partitions) {
  return std::find(partitions.begin(), partitions.end(), p) != partitions.end();
}

template <class Fn>
void zip4(Parameters& a, const Parameters& b, Parameters& c, Parameters& d, Fn&& fn) {
  std::vector<const RealArray*> bs;
  std::vector<RealArray*> cs, ds;
  b.for_each([&](Partition, std::string_view, const RealArray& x) { bs.push_back(&x); });
  c.for_each([&](Partition, std::string_view, RealArray& x) { cs.push_back(&x); });
  d.for_each([&](Partition, std::string_view, RealArray& x) { ds.push_back(&x); });
  std::size_t k = 0;
  a.for_each([&](Partition p, std::string_view, RealArray& x) {
    fn(p, x, *bs[k], *cs[k], *ds[k]);
    ++k;
  });
}

}  // namespace

Adam::Adam(AdamConfig cfg, const Parameters& like) : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {}

void Adam::step(Parameters& params, const Parameters& grads, std::span<const Partition> partitions) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  zip4(params, grads, m_, v_, [&](Partition p, RealArray& w, const RealArray& g, RealArray& m, RealArray& v) {
    if (!selected(p, partitions)) return;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      w[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
    }
  });
}

void sgd_step(const SgdConfig& cfg, Parameters& params, const Parameters& grads,
              std::span<const Partition> partitions) {
  std::vector<const RealArray*> gs;
  grads.for_each([&](Partition, std::string_view, const RealArray& x) { gs.push_back(&x); });
  std::size_t k = 0;
  params.for_each([&](Partition p, std::string_view, RealArray& w) {
    const RealArray& g = *gs[k++];
    if (!selected(p, partitions)) return;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.lr * g[i];
  });
}

}  // namespace ucam
