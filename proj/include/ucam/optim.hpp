// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef UCAM_OPTIM_HPP_
#define UCAM_OPTIM_HPP_

#include <cstdint>
#include <span>

#include "ucam/model.hpp"

namespace ucam {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.95;
  double beta2 = 0.99;
  double epsilon = 1e-8;
};

struct SgdConfig {
  double lr = 0.004;
};

/// Adam over a subset of partitions; moments are kept for every array so the
/// state has the same layout as Parameters.
class Adam {
 public:
  Adam(AdamConfig cfg, const Parameters& like);

  void step(Parameters& params, const Parameters& grads, std::span<const Partition> partitions);
  std::uint64_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  Parameters m_;
  Parameters v_;
  std::uint64_t t_ = 0;
};

void sgd_step(const SgdConfig& cfg, Parameters& params, const Parameters& grads,
              std::span<const Partition> partitions);

}  // namespace ucam

#endif  // UCAM_OPTIM_HPP_
