// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Scalar/array primitives and seeded random streams shared by every module.
// All arithmetic is double precision.

#ifndef UCAM_NUMERICS_HPP_
#define UCAM_NUMERICS_HPP_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace ucam {

/// Dense row-major array of doubles with an explicit shape.
class RealArray {
 public:
  RealArray() = default;
  explicit RealArray(std::vector<std::size_t> shape, double fill = 0.0);
  RealArray(std::vector<std::size_t> shape, std::vector<double> values);

  static RealArray vector(std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> span() { return values_; }
  std::span<const double> span() const { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  bool same_shape(const RealArray& other) const { return shape_ == other.shape_; }
  void fill(double v);

  friend bool operator==(const RealArray&, const RealArray&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);

/// Nonnegative values summing to one (within 1e-9).
class ProbabilityVector {
 public:
  ProbabilityVector() = default;
  /// Throws std::invalid_argument unless `values` is a valid distribution.
  explicit ProbabilityVector(std::vector<double> values);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> span() const { return values_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> values_;
};

double softplus(double x);
RealArray softplus(const RealArray& x);
/// Derivative of softplus.
double sigmoid(double x);

/// Throws std::invalid_argument("empty reduction") on empty input.
double log_sum_exp(std::span<const double> x);
/// Reduces `axis`; the result drops that axis.
RealArray log_sum_exp(const RealArray& x, std::size_t axis);

ProbabilityVector softmax(std::span<const double> x);
/// Softmax along `axis`; shape preserved.
RealArray softmax(const RealArray& x, std::size_t axis);

/// Shannon entropy in nats with 0 log 0 = 0.
double entropy(std::span<const double> p);
double entropy(const ProbabilityVector& p);

/// Seeded random stream. Child streams are derived by hashing
/// (master_seed, stream_id), so a given pair always replays the same draws.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Independent stream keyed by (this stream's id, `id`); does not advance this one.
  RngStream child(std::uint64_t id) const;
  RngStream child(std::initializer_list<std::uint64_t> path) const;

  double normal();
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b);

RealArray gaussian_sample(RngStream& stream, std::vector<std::size_t> shape);

}  // namespace ucam

#endif  // UCAM_NUMERICS_HPP_
