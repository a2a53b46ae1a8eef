// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "ucam/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace ucam {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

RealArray::RealArray(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

RealArray::RealArray(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_size(shape_)) {
    throw std::invalid_argument("RealArray: value count does not match shape");
  }
}

RealArray RealArray::vector(std::vector<double> values) {
  std::vector<std::size_t> shape{values.size()};
  return RealArray(std::move(shape), std::move(values));
}

void RealArray::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

ProbabilityVector::ProbabilityVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw std::invalid_argument("ProbabilityVector: empty");
  double total = 0.0;
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("ProbabilityVector: value outside [0,1]");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("ProbabilityVector: does not sum to 1");
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

RealArray softplus(const RealArray& x) {
  RealArray out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = softplus(x[i]);
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("empty reduction");
  if (x.size() == 1) return x[0];
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

namespace {

struct AxisView {
  std::size_t outer = 1;
  std::size_t extent = 0;
  std::size_t inner = 1;
};

AxisView axis_view(const RealArray& x, std::size_t axis) {
  if (axis >= x.rank()) throw std::invalid_argument("axis out of range");
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= x.dim(i);
  v.extent = x.dim(axis);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) v.inner *= x.dim(i);
  if (v.extent == 0) throw std::invalid_argument("empty reduction");
  return v;
}

}  // namespace

RealArray log_sum_exp(const RealArray& x, std::size_t axis) {
  const AxisView v = axis_view(x, axis);
  std::vector<std::size_t> shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  RealArray out(shape);
  std::vector<double> line(v.extent);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      for (std::size_t k = 0; k < v.extent; ++k) line[k] = x[(o * v.extent + k) * v.inner + i];
      out[o * v.inner + i] = log_sum_exp(line);
    }
  }
  return out;
}

namespace {

void softmax_into(std::span<const double> x, std::span<double> out) {
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - m);
    s += out[i];
  }
  for (double& v : out) v /= s;
}

}  // namespace

ProbabilityVector softmax(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("empty reduction");
  std::vector<double> out(x.size());
  softmax_into(x, out);
  return ProbabilityVector(std::move(out));
}

RealArray softmax(const RealArray& x, std::size_t axis) {
  const AxisView v = axis_view(x, axis);
  RealArray out(x.shape());
  std::vector<double> line(v.extent), res(v.extent);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      for (std::size_t k = 0; k < v.extent; ++k) line[k] = x[(o * v.extent + k) * v.inner + i];
      softmax_into(line, res);
      for (std::size_t k = 0; k < v.extent; ++k) out[(o * v.extent + k) * v.inner + i] = res[k];
    }
  }
  return out;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::max(h, 0.0);
}

double entropy(const ProbabilityVector& p) { return entropy(p.span()); }

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) { return mix64(a ^ mix64(b + 0x632be59bd9b4e019ULL)); }

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
    : master_seed_(master_seed), stream_id_(stream_id), engine_(hash_combine(master_seed, stream_id)) {}

RngStream RngStream::child(std::uint64_t id) const { return RngStream(master_seed_, hash_combine(stream_id_, id)); }

RngStream RngStream::child(std::initializer_list<std::uint64_t> path) const {
  std::uint64_t id = stream_id_;
  for (std::uint64_t p : path) id = hash_combine(id, p);
  return RngStream(master_seed_, id);
}

double RngStream::normal() { return normal_(engine_); }

double RngStream::uniform() { return uniform_(engine_); }

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("below(0)");
  std::uniform_int_distribution<std::uint64_t> dist(0, n - 1);
  return dist(engine_);
}

RealArray gaussian_sample(RngStream& stream, std::vector<std::size_t> shape) {
  RealArray out(std::move(shape));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stream.normal();
  return out;
}

}  // namespace ucam
