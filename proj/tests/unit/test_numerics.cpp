// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "ucam/numerics.hpp"

using namespace ucam;

TEST_CASE("softplus values and asymptotes") {
  CHECK(softplus(0.0) == doctest::Approx(0.6931472).epsilon(1e-7));
  CHECK(std::abs(softplus(50.0) - 50.0) <= 1e-12);
  const long double oracle = std::exp(-50.0L);
  CHECK(std::abs(softplus(-50.0) - static_cast<double>(oracle)) / static_cast<double>(oracle) < 0.1);
  double prev = softplus(-60.0);
  for (double x = -59.5; x <= 60.0; x += 0.5) {
    const double s = softplus(x);
    CHECK(s > 0.0);
    CHECK(s >= x);
    CHECK(s >= prev);
    prev = s;
  }
  const RealArray arr = softplus(RealArray({2, 2}, {0.0, 1.0, -1.0, 3.0}));
  CHECK(arr.shape() == std::vector<std::size_t>{2, 2});
  CHECK(arr[1] == softplus(1.0));
}

TEST_CASE("log_sum_exp is stable and exact on one element") {
  const std::vector<double> two{0.0, 0.0};
  CHECK(log_sum_exp(two) == doctest::Approx(std::log(2.0)));
  const std::vector<double> big{1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
  const std::vector<double> one{-3.25};
  CHECK(log_sum_exp(one) == -3.25);
  const std::vector<double> mixed{1.0, 2.0, 0.5};
  CHECK(log_sum_exp(mixed) >= 2.0);
  CHECK_THROWS_WITH(log_sum_exp(std::span<const double>{}), "empty reduction");
  const RealArray rows = log_sum_exp(RealArray({2, 2}, {0.0, 0.0, 1.0, 1.0}), 1);
  CHECK(rows[0] == doctest::Approx(std::log(2.0)));
  CHECK(rows[1] == doctest::Approx(1.0 + std::log(2.0)));
}

TEST_CASE("softmax examples and shift invariance") {
  const ProbabilityVector u = softmax(std::vector<double>{0, 0, 0, 0});
  for (double v : u.span()) CHECK(v == doctest::Approx(0.25));
  const ProbabilityVector p = softmax(std::vector<double>{std::log(1.0), std::log(2.0), std::log(3.0)});
  CHECK(p[0] == doctest::Approx(1.0 / 6));
  CHECK(p[1] == doctest::Approx(2.0 / 6));
  CHECK(p[2] == doctest::Approx(3.0 / 6));
  const std::vector<double> x{0.3, -1.2, 2.5, 0.0};
  std::vector<double> shifted = x;
  for (double& v : shifted) v += 123.0;
  const ProbabilityVector a = softmax(x), b = softmax(shifted);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  CHECK(std::accumulate(a.values().begin(), a.values().end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS(softmax(std::span<const double>{}));
}

TEST_CASE("entropy bounds") {
  CHECK(entropy(ProbabilityVector({0.25, 0.25, 0.25, 0.25})) == doctest::Approx(1.3862944));
  CHECK(entropy(ProbabilityVector({0.0, 1.0, 0.0})) == 0.0);
  CHECK(entropy(ProbabilityVector({0.5, 0.5})) == doctest::Approx(std::log(2.0)));
  // any perturbation away from uniform lowers the entropy
  RngStream rng(3, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(5, 0.2);
    const std::size_t i = rng.below(5), j = (i + 1 + rng.below(4)) % 5;
    const double d = 0.01 + 0.1 * rng.uniform();
    p[i] += d;
    p[j] -= d;
    CHECK(entropy(ProbabilityVector(p)) < std::log(5.0));
  }
}

TEST_CASE("probability vector validation") {
  CHECK_THROWS(ProbabilityVector({0.5, 0.6}));
  CHECK_THROWS(ProbabilityVector({1.5, -0.5}));
  CHECK_NOTHROW(ProbabilityVector({0.5, 0.5}));
}

TEST_CASE("gaussian streams are reproducible and independent") {
  RngStream a(42, 7), b(42, 7);
  CHECK(gaussian_sample(a, {4, 3}) == gaussian_sample(b, {4, 3}));

  RngStream big(11, 0);
  const RealArray draws = gaussian_sample(big, {1000000});
  double mean = 0.0;
  for (double v : draws.span()) mean += v;
  mean /= static_cast<double>(draws.size());
  double var = 0.0;
  for (double v : draws.span()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(draws.size());
  CHECK(std::abs(mean) < 0.004);
  CHECK(std::abs(var - 1.0) < 0.01);

  RngStream s1(11, 1), s2(11, 2);
  const RealArray x = gaussian_sample(s1, {100000}), y = gaussian_sample(s2, {100000});
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
  }
  CHECK(std::abs(sxy / std::sqrt(sxx * syy)) < 0.02);

  const RngStream root(5, 0);
  CHECK(root.child(1).stream_id() != root.child(2).stream_id());
  RngStream c1 = root.child({1, 2}), c2 = root.child({1, 2});
  CHECK(c1.normal() == c2.normal());
}
