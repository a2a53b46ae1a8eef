// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "doctest.h"
#include "oracles.hpp"
#include "ucam/metrics.hpp"

using namespace ucam;
using namespace ucam::testing;

namespace {

std::vector<std::string> annotations(int matches) {
  std::vector<std::string> a(10, "red");
  for (int i = 0; i < matches; ++i) a[static_cast<std::size_t>(i)] = "blue";
  return a;
}

AttentionMapNormalized point(std::size_t rows, std::size_t cols, std::size_t r, std::size_t c) {
  RealArray m({rows, cols});
  m[r * cols + c] = 1.0;
  return AttentionMapNormalized(m);
}

}  // namespace

TEST_CASE("consensus accuracy") {
  CHECK(vqa_accuracy("blue", annotations(5)) == 1.0);
  CHECK(vqa_accuracy("blue", annotations(2)) == doctest::Approx(0.6666667));
  CHECK(vqa_accuracy("blue", annotations(0)) == 0.0);
  for (int k = 0; k <= 10; ++k) CHECK(vqa_accuracy("blue", annotations(k)) == std::min(k / 3.0, 1.0));
  std::vector<std::string> shuffled = annotations(2);
  std::reverse(shuffled.begin(), shuffled.end());
  CHECK(vqa_accuracy("blue", shuffled) == vqa_accuracy("blue", annotations(2)));
  const std::vector<std::string> nine(9, "blue");
  CHECK_THROWS(vqa_accuracy("blue", nine));
}

TEST_CASE("fractional ranks") {
  const std::vector<double> v{3.0, 1.0, 3.0, 2.0};
  const std::vector<double> r = fractional_ranks(v);
  CHECK(r == std::vector<double>{3.5, 1.0, 3.5, 2.0});
  double s = 0;
  for (double x : r) s += x;
  CHECK(s == 4.0 * 5.0 / 2.0);
}

TEST_CASE("rank correlation") {
  const std::vector<double> a{0.1, 0.4, 0.2, 0.3};
  CHECK(rank_correlation(a, a) == doctest::Approx(1.0));
  const std::vector<double> up{1, 2, 3, 4, 5}, down{5, 4, 3, 2, 1};
  CHECK(rank_correlation(up, down) == doctest::Approx(-1.0));
  const std::vector<double> flat(5, 0.2);
  CHECK_THROWS_WITH(rank_correlation(flat, up), "undefined correlation");

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const RealArray x = random_map(rng, 7, 7, trial % 2 ? 6 : 0), y = random_map(rng, 7, 7, trial % 3 ? 0 : 4);
    const double got = rank_correlation(AttentionMapNormalized(x), AttentionMapNormalized(y));
    CHECK(std::abs(got - brute_rank_correlation(x.values(), y.values())) <= 1e-12);
    if (trial % 2 == 0 && trial % 3 != 0) {
      // no ties: classic formula
      const std::vector<double> rx = fractional_ranks(x.span()), ry = fractional_ranks(y.span());
      double d2 = 0;
      for (std::size_t i = 0; i < rx.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
      const double n = 49.0;
      CHECK(got == doctest::Approx(1.0 - 6.0 * d2 / (n * n * n - n)).epsilon(1e-12));
    }
    // strictly increasing transform leaves it unchanged
    std::vector<double> tx(x.values());
    for (double& v : tx) v = std::exp(3.0 * v) + 2.0;
    CHECK(rank_correlation(tx, y.span()) == doctest::Approx(got).epsilon(1e-12));
  }
}

TEST_CASE("normalized map validation") {
  CHECK_THROWS(AttentionMapNormalized(RealArray({2, 2}, {0.5, 0.5, 0.5, 0.5})));
  CHECK_THROWS(AttentionMapNormalized(RealArray({2, 2}, {1.5, -0.5, 0.0, 0.0})));
  CHECK_NOTHROW(AttentionMapNormalized::normalize(RealArray({2, 2}, {1, 1, 1, 1})));
}

TEST_CASE("earth mover distance") {
  std::mt19937_64 rng(12);
  const RealArray m = random_map(rng, 4, 4);
  CHECK(emd_2d(AttentionMapNormalized(m), AttentionMapNormalized(m)) == 0.0);
  CHECK(emd_2d(point(5, 5, 0, 0), point(5, 5, 3, 4)) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK_THROWS(emd_2d(point(3, 3, 0, 0), point(4, 4, 0, 0)));

  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 2 + trial % 3, cols = 2 + (trial / 3) % 3;
    const RealArray a = random_map(rng, rows, cols, 0, 0.3), b = random_map(rng, rows, cols, 0, 0.3);
    const double got = emd_2d(AttentionMapNormalized(a), AttentionMapNormalized(b));
    INFO("trial " << trial);
    CHECK(std::abs(got - lp_emd(a, b)) <= 1e-9);
  }
}

TEST_CASE("earth mover distance is a metric") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const AttentionMapNormalized a(random_map(rng, 7, 7, 0, 0.2)), b(random_map(rng, 7, 7)),
        c(random_map(rng, 7, 7, 3));
    const double ab = emd_2d(a, b), ba = emd_2d(b, a), bc = emd_2d(b, c), ac = emd_2d(a, c);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(ab > 0.0);
    CHECK(ac <= ab + bc + 1e-9);
  }
}

TEST_CASE("large maps are downsampled before transport") {
  const RealArray big = area_downsample(RealArray({20, 20}, std::vector<double>(400, 1.0 / 400)), 14, 14);
  double total = 0;
  for (double v : big.span()) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  for (double v : big.span()) CHECK(v == doctest::Approx(1.0 / 196).epsilon(1e-12));
  // point masses at opposite corners of a 28x28 grid land 13 cells apart per axis
  const double d = emd_2d(point(28, 28, 0, 0), point(28, 28, 27, 27));
  CHECK(d == doctest::Approx(13.0 * std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("classification error") {
  CHECK(classification_error(0.5) == doctest::Approx(std::log(2.0)));
  CHECK(classification_error(0.0) == 0.0);
  CHECK(classification_error(0.9) == doctest::Approx(2.3025851));
  CHECK_THROWS(classification_error(1.0));
}

TEST_CASE("top-2 gap") {
  CHECK(top2_gap(std::vector<double>{1.0, 1.0, 0.0}) == doctest::Approx(0.0));
  CHECK(top2_gap(std::vector<double>{50.0, 0.0, 0.0}) == doctest::Approx(1.0));
  CHECK(top2_gap(std::vector<double>{std::log(2.0), 0.0}) == doctest::Approx(1.0 / 3));
  CHECK_THROWS(top2_gap(std::vector<double>{1.0}));
}

TEST_CASE("uncertainty analysis") {
  std::vector<UncertaintyRecord> recs;
  for (int i = 0; i < 10; ++i) {
    const double e = 0.1 * i;
    recs.push_back(UncertaintyRecord{static_cast<std::uint64_t>(i), e, i < 5, e});
  }
  const UncertaintyReport r = uncertainty_error_analysis(recs);
  REQUIRE(r.pearson_uncertainty_error.has_value());
  CHECK(*r.pearson_uncertainty_error == doctest::Approx(1.0));
  REQUIRE(r.auroc.has_value());
  CHECK(*r.auroc == 1.0);
  CHECK(r.mean_sigma2_incorrect > r.mean_sigma2_correct);
  CHECK(r.n_correct == 5);

  for (auto& x : recs) x.sigma2_p = 0.3;
  const UncertaintyReport flat = uncertainty_error_analysis(recs);
  CHECK_FALSE(flat.pearson_uncertainty_error.has_value());
  REQUIRE(flat.auroc.has_value());
  CHECK(*flat.auroc == 0.5);
  CHECK_THROWS(uncertainty_error_analysis(std::span(recs.data(), 1)));

  const std::vector<double> scores{0.1, 0.3, 0.35, 0.8};
  const bool pos[] = {false, true, false, true};
  CHECK(*auroc(scores, pos) == doctest::Approx(0.75));
}
