// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation metrics: consensus answer accuracy, rank correlation and earth
// mover distance between attention maps, and the uncertainty diagnostics
// (classification error, misclassification AUROC, top-2 softmax gap).

#ifndef UCAM_METRICS_HPP_
#define UCAM_METRICS_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ucam/numerics.hpp"

namespace ucam {

/// Two-dimensional map of nonnegative values summing to one (within 1e-9).
class AttentionMapNormalized {
 public:
  /// Throws std::invalid_argument("unnormalized attention map") otherwise.
  explicit AttentionMapNormalized(RealArray map);
  /// Divides a nonnegative map by its total. Throws if the total is zero.
  static AttentionMapNormalized normalize(RealArray map);

  const RealArray& map() const { return map_; }
  std::size_t rows() const { return map_.dim(0); }
  std::size_t cols() const { return map_.dim(1); }

 private:
  RealArray map_;
};

/// min(#matching annotations / 3, 1). Throws unless there are exactly 10 annotations.
double vqa_accuracy(std::string_view predicted, std::span<const std::string> annotations);

/// 1-based ranks; tied values share the average of their positions.
std::vector<double> fractional_ranks(std::span<const double> values);

/// Pearson correlation. Returns nullopt when either input has zero variance.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

/// Spearman correlation (Pearson of fractional ranks).
/// Throws std::domain_error("undefined correlation") for a constant map.
double rank_correlation(std::span<const double> a, std::span<const double> b);
double rank_correlation(const AttentionMapNormalized& a, const AttentionMapNormalized& b);

/// Area-weighted resampling of a [rows, cols] map to [out_rows, out_cols]; mass preserving.
RealArray area_downsample(const RealArray& map, std::size_t out_rows, std::size_t out_cols);

/// Exact 1-Wasserstein distance under the Euclidean metric between cell
/// centers, via min-cost flow. Maps larger than 16x16 are first
/// area-downsampled to 14x14.
double emd_2d(const AttentionMapNormalized& a, const AttentionMapNormalized& b);

/// log(1 / (1 - p)). Throws for p outside [0, 1).
double classification_error(double p_misclassification);

/// Largest minus second-largest softmax probability. Throws for fewer than two classes.
double top2_gap(std::span<const double> logits);

/// Area under the ROC curve of `scores` separating positives from negatives
/// (ties count one half). Returns nullopt when either class is empty.
std::optional<double> auroc(std::span<const double> scores, std::span<const bool> positive);

struct UncertaintyRecord {
  std::uint64_t record_id = 0;
  double sigma2_p = 0.0;
  bool correct = false;
  double class_error = 0.0;
};

struct UncertaintyReport {
  std::size_t count = 0;
  std::optional<double> pearson_uncertainty_error;  // nullopt: undefined
  double mean_sigma2_correct = 0.0;
  double mean_sigma2_incorrect = 0.0;
  std::size_t n_correct = 0;
  std::size_t n_incorrect = 0;
  std::optional<double> auroc;  // sigma2_p as a detector of misclassification
};

/// Throws std::invalid_argument with fewer than two records.
UncertaintyReport uncertainty_error_analysis(std::span<const UncertaintyRecord> records);

}  // namespace ucam

#endif  // UCAM_METRICS_HPP_
