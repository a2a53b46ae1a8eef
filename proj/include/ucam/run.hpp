// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Run orchestration shared by the command-line tool and the acceptance
// suite: configuration, the epoch loop, evaluation against ground truth,
// explanation export, uncertainty analysis and the ablation sweep.

#ifndef UCAM_RUN_HPP_
#define UCAM_RUN_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ucam/checkpoint.hpp"
#include "ucam/data.hpp"
#include "ucam/gca.hpp"
#include "ucam/metrics.hpp"

namespace ucam {

struct RunConfig {
  std::string mode = "baseline";
  std::uint64_t seed = 1;
  std::string data = "data";
  std::string runs = "runs";
  std::string name;  // defaults to "<mode>_s<seed>"

  // optimization (the reference setup used batch 200; 64 suits desk scale)
  std::size_t epochs = 30;
  std::size_t batch = 64;
  std::size_t max_steps = 0;  // 0: no cap
  double lr = 2e-3;
  double beta1 = 0.95;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  double sgd_lr = 0.004;

  // losses
  double eta_loss = 0.1;
  double udl_alpha = 1.0;
  double sigma0 = 0.0;
  std::string udl_variant = "piecewise";
  std::string perturb_scale = "stddev";
  std::size_t mc_samples = 10;
  std::size_t analysis_samples = 25;
  std::string entropy_gradient = "detach";  // or "full"

  // certainty mask
  double lambda = 1.0;
  double gamma = -10.0;
  std::string normalization = "softmax";
  double eps_norm = 1e-12;
  double mask_scale = 1.0;

  // model
  double dropout = 0.3;
  std::size_t image_channels = 32;
  std::size_t question_dim = 32;
  std::size_t attention_dim = 32;
  std::size_t feature_dim = 32;
  std::size_t hidden = 64;

  /// Overlays keys from a flat JSON object. Throws std::invalid_argument on an
  /// unknown key or a value of the wrong type.
  void merge_json(std::string_view text);
  /// Sets one key from its textual form, parsed according to the field type.
  void set(std::string_view key, std::string_view value);
  std::string to_json() const;
  /// Throws std::invalid_argument on an invalid mode or out-of-range value.
  void validate() const;

  std::string run_name() const;
  Mode parsed_mode() const;
  StepConfig step_config() const;
  ModelConfig model_config(const GenerationParams& data) const;
};

/// Names of every config key, in declaration order.
const std::vector<std::string>& run_config_keys();

struct TrainOutcome {
  std::filesystem::path dir;
  std::size_t steps = 0;
  LossBundle last;
};

/// Writes checkpoint.{json,bin}, losses.csv, config.json and metrics.json
/// (validation split) into runs/<name>. Deterministic per config.
TrainOutcome train_run(const RunConfig& cfg);

/// Same loop without touching the filesystem beyond reading `records`.
Parameters train_parameters(const RunConfig& cfg, const ModelConfig& model_cfg,
                            const std::vector<TrainingExample>& train, std::vector<LossBundle>* losses = nullptr);

struct RecordEval {
  std::uint64_t record_id = 0;
  std::string predicted;
  std::string gt_answer;
  bool correct = false;
  bool ambiguous = false;
  double accuracy = 0.0;                   // consensus accuracy
  std::optional<double> rank_correlation;  // undefined for uniform ground truth
  double emd = 0.0;
  UncertaintyEstimate uncertainty;
  double class_error = 0.0;
  double top2_gap = 0.0;
};

struct EvalSummary {
  std::size_t count = 0;
  double accuracy = 0.0;        // mean consensus accuracy, in percent
  double exact_accuracy = 0.0;  // predicted == gt_answer, in percent
  double rank_correlation = 0.0;
  std::size_t rank_correlation_count = 0;
  double emd = 0.0;
  double sigma2_p_mean = 0.0;
  double sigma2_p_std = 0.0;
  double sigma2_p_min = 0.0;
  double sigma2_p_max = 0.0;
  double entropy_mean = 0.0;
  double mean_aleatoric_mean = 0.0;
  UncertaintyReport uncertainty;
  double top2_gap_correct = 0.0;
  double top2_gap_incorrect = 0.0;
  std::size_t decomposition_violations = 0;
};

struct EvalOptions {
  std::size_t mc_samples = 25;
  double dropout = 0.3;
  std::uint64_t seed = 1;
};

std::vector<RecordEval> evaluate_records(const Parameters& params, const ModelConfig& model_cfg,
                                         const std::vector<VQARecord>& records, const EvalOptions& opts);
EvalSummary summarize(const std::vector<RecordEval>& evals);
std::string summary_to_json(const EvalSummary& s, const std::string& mode, const std::string& split);

/// Loads runs/<name>/checkpoint and evaluates `split`; writes <split>_metrics.json.
EvalSummary eval_run(const RunConfig& cfg, const std::string& split);

/// Writes <record>_<mode>.png and .json into runs/<name>/explain for each id
/// (or the first `count` test records when `ids` is empty). Returns files written.
std::vector<std::filesystem::path> explain_run(const RunConfig& cfg, const std::vector<std::uint64_t>& ids,
                                               std::size_t count);

/// Writes records.csv, scatter.csv and summary.json into runs/<name>/analyze.
EvalSummary analyze_run(const RunConfig& cfg, const std::string& split);

struct AblationRow {
  std::string mode;
  std::uint64_t seed = 0;
  EvalSummary test;
};

/// Trains and evaluates every (mode, seed) pair; writes runs/<name>/ablation.csv.
std::vector<AblationRow> ablate(const RunConfig& base, const std::vector<std::string>& modes,
                                const std::vector<std::uint64_t>& seeds);

}  // namespace ucam

#endif  // UCAM_RUN_HPP_
