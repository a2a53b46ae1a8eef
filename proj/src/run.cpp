// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "ucam/run.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <type_traits>
#include <variant>

#include "json.hpp"
#include "ucam/io.hpp"

namespace ucam {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "integer config fields share one type");
using FieldRef = std::variant<std::string*, std::uint64_t*, double*>;

template <class Cfg, class Fn>
void visit_fields(Cfg& c, Fn&& fn) {
  fn("mode", &c.mode);
  fn("seed", &c.seed);
  fn("data", &c.data);
  fn("runs", &c.runs);
  fn("name", &c.name);
  fn("epochs", &c.epochs);
  fn("batch", &c.batch);
  fn("max_steps", &c.max_steps);
  fn("lr", &c.lr);
  fn("beta1", &c.beta1);
  fn("beta2", &c.beta2);
  fn("adam_eps", &c.adam_eps);
  fn("sgd_lr", &c.sgd_lr);
  fn("eta_loss", &c.eta_loss);
  fn("udl_alpha", &c.udl_alpha);
  fn("sigma0", &c.sigma0);
  fn("udl_variant", &c.udl_variant);
  fn("perturb_scale", &c.perturb_scale);
  fn("mc_samples", &c.mc_samples);
  fn("analysis_samples", &c.analysis_samples);
  fn("entropy_gradient", &c.entropy_gradient);
  fn("lambda", &c.lambda);
  fn("gamma", &c.gamma);
  fn("normalization", &c.normalization);
  fn("eps_norm", &c.eps_norm);
  fn("mask_scale", &c.mask_scale);
  fn("dropout", &c.dropout);
  fn("image_channels", &c.image_channels);
  fn("question_dim", &c.question_dim);
  fn("attention_dim", &c.attention_dim);
  fn("feature_dim", &c.feature_dim);
  fn("hidden", &c.hidden);
}

FieldRef find_field(RunConfig& c, std::string_view key) {
  std::optional<FieldRef> found;
  visit_fields(c, [&](std::string_view name, auto* ptr) {
    if (name == key) found = FieldRef(ptr);
  });
  if (!found) throw std::invalid_argument("unknown config key: " + std::string(key));
  return *found;
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t purpose) { return hash_combine(seed, purpose); }

constexpr std::uint64_t kInitPurpose = 0x1417;
constexpr std::uint64_t kShufflePurpose = 0x5f1e;
constexpr std::uint64_t kEvalPurpose = 0xe7a1;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

fs::path run_dir(const RunConfig& cfg) { return fs::path(cfg.runs) / cfg.run_name(); }

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    RunConfig c;
    visit_fields(c, [&](std::string_view name, auto*) { k.emplace_back(name); });
    return k;
  }();
  return keys;
}

void RunConfig::merge_json(std::string_view text) {
  const json j = json::parse(text);
  if (!j.is_object()) throw std::invalid_argument("config must be a flat JSON object");
  for (const auto& [key, value] : j.items()) {
    std::visit(
        [&, k = key](auto* ptr) {
          using T = std::remove_pointer_t<decltype(ptr)>;
          if constexpr (std::is_same_v<T, std::string>) {
            if (!value.is_string()) throw std::invalid_argument("config key " + k + " expects a string");
            *ptr = value.get<std::string>();
          } else if constexpr (std::is_same_v<T, double>) {
            if (!value.is_number()) throw std::invalid_argument("config key " + k + " expects a number");
            *ptr = value.get<double>();
          } else {
            if (!value.is_number_unsigned()) {
              throw std::invalid_argument("config key " + k + " expects a nonnegative integer");
            }
            *ptr = value.get<T>();
          }
        },
        find_field(*this, key));
  }
}

void RunConfig::set(std::string_view key, std::string_view value) {
  std::visit(
      [&](auto* ptr) {
        using T = std::remove_pointer_t<decltype(ptr)>;
        const std::string text(value);
        const auto bad = [&] { return std::invalid_argument("bad value for " + std::string(key) + ": " + text); };
        if constexpr (std::is_same_v<T, std::string>) {
          *ptr = text;
        } else {
          std::size_t used = 0;
          try {
            if constexpr (std::is_same_v<T, double>) {
              *ptr = std::stod(text, &used);
            } else {
              if (!text.empty() && text[0] == '-') throw bad();
              *ptr = std::stoull(text, &used);
            }
          } catch (const std::logic_error&) {
            throw bad();
          }
          if (used != text.size()) throw bad();
        }
      },
      find_field(*this, key));
}

std::string RunConfig::to_json() const {
  json j = json::object();
  RunConfig copy = *this;
  visit_fields(copy, [&](std::string_view name, auto* ptr) { j[std::string(name)] = *ptr; });
  return j.dump(2) + "\n";
}

void RunConfig::validate() const {
  if (!parse_mode(mode)) {
    std::string valid;
    for (Mode m : all_modes()) valid += (valid.empty() ? "" : ", ") + std::string(mode_name(m));
    throw std::invalid_argument("invalid mode '" + mode + "'; valid modes: " + valid);
  }
  if (batch == 0) throw std::invalid_argument("batch must be positive");
  if (mc_samples == 0 || analysis_samples == 0) throw std::invalid_argument("sample counts must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (gamma > 0.0) throw std::invalid_argument("gamma must be <= 0");
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  if (mask_scale < 0.0) throw std::invalid_argument("mask_scale must be >= 0");
  if (!(eps_norm > 0.0)) throw std::invalid_argument("eps_norm must be positive");
  if (udl_variant != "piecewise" && udl_variant != "algorithm") {
    throw std::invalid_argument("udl_variant must be piecewise or algorithm");
  }
  if (perturb_scale != "stddev" && perturb_scale != "variance") {
    throw std::invalid_argument("perturb_scale must be stddev or variance");
  }
  if (entropy_gradient != "detach" && entropy_gradient != "full") {
    throw std::invalid_argument("entropy_gradient must be detach or full");
  }
  if (normalization != "softmax" && normalization != "sum") {
    throw std::invalid_argument("normalization must be softmax or sum");
  }
}

std::string RunConfig::run_name() const {
  if (!name.empty()) return name;
  return mode + "_s" + std::to_string(seed);
}

Mode RunConfig::parsed_mode() const {
  const auto m = parse_mode(mode);
  if (!m) validate();
  return *m;
}

StepConfig RunConfig::step_config() const {
  StepConfig s;
  s.mode = parsed_mode();
  s.gca.lambda = lambda;
  s.gca.gamma = gamma;
  s.gca.normalization = normalization == "sum" ? MaskNormalization::sum : MaskNormalization::softmax;
  s.gca.eps_norm = eps_norm;
  s.gca.mask_scale = mask_scale;
  s.loss.eta_loss = eta_loss;
  s.loss.udl_alpha = udl_alpha;
  s.loss.sigma0 = sigma0;
  s.loss.udl_variant = udl_variant == "algorithm" ? UdlVariant::algorithm : UdlVariant::piecewise;
  s.loss.perturb_scale = perturb_scale == "variance" ? PerturbScale::variance : PerturbScale::stddev;
  s.loss.mc_samples = mc_samples;
  s.loss.entropy_gradient = entropy_gradient == "full";
  s.dropout = dropout;
  s.adam = AdamConfig{lr, beta1, beta2, adam_eps};
  s.sgd = SgdConfig{sgd_lr};
  return s;
}

ModelConfig RunConfig::model_config(const GenerationParams& data_params) const {
  ModelConfig m = model_config_for(data_params);
  m.image_channels = image_channels;
  m.question_dim = question_dim;
  m.attention_dim = attention_dim;
  m.feature_dim = feature_dim;
  m.hidden = hidden;
  m.dropout = dropout;
  return m;
}

Parameters train_parameters(const RunConfig& cfg, const ModelConfig& model_cfg,
                            const std::vector<TrainingExample>& train, std::vector<LossBundle>* losses) {
  const StepConfig step = cfg.step_config();
  TrainerState state(Parameters::initialize(model_cfg, stream_seed(cfg.seed, kInitPurpose)), step);
  if (train.empty()) return state.params;
  const RngStream shuffle_root(cfg.seed, kShufflePurpose);
  std::vector<std::size_t> order(train.size());
  std::vector<TrainingExample> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RngStream rng = shuffle_root.child(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      if (cfg.max_steps && state.step >= cfg.max_steps) return state.params;
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch); ++i) batch.push_back(train[order[i]]);
      const StepOutput out = gca_training_step(batch, state, step, model_cfg, cfg.seed);
      if (losses) losses->push_back(out.mean);
    }
  }
  return state.params;
}

TrainOutcome train_run(const RunConfig& cfg) {
  cfg.validate();
  const fs::path data_dir(cfg.data);
  const DatasetManifest manifest = load_manifest(data_dir);
  const ModelConfig model_cfg = cfg.model_config(manifest.params);

  std::vector<TrainingExample> train;
  {
    RecordReader reader(data_dir, "train");
    while (auto r = reader.next()) train.push_back(to_training_example(*r));
  }
  std::vector<LossBundle> losses;
  const Parameters params = train_parameters(cfg, model_cfg, train, &losses);

  TrainOutcome out;
  out.dir = run_dir(cfg);
  out.steps = losses.size();
  if (!losses.empty()) out.last = losses.back();
  fs::create_directories(out.dir);
  save_checkpoint(out.dir, Checkpoint{model_cfg, params, out.steps});

  std::ostringstream csv;
  csv << "step,mode,L_y,L_p,L_VE,L_UDL,L_u,C_total\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const LossBundle& b = losses[i];
    csv << i + 1 << ',' << cfg.mode << ',' << fmt(b.loss_y) << ',' << fmt(b.loss_p) << ',' << fmt(b.loss_ve) << ','
        << fmt(b.loss_udl) << ',' << fmt(b.loss_u) << ',' << fmt(b.total) << '\n';
  }
  write_text_file(out.dir / "losses.csv", csv.str());
  write_text_file(out.dir / "config.json", cfg.to_json());

  const std::vector<VQARecord> val = load_split(data_dir, "val");
  const EvalSummary s = summarize(
      evaluate_records(params, model_cfg, val, EvalOptions{cfg.analysis_samples, cfg.dropout, cfg.seed}));
  write_text_file(out.dir / "metrics.json", summary_to_json(s, cfg.mode, "val"));
  return out;
}

std::vector<RecordEval> evaluate_records(const Parameters& params, const ModelConfig& model_cfg,
                                         const std::vector<VQARecord>& records, const EvalOptions& opts) {
  const auto& answers = answer_space();
  std::vector<RecordEval> out;
  out.reserve(records.size());
  const RngStream root(opts.seed, kEvalPurpose);
  for (const VQARecord& rec : records) {
    const TrainingExample ex = to_training_example(rec);
    ForwardPass pass = forward_encoder(ex.scene, ex.tokens, params, model_cfg);
    DropoutSpec off{0.0, RngStream(0, 0)};
    const std::size_t h = add_head_pass(pass, params, off);
    const RealArray logits = pass.heads[h].logits;
    const std::size_t pred =
        static_cast<std::size_t>(std::max_element(logits.values().begin(), logits.values().end()) -
                                 logits.values().begin());

    RecordEval e;
    e.record_id = rec.record_id;
    e.predicted = answers[pred];
    e.gt_answer = rec.gt_answer;
    e.correct = e.predicted == rec.gt_answer;
    e.ambiguous = rec.ambiguous;
    e.accuracy = vqa_accuracy(e.predicted, rec.annotations);
    e.top2_gap = top2_gap(logits.span());

    const AttentionMapNormalized alpha(pass.attention.weights.alpha);
    const AttentionMapNormalized truth(rec.gt_attention);
    try {
      e.rank_correlation = rank_correlation(alpha, truth);
    } catch (const std::domain_error&) {
      e.rank_correlation.reset();
    }
    e.emd = emd_2d(alpha, truth);

    MCConfig mc;
    mc.samples = opts.mc_samples;
    mc.stream = root.child(rec.record_id);
    const MCPrediction p = mc_predictive_distribution(pass, params, opts.dropout, mc);
    std::vector<double> sigma2_a(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) sigma2_a[c] = softplus(pass.heads[h].log_variance[c]);
    e.uncertainty = predictive_uncertainty(p.mean_probability, p.sample_variance, sigma2_a);
    const double p_mis = std::min(1.0 - p.mean_probability[ex.target], 1.0 - 1e-15);
    e.class_error = classification_error(std::max(p_mis, 0.0));
    out.push_back(std::move(e));
  }
  std::sort(out.begin(), out.end(), [](const RecordEval& a, const RecordEval& b) { return a.record_id < b.record_id; });
  return out;
}

EvalSummary summarize(const std::vector<RecordEval>& evals) {
  EvalSummary s;
  s.count = evals.size();
  if (evals.empty()) return s;
  std::vector<double> acc, exact, rc, emd, sig, ent, ale, gap_c, gap_i;
  std::vector<UncertaintyRecord> urecs;
  for (const RecordEval& e : evals) {
    acc.push_back(e.accuracy);
    exact.push_back(e.correct ? 1.0 : 0.0);
    if (e.rank_correlation) rc.push_back(*e.rank_correlation);
    emd.push_back(e.emd);
    sig.push_back(e.uncertainty.sigma2_p);
    ent.push_back(e.uncertainty.entropy);
    ale.push_back(e.uncertainty.mean_aleatoric);
    (e.correct ? gap_c : gap_i).push_back(e.top2_gap);
    urecs.push_back(UncertaintyRecord{e.record_id, e.uncertainty.sigma2_p, e.correct, e.class_error});
    const UncertaintyEstimate& u = e.uncertainty;
    const bool ok = u.sigma2_p == u.entropy + u.mean_aleatoric && u.entropy >= 0.0 &&
                    u.sigma2_p >= u.entropy && u.mean_aleatoric >= 0.0;
    if (!ok) ++s.decomposition_violations;
  }
  s.accuracy = 100.0 * mean_of(acc);
  s.exact_accuracy = 100.0 * mean_of(exact);
  s.rank_correlation = mean_of(rc);
  s.rank_correlation_count = rc.size();
  s.emd = mean_of(emd);
  s.sigma2_p_mean = mean_of(sig);
  double var = 0.0;
  for (double v : sig) var += (v - s.sigma2_p_mean) * (v - s.sigma2_p_mean);
  s.sigma2_p_std = std::sqrt(var / static_cast<double>(sig.size()));
  s.sigma2_p_min = *std::min_element(sig.begin(), sig.end());
  s.sigma2_p_max = *std::max_element(sig.begin(), sig.end());
  s.entropy_mean = mean_of(ent);
  s.mean_aleatoric_mean = mean_of(ale);
  if (urecs.size() >= 2) s.uncertainty = uncertainty_error_analysis(urecs);
  s.top2_gap_correct = mean_of(gap_c);
  s.top2_gap_incorrect = mean_of(gap_i);
  return s;
}

std::string summary_to_json(const EvalSummary& s, const std::string& mode, const std::string& split) {
  json j;
  j["mode"] = mode;
  j["split"] = split;
  j["count"] = s.count;
  j["accuracy"] = s.accuracy;
  j["exact_accuracy"] = s.exact_accuracy;
  j["rank_correlation"] = s.rank_correlation;
  j["rank_correlation_count"] = s.rank_correlation_count;
  j["emd"] = s.emd;
  j["sigma2_p"] = {{"mean", s.sigma2_p_mean},
                   {"std", s.sigma2_p_std},
                   {"min", s.sigma2_p_min},
                   {"max", s.sigma2_p_max},
                   {"mean_correct", s.uncertainty.mean_sigma2_correct},
                   {"mean_incorrect", s.uncertainty.mean_sigma2_incorrect},
                   {"entropy_mean", s.entropy_mean},
                   {"mean_aleatoric_mean", s.mean_aleatoric_mean}};
  j["uncertainty_error_pearson"] = optional_json(s.uncertainty.pearson_uncertainty_error);
  j["misclassification_auroc"] = optional_json(s.uncertainty.auroc);
  j["n_correct"] = s.uncertainty.n_correct;
  j["n_incorrect"] = s.uncertainty.n_incorrect;
  j["top2_gap_correct"] = s.top2_gap_correct;
  j["top2_gap_incorrect"] = s.top2_gap_incorrect;
  j["decomposition_violations"] = s.decomposition_violations;
  return j.dump(2) + "\n";
}

EvalSummary eval_run(const RunConfig& cfg, const std::string& split) {
  const fs::path dir = run_dir(cfg);
  const Checkpoint ckpt = load_checkpoint(dir);
  const std::vector<VQARecord> records = load_split(cfg.data, split);
  const EvalSummary s = summarize(
      evaluate_records(ckpt.params, ckpt.config, records, EvalOptions{cfg.analysis_samples, cfg.dropout, cfg.seed}));
  write_text_file(dir / (split + "_metrics.json"), summary_to_json(s, cfg.mode, split));
  return s;
}

std::vector<fs::path> explain_run(const RunConfig& cfg, const std::vector<std::uint64_t>& ids, std::size_t count) {
  const fs::path dir = run_dir(cfg);
  const Checkpoint ckpt = load_checkpoint(dir);
  const StepConfig step = cfg.step_config();
  std::vector<VQARecord> chosen;
  {
    RecordReader reader(cfg.data, "test");
    while (auto r = reader.next()) {
      const bool wanted = ids.empty() ? chosen.size() < count
                                      : std::find(ids.begin(), ids.end(), r->record_id) != ids.end();
      if (wanted) chosen.push_back(std::move(*r));
    }
  }
  if (!ids.empty() && chosen.size() != ids.size()) throw std::invalid_argument("unknown record id requested");
  const fs::path out_dir = dir / "explain";
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  constexpr std::size_t kScale = 16;
  for (const VQARecord& rec : chosen) {
    const TrainingExample ex = to_training_example(rec);
    ForwardPass pass = forward_encoder(ex.scene, ex.tokens, ckpt.params, ckpt.config);
    const ExampleLosses losses =
        evaluate_example(pass, ckpt.params, ex.target, step, ExampleStreams::derive(cfg.seed, 0, rec.record_id));
    Parameters scratch = ckpt.params.zeros_like();
    const ExampleGradient g = accumulate_example_gradient(pass, ckpt.params, losses, step, scratch);
    const CertaintyHeatmap heat = certainty_map(pass.attention.features, g.final_y);

    const std::size_t rows = ckpt.config.grid_rows, cols = ckpt.config.grid_cols, d = ckpt.config.feature_dim;
    std::vector<std::uint8_t> pixels(rows * kScale * cols * kScale);
    for (std::size_t y = 0; y < rows * kScale; ++y) {
      for (std::size_t x = 0; x < cols * kScale; ++x) {
        const double v = heat.map[(y / kScale) * cols + x / kScale];
        pixels[y * cols * kScale + x] = static_cast<std::uint8_t>(std::lround(255.0 * v));
      }
    }
    std::vector<double> mask_sum(rows * cols, 0.0);
    if (!g.mask.values.empty()) {
      for (std::size_t c = 0; c < rows * cols; ++c) {
        for (std::size_t k = 0; k < d; ++k) mask_sum[c] += g.mask.values[c * d + k];
      }
    }
    const std::string stem = std::to_string(rec.record_id) + "_" + cfg.mode;
    write_png_gray(out_dir / (stem + ".png"), rows * kScale, cols * kScale, pixels);
    json j;
    j["record_id"] = rec.record_id;
    j["mode"] = cfg.mode;
    j["question"] = rec.question;
    j["gt_answer"] = rec.gt_answer;
    j["rows"] = rows;
    j["cols"] = cols;
    j["heatmap"] = heat.map.values();
    j["mask"] = mask_sum;
    j["attention"] = pass.attention.weights.alpha.values();
    write_text_file(out_dir / (stem + ".json"), j.dump(2) + "\n");
    written.push_back(out_dir / (stem + ".png"));
    written.push_back(out_dir / (stem + ".json"));
  }
  return written;
}

EvalSummary analyze_run(const RunConfig& cfg, const std::string& split) {
  const fs::path dir = run_dir(cfg);
  const Checkpoint ckpt = load_checkpoint(dir);
  const std::vector<VQARecord> records = load_split(cfg.data, split);
  const std::vector<RecordEval> evals =
      evaluate_records(ckpt.params, ckpt.config, records, EvalOptions{cfg.analysis_samples, cfg.dropout, cfg.seed});
  const EvalSummary s = summarize(evals);
  const fs::path out = dir / "analyze";
  fs::create_directories(out);
  std::ostringstream rows, scatter;
  rows << "record_id,predicted,gt_answer,correct,ambiguous,sigma2_p,entropy,mean_aleatoric,class_error,top2_gap\n";
  scatter << "sigma2_p,class_error,correct\n";
  for (const RecordEval& e : evals) {
    rows << e.record_id << ',' << e.predicted << ',' << e.gt_answer << ',' << int(e.correct) << ','
         << int(e.ambiguous) << ',' << fmt(e.uncertainty.sigma2_p) << ',' << fmt(e.uncertainty.entropy) << ','
         << fmt(e.uncertainty.mean_aleatoric) << ',' << fmt(e.class_error) << ',' << fmt(e.top2_gap) << '\n';
    scatter << fmt(e.uncertainty.sigma2_p) << ',' << fmt(e.class_error) << ',' << int(e.correct) << '\n';
  }
  write_text_file(out / "records.csv", rows.str());
  write_text_file(out / "scatter.csv", scatter.str());
  write_text_file(out / "summary.json", summary_to_json(s, cfg.mode, split));
  return s;
}

std::vector<AblationRow> ablate(const RunConfig& base, const std::vector<std::string>& modes,
                                const std::vector<std::uint64_t>& seeds) {
  std::vector<AblationRow> rows;
  const std::string sweep = base.name.empty() ? "ablation" : base.name;
  for (const std::string& mode : modes) {
    for (std::uint64_t seed : seeds) {
      RunConfig cfg = base;
      cfg.mode = mode;
      cfg.seed = seed;
      cfg.runs = (fs::path(base.runs) / sweep).string();
      cfg.name = mode + "_s" + std::to_string(seed);
      train_run(cfg);
      rows.push_back(AblationRow{mode, seed, eval_run(cfg, "test")});
    }
  }
  std::ostringstream csv;
  csv << "mode,seed,accuracy,exact_accuracy,rank_correlation,emd,sigma2_p_mean,auroc,top2_gap_correct\n";
  for (const AblationRow& r : rows) {
    csv << r.mode << ',' << r.seed << ',' << fmt(r.test.accuracy) << ',' << fmt(r.test.exact_accuracy) << ','
        << fmt(r.test.rank_correlation) << ',' << fmt(r.test.emd) << ',' << fmt(r.test.sigma2_p_mean) << ','
        << (r.test.uncertainty.auroc ? fmt(*r.test.uncertainty.auroc) : std::string("")) << ','
        << fmt(r.test.top2_gap_correct) << '\n';
  }
  fs::create_directories(fs::path(base.runs) / sweep);
  write_text_file(fs::path(base.runs) / sweep / "ablation.csv", csv.str());
  return rows;
}

}  // namespace ucam
