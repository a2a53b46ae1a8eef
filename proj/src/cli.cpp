// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "ucam/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "ucam/io.hpp"
#include "ucam/run.hpp"

namespace ucam {

namespace fs = std::filesystem;

namespace {

// A usage problem detected after parsing (bad config value, refused overwrite).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config_file;
  std::optional<std::string> mode, data, runs, name;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch, max_steps;
  std::optional<double> lr, eta_loss;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_file, "flat JSON config file");
  cmd->add_option("--mode", f.mode, "training mode");
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--data", f.data, "dataset directory");
  cmd->add_option("--runs", f.runs, "runs root directory");
  cmd->add_option("--name", f.name, "run name (default <mode>_s<seed>)");
  cmd->add_option("--epochs", f.epochs);
  cmd->add_option("--batch", f.batch);
  cmd->add_option("--max-steps", f.max_steps);
  cmd->add_option("--lr", f.lr);
  cmd->add_option("--eta-loss", f.eta_loss);
  cmd->add_option("--set", f.sets, "override any config key: key=value");
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("UCAM_SEED");
  if (!v || !*v) return std::nullopt;
  try {
    std::size_t used = 0;
    const std::string s(v);
    if (s[0] == '-') throw std::invalid_argument(s);
    const std::uint64_t seed = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return seed;
  } catch (const std::logic_error&) {
    throw UsageError("UCAM_SEED is not a nonnegative integer: " + std::string(v));
  }
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig cfg;
  try {
    if (!f.config_file.empty()) {
      if (!fs::exists(f.config_file)) throw UsageError("config file not found: " + f.config_file);
      cfg.merge_json(read_text_file(f.config_file));
    }
    if (const auto s = env_seed()) cfg.seed = *s;
    if (f.mode) cfg.mode = *f.mode;
    if (f.seed) cfg.seed = *f.seed;
    if (f.data) cfg.data = *f.data;
    if (f.runs) cfg.runs = *f.runs;
    if (f.name) cfg.name = *f.name;
    if (f.epochs) cfg.epochs = *f.epochs;
    if (f.batch) cfg.batch = *f.batch;
    if (f.max_steps) cfg.max_steps = *f.max_steps;
    if (f.lr) cfg.lr = *f.lr;
    if (f.eta_loss) cfg.eta_loss = *f.eta_loss;
    for (const std::string& kv : f.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got " + kv);
      cfg.set(std::string_view(kv).substr(0, eq), std::string_view(kv).substr(eq + 1));
    }
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config file: ") + e.what());
  }
  return cfg;
}

void print_summary(std::ostream& out, const std::string& label, const EvalSummary& s) {
  out << label << ": n=" << s.count << " accuracy=" << s.accuracy << " exact=" << s.exact_accuracy
      << " rc=" << s.rank_correlation << " emd=" << s.emd << " sigma2_p=" << s.sigma2_p_mean;
  if (s.uncertainty.auroc) out << " auroc=" << *s.uncertainty.auroc;
  out << '\n';
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string cur;
  for (char c : text + ",") {
    if (c == ',') {
      if (!cur.empty()) items.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  return items;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Uncertainty-aware class activation maps for visual question answering"};
  app.require_subcommand(1);

  std::uint64_t gen_seed = 1;
  std::string gen_out = "data";
  SplitSizes sizes;
  bool force = false;
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  gen->add_option("--seed", gen_seed, "generation seed (default UCAM_SEED or 1)");
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--train", sizes.train)->check(CLI::PositiveNumber);
  gen->add_option("--val", sizes.val)->check(CLI::PositiveNumber);
  gen->add_option("--test", sizes.test)->check(CLI::PositiveNumber);
  gen->add_flag("--force", force, "overwrite an existing output directory");

  CommonFlags common;
  auto* train = app.add_subcommand("train", "train one run");
  add_common(train, common);

  std::string split = "test";
  auto* eval = app.add_subcommand("eval", "evaluate a trained run");
  add_common(eval, common);
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));

  std::vector<std::uint64_t> ids;
  std::size_t count = 4;
  auto* explain = app.add_subcommand("explain", "export certainty heatmaps for test records");
  add_common(explain, common);
  explain->add_option("--ids", ids, "record ids")->delimiter(',');
  explain->add_option("--count", count, "first N test records when --ids is absent");

  auto* analyze = app.add_subcommand("analyze", "uncertainty versus error reports");
  add_common(analyze, common);
  analyze->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));

  std::string modes_text, seeds_text = "1,2,3";
  auto* abl = app.add_subcommand("ablate", "train and test every mode across seeds");
  add_common(abl, common);
  abl->add_option("--modes", modes_text, "comma-separated modes (default all)");
  abl->add_option("--seeds", seeds_text, "comma-separated seeds");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      if (gen->count("--seed") == 0) gen_seed = env_seed().value_or(gen_seed);
      if (fs::exists(gen_out) && !fs::is_empty(gen_out) && !force) {
        throw UsageError("output directory exists: " + gen_out + " (use --force to overwrite)");
      }
      const DatasetManifest m = generate_dataset(gen_out, gen_seed, sizes);
      out << "dataset " << gen_out << " seed=" << m.seed << '\n';
      for (const SplitInfo& s : m.splits) out << "  " << s.name << ": " << s.count << " records sha256=" << s.sha256 << '\n';
      return kExitOk;
    }

    const RunConfig cfg = resolve(common);
    if (train->parsed()) {
      const TrainOutcome t = train_run(cfg);
      out << "trained " << cfg.mode << " seed=" << cfg.seed << " steps=" << t.steps << " L_y=" << t.last.loss_y
          << " -> " << t.dir.string() << '\n';
    } else if (eval->parsed()) {
      print_summary(out, cfg.run_name() + " " + split, eval_run(cfg, split));
    } else if (explain->parsed()) {
      for (const fs::path& p : explain_run(cfg, ids, count)) out << p.string() << '\n';
    } else if (analyze->parsed()) {
      print_summary(out, cfg.run_name() + " " + split, analyze_run(cfg, split));
    } else if (abl->parsed()) {
      std::vector<std::string> modes = split_list(modes_text);
      if (modes.empty()) {
        for (Mode m : all_modes()) modes.emplace_back(mode_name(m));
      }
      for (const std::string& m : modes) {
        RunConfig probe = cfg;
        probe.mode = m;
        try {
          probe.validate();
        } catch (const std::invalid_argument& e) {
          throw UsageError(e.what());
        }
      }
      std::vector<std::uint64_t> seeds;
      for (const std::string& s : split_list(seeds_text)) {
        try {
          seeds.push_back(std::stoull(s));
        } catch (const std::logic_error&) {
          throw UsageError("bad seed: " + s);
        }
      }
      for (const AblationRow& r : ablate(cfg, modes, seeds)) print_summary(out, r.mode + " s" + std::to_string(r.seed), r.test);
    }
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace ucam
