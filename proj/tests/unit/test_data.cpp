// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "tempdir.hpp"
#include "ucam/data.hpp"
#include "ucam/io.hpp"

using namespace ucam;
using ucam::testing::TempDir;
namespace fs = std::filesystem;

namespace {

const char* const kShapeWords[] = {"circle", "square", "triangle"};
const char* const kColorWords[] = {"red", "green", "blue", "yellow"};

// Re-derives answers straight from the raw cell codes, without the library's
// shape/color helpers.
struct Derived {
  std::set<std::string> answers;  // one element unless the question is ambiguous
  std::vector<std::size_t> cells;
};

Derived derive(const VQARecord& r) {
  const auto& q = r.question;
  std::string word = q.back();
  const bool plural = q[0] == "how";
  if (plural) word.pop_back();
  int shape = -1;
  for (int s = 0; s < 3; ++s) {
    if (word == kShapeWords[s]) shape = s;
  }
  REQUIRE(shape >= 0);
  Derived d;
  std::set<std::string> colors;
  for (std::size_t c = 0; c < r.scene.cells.size(); ++c) {
    const int kind = r.scene.cells[c];
    if (kind == 0 || (kind - 1) / 4 != shape) continue;
    d.cells.push_back(c);
    colors.insert(kColorWords[(kind - 1) % 4]);
  }
  if (q[0] == "what") {
    d.answers = colors;
  } else if (plural) {
    d.answers.insert(std::to_string(d.cells.size()));
  } else {
    d.answers.insert(d.cells.empty() ? "no" : "yes");
  }
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("cell kinds round trip") {
  CHECK(kCellKinds == 13);
  for (std::size_t s = 0; s < kShapes; ++s) {
    for (std::size_t c = 0; c < kColors; ++c) {
      const std::uint8_t k = cell_kind(static_cast<Shape>(s), static_cast<Color>(c));
      CHECK(k == 1 + 4 * s + c);
      CHECK(*cell_shape(k) == static_cast<Shape>(s));
      CHECK(*cell_color(k) == static_cast<Color>(c));
    }
  }
  CHECK_FALSE(cell_shape(0));
  CHECK(vocabulary().size() == 14);
  CHECK(answer_space().size() == 16);
}

TEST_CASE("generated records agree with an independent derivation") {
  std::size_t ambiguous = 0;
  const std::size_t n = 3000;
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < n; ++i) {
    const VQARecord r = generate_record(11, 0, i);
    CAPTURE(i);
    REQUIRE(check_record(r).empty());
    REQUIRE(r.annotations.size() == 10);
    ++counts[r.gt_answer];
    const Derived d = derive(r);
    double total = 0.0;
    for (double v : r.gt_attention.span()) total += v;
    CHECK(std::abs(total - 1.0) <= 1e-9);
    // uniform over referenced cells, or over the grid when none exist
    const std::size_t support = d.cells.empty() ? r.gt_attention.size() : d.cells.size();
    for (std::size_t c = 0; c < r.gt_attention.size(); ++c) {
      const bool in = d.cells.empty() || std::find(d.cells.begin(), d.cells.end(), c) != d.cells.end();
      CHECK(r.gt_attention[c] == doctest::Approx(in ? 1.0 / support : 0.0).epsilon(1e-12));
    }
    if (r.ambiguous) {
      ++ambiguous;
      REQUIRE(d.answers.size() == 2);
      std::map<std::string, int> votes;
      for (const auto& a : r.annotations) ++votes[a];
      CHECK(votes.size() <= 2);
      for (const auto& [a, v] : votes) CHECK(d.answers.count(a) == 1);
      CHECK(d.answers.count(r.gt_answer) == 1);
      const int winner = votes[r.gt_answer];
      CHECK(2 * winner >= 10);
    } else {
      REQUIRE(d.answers.size() == 1);
      CHECK(*d.answers.begin() == r.gt_answer);
    }
  }
  const double frac = static_cast<double>(ambiguous) / n;
  CHECK(frac == doctest::Approx(0.1).epsilon(0.25));
  for (const auto& [answer, k] : counts) {
    CAPTURE(answer);
    CHECK(static_cast<double>(k) / n <= 0.35);
  }
}

TEST_CASE("annotators are correct about 80% of the time") {
  std::size_t right = 0, total = 0;
  for (std::size_t i = 0; i < 2000; ++i) {
    const VQARecord r = generate_record(5, 1, i);
    if (r.ambiguous) continue;
    for (const auto& a : r.annotations) right += a == r.gt_answer;
    total += r.annotations.size();
  }
  CHECK(static_cast<double>(right) / total == doctest::Approx(0.8).epsilon(0.02));
}

TEST_CASE("rule oracle on hand-built scenes") {
  Scene s{2, 2, {0, cell_kind(Shape::square, Color::blue), cell_kind(Shape::circle, Color::red), 0}};
  CHECK(*rule_oracle(s, {"what", "color", "is", "the", "square"}).answer == "blue");
  CHECK(*rule_oracle(s, {"how", "many", "triangles"}).answer == "0");
  CHECK(*rule_oracle(s, {"is", "there", "a", "circle"}).answer == "yes");
  s.cells[3] = cell_kind(Shape::square, Color::green);
  const OracleResult amb = rule_oracle(s, {"what", "color", "is", "the", "square"});
  CHECK_FALSE(amb.answer);
  CHECK(amb.candidates == std::vector<std::string>{"blue", "green"});
  CHECK_THROWS_AS(rule_oracle(s, {"why", "is", "the", "square"}), std::invalid_argument);
}

TEST_CASE("dataset generation is byte-identical per seed and loads back exactly") {
  TempDir tmp;
  const SplitSizes sizes{120, 40, 30};
  const DatasetManifest m1 = generate_dataset(tmp.path / "a", 7, sizes);
  generate_dataset(tmp.path / "b", 7, sizes);
  generate_dataset(tmp.path / "c", 8, sizes);
  for (const char* f : {"manifest.json", "train.jsonl", "val.jsonl", "test.jsonl"}) {
    CHECK(slurp(tmp.path / "a" / f) == slurp(tmp.path / "b" / f));
  }
  CHECK(slurp(tmp.path / "a" / "train.jsonl") != slurp(tmp.path / "c" / "train.jsonl"));

  CHECK(m1.split("train").count == 120);
  CHECK(m1.split("val").count == 40);
  CHECK(m1.split("test").count == 30);
  CHECK(m1.split("test").sha256 == sha256_file(tmp.path / "a" / "test.jsonl"));

  const DatasetManifest loaded = load_manifest(tmp.path / "a");
  CHECK(loaded.seed == 7);
  CHECK(loaded.vocabulary == vocabulary());
  CHECK(loaded.answers == answer_space());

  std::size_t split_index = 0;
  for (const char* split : kSplitNames) {
    RecordReader reader(tmp.path / "a", split);
    std::size_t i = 0;
    while (auto r = reader.next()) {
      CHECK(*r == generate_record(7, split_index, i));
      CHECK(r->record_id == split_index * 1000000 + i);
      ++i;
    }
    CHECK(i == reader.expected());
    ++split_index;
  }
}

TEST_CASE("record JSON round trip preserves every field") {
  for (std::size_t i = 0; i < 50; ++i) {
    const VQARecord r = generate_record(3, 2, i);
    const VQARecord back = record_from_json(record_to_json(r));
    CHECK(back == r);
    CHECK(record_to_json(back) == record_to_json(r));
  }
}

TEST_CASE("damaged dataset files are reported as corrupt") {
  TempDir tmp;
  generate_dataset(tmp.path, 2, SplitSizes{20, 10, 10});
  const fs::path train = tmp.path / "train.jsonl";
  const std::string body = slurp(train);

  SUBCASE("truncated") {
    std::ofstream(train, std::ios::binary | std::ios::trunc) << body.substr(0, body.size() / 2);
  }
  SUBCASE("one byte flipped") {
    std::string b = body;
    b[b.size() / 3] = b[b.size() / 3] == '1' ? '2' : '1';
    std::ofstream(train, std::ios::binary | std::ios::trunc) << b;
  }
  SUBCASE("manifest sha edited to match a truncated file") {
    const std::string cut = body.substr(0, body.find('\n') + 1);
    std::ofstream(train, std::ios::binary | std::ios::trunc) << cut;
    std::string manifest = slurp(tmp.path / "manifest.json");
    const std::string old_sha = sha256_hex(body), new_sha = sha256_hex(cut);
    manifest.replace(manifest.find(old_sha), old_sha.size(), new_sha);
    std::ofstream(tmp.path / "manifest.json", std::ios::binary | std::ios::trunc) << manifest;
  }
  bool thrown = false;
  try {
    RecordReader reader(tmp.path, "train");
    while (reader.next()) {
    }
  } catch (const std::runtime_error& e) {
    thrown = true;
    CHECK(std::string(e.what()) == "corrupt dataset");
  }
  CHECK(thrown);
}

TEST_CASE("training examples map tokens and answers to ids") {
  const VQARecord r = generate_record(1, 0, 0);
  const TrainingExample ex = to_training_example(r);
  CHECK(ex.id == r.record_id);
  CHECK(answer_space()[ex.target] == r.gt_answer);
  REQUIRE(ex.tokens.size() == r.question.size());
  for (std::size_t i = 0; i < ex.tokens.size(); ++i) CHECK(vocabulary()[ex.tokens[i]] == r.question[i]);
  const ModelConfig cfg = model_config_for(GenerationParams{});
  CHECK(cfg.grid_rows == 7);
  CHECK(cfg.answers == 16);
}
