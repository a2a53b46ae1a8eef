// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "ucam/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "ucam/io.hpp"

namespace ucam {

using nlohmann::json;

namespace {

constexpr const char* kShapeNames[] = {"circle", "square", "triangle"};
constexpr const char* kColorNames[] = {"red", "green", "blue", "yellow"};
constexpr std::uint64_t kDataStream = 0xda7a;

[[noreturn]] void corrupt() { throw std::runtime_error("corrupt dataset"); }

std::string plural(Shape s) { return std::string(shape_name(s)) + "s"; }

std::vector<std::string> question_tokens(QuestionType type, Shape s) {
  switch (type) {
    case QuestionType::color: return {"what", "color", "is", "the", std::string(shape_name(s))};
    case QuestionType::count: return {"how", "many", plural(s)};
    case QuestionType::exists: return {"is", "there", "a", std::string(shape_name(s))};
  }
  return {};
}

Shape other_shape(RngStream& rng, Shape s) {
  const auto k = static_cast<std::uint8_t>((static_cast<std::uint64_t>(s) + 1 + rng.below(kShapes - 1)) % kShapes);
  return static_cast<Shape>(k);
}

Color random_color(RngStream& rng) { return static_cast<Color>(rng.below(kColors)); }

/// Free cells in random order.
std::vector<std::size_t> shuffled_cells(RngStream& rng, std::size_t n) {
  std::vector<std::size_t> cells(n);
  std::iota(cells.begin(), cells.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(cells[i - 1], cells[rng.below(i)]);
  return cells;
}

/// Answers of the same question type other than `correct`.
std::vector<std::string> distractors(QuestionType type, const std::string& correct) {
  std::vector<std::string> pool;
  switch (type) {
    case QuestionType::color:
      for (const char* c : kColorNames) pool.emplace_back(c);
      break;
    case QuestionType::count:
      for (int k = 0; k <= 9; ++k) pool.push_back(std::to_string(k));
      break;
    case QuestionType::exists: pool = {"yes", "no"}; break;
  }
  pool.erase(std::remove(pool.begin(), pool.end(), correct), pool.end());
  return pool;
}

}  // namespace

std::uint8_t cell_kind(Shape shape, Color color) {
  return static_cast<std::uint8_t>(1 + kColors * static_cast<std::size_t>(shape) + static_cast<std::size_t>(color));
}

std::optional<Shape> cell_shape(std::uint8_t kind) {
  if (kind == 0 || kind >= kCellKinds) return std::nullopt;
  return static_cast<Shape>((kind - 1) / kColors);
}

std::optional<Color> cell_color(std::uint8_t kind) {
  if (kind == 0 || kind >= kCellKinds) return std::nullopt;
  return static_cast<Color>((kind - 1) % kColors);
}

std::string_view shape_name(Shape s) { return kShapeNames[static_cast<std::size_t>(s)]; }
std::string_view color_name(Color c) { return kColorNames[static_cast<std::size_t>(c)]; }

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> v = {"what",   "color",  "is",      "the",     "how",
                                             "many",   "there",  "a",       "circle",  "square",
                                             "triangle", "circles", "squares", "triangles"};
  return v;
}

const std::vector<std::string>& answer_space() {
  static const std::vector<std::string> a = {"red", "green", "blue", "yellow", "yes", "no", "0", "1",
                                             "2",   "3",     "4",    "5",      "6",   "7",  "8", "9"};
  return a;
}

std::optional<std::size_t> token_id(std::string_view token) {
  const auto& v = vocabulary();
  const auto it = std::find(v.begin(), v.end(), token);
  if (it == v.end()) return std::nullopt;
  return static_cast<std::size_t>(it - v.begin());
}

std::optional<std::size_t> answer_id(std::string_view answer) {
  const auto& a = answer_space();
  const auto it = std::find(a.begin(), a.end(), answer);
  if (it == a.end()) return std::nullopt;
  return static_cast<std::size_t>(it - a.begin());
}

const SplitInfo& DatasetManifest::split(std::string_view name) const {
  for (const SplitInfo& s : splits) {
    if (s.name == name) return s;
  }
  throw std::invalid_argument("unknown split: " + std::string(name));
}

RealArray reference_attention(std::size_t rows, std::size_t cols, const std::vector<std::size_t>& cells) {
  RealArray m({rows, cols});
  if (cells.empty()) {
    m.fill(1.0 / static_cast<double>(rows * cols));
  } else {
    for (std::size_t c : cells) m[c] = 1.0 / static_cast<double>(cells.size());
  }
  return m;
}

VQARecord generate_record(std::uint64_t seed, std::size_t split_index, std::size_t index,
                          const GenerationParams& params) {
  RngStream rng = RngStream(seed, kDataStream).child({split_index, index});
  const std::size_t n = params.rows * params.cols;
  VQARecord r;
  r.record_id = split_index * 1000000 + index;
  r.scene = Scene{params.rows, params.cols, std::vector<std::uint8_t>(n, 0)};

  std::vector<std::size_t> free = shuffled_cells(rng, n);
  std::size_t next_free = 0;
  auto place = [&](Shape s, Color c) {
    if (next_free >= free.size()) throw std::invalid_argument("grid too small for the scene");
    r.scene.cells[free[next_free++]] = cell_kind(s, c);
  };

  const Shape target = static_cast<Shape>(rng.below(kShapes));
  r.ambiguous = rng.uniform() < params.ambiguous_fraction;
  const QuestionType type = r.ambiguous ? QuestionType::color : static_cast<QuestionType>(rng.below(3));
  std::size_t n_distractors = 0;

  switch (type) {
    case QuestionType::color: {
      const Color c1 = random_color(rng);
      place(target, c1);
      if (r.ambiguous) {
        const auto c2 = static_cast<Color>((static_cast<std::uint64_t>(c1) + 1 + rng.below(kColors - 1)) % kColors);
        place(target, c2);
      }
      n_distractors = rng.below(7);
      break;
    }
    case QuestionType::count: {
      const std::size_t k = rng.below(10);
      for (std::size_t i = 0; i < k; ++i) place(target, random_color(rng));
      n_distractors = rng.below(6);
      break;
    }
    case QuestionType::exists: {
      if (rng.bernoulli(0.5)) {
        const std::size_t k = 1 + rng.below(3);
        for (std::size_t i = 0; i < k; ++i) place(target, random_color(rng));
      }
      n_distractors = 1 + rng.below(6);
      break;
    }
  }
  for (std::size_t i = 0; i < n_distractors; ++i) place(other_shape(rng, target), random_color(rng));
  r.question = question_tokens(type, target);

  const OracleResult truth = rule_oracle(r.scene, r.question);
  r.gt_attention = reference_attention(params.rows, params.cols, truth.cells);

  if (r.ambiguous) {
    // annotators split between the two colors; majority wins, ties go to the first
    std::size_t first = 0;
    for (std::size_t a = 0; a < params.annotators; ++a) {
      const bool pick_first = rng.bernoulli(0.5);
      r.annotations.push_back(truth.candidates[pick_first ? 0 : 1]);
      if (pick_first) ++first;
    }
    r.gt_answer = truth.candidates[2 * first >= params.annotators ? 0 : 1];
  } else {
    r.gt_answer = *truth.answer;
    const std::vector<std::string> wrong = distractors(type, r.gt_answer);
    for (std::size_t a = 0; a < params.annotators; ++a) {
      if (rng.uniform() < params.annotator_accuracy) {
        r.annotations.push_back(r.gt_answer);
      } else {
        r.annotations.push_back(wrong[rng.below(wrong.size())]);
      }
    }
  }
  return r;
}

OracleResult rule_oracle(const Scene& scene, const std::vector<std::string>& q) {
  OracleResult out;
  std::optional<Shape> shape;
  auto shape_from = [](std::string_view word, bool plural_form) -> std::optional<Shape> {
    for (std::size_t s = 0; s < kShapes; ++s) {
      std::string name = kShapeNames[s];
      if (plural_form) name += "s";
      if (word == name) return static_cast<Shape>(s);
    }
    return std::nullopt;
  };
  if (q.size() == 5 && q[0] == "what" && q[1] == "color" && q[2] == "is" && q[3] == "the") {
    out.type = QuestionType::color;
    shape = shape_from(q[4], false);
  } else if (q.size() == 3 && q[0] == "how" && q[1] == "many") {
    out.type = QuestionType::count;
    shape = shape_from(q[2], true);
  } else if (q.size() == 4 && q[0] == "is" && q[1] == "there" && q[2] == "a") {
    out.type = QuestionType::exists;
    shape = shape_from(q[3], false);
  }
  if (!shape) throw std::invalid_argument("question does not match any template");

  for (std::size_t c = 0; c < scene.cells.size(); ++c) {
    if (cell_shape(scene.cells[c]) == shape) out.cells.push_back(c);
  }
  switch (out.type) {
    case QuestionType::color: {
      std::vector<std::string> colors;
      for (std::size_t c : out.cells) {
        const std::string name(color_name(*cell_color(scene.cells[c])));
        if (std::find(colors.begin(), colors.end(), name) == colors.end()) colors.push_back(name);
      }
      if (colors.size() == 1) {
        out.answer = colors[0];
      } else {
        out.candidates = colors;
      }
      break;
    }
    case QuestionType::count:
      if (out.cells.size() <= 9) out.answer = std::to_string(out.cells.size());
      break;
    case QuestionType::exists: out.answer = out.cells.empty() ? "no" : "yes"; break;
  }
  return out;
}

std::string check_record(const VQARecord& r) {
  if (r.annotations.size() != 10) return "annotation count is not 10";
  for (const std::string& a : r.annotations) {
    if (!answer_id(a)) return "annotation outside the answer space: " + a;
  }
  if (!answer_id(r.gt_answer)) return "answer outside the answer space";
  for (const std::string& t : r.question) {
    if (!token_id(t)) return "token outside the vocabulary: " + t;
  }
  OracleResult truth;
  try {
    truth = rule_oracle(r.scene, r.question);
  } catch (const std::exception& e) {
    return e.what();
  }
  if (r.ambiguous) {
    if (truth.answer || truth.candidates.size() != 2) return "ambiguous flag disagrees with the scene";
    std::map<std::string, int> votes;
    for (const std::string& a : r.annotations) ++votes[a];
    const int v0 = votes[truth.candidates[0]], v1 = votes[truth.candidates[1]];
    if (v0 + v1 != 10) return "ambiguous annotations outside the two candidates";
    if (r.gt_answer != truth.candidates[v0 >= v1 ? 0 : 1]) return "ambiguous answer is not the majority";
  } else {
    if (!truth.answer) return "rule oracle found the question ambiguous";
    if (*truth.answer != r.gt_answer) return "answer disagrees with the rule oracle";
  }
  if (r.gt_attention.shape() != std::vector<std::size_t>{r.scene.rows, r.scene.cols}) return "attention shape";
  double total = 0.0;
  for (double v : r.gt_attention.span()) total += v;
  if (std::abs(total - 1.0) > 1e-9) return "attention does not sum to 1";
  const RealArray expected = reference_attention(r.scene.rows, r.scene.cols, truth.cells);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (std::abs(expected[i] - r.gt_attention[i]) > 1e-12) return "attention disagrees with the referenced cells";
  }
  return {};
}

std::string record_to_json(const VQARecord& r) {
  json j;
  j["record_id"] = r.record_id;
  j["scene"] = {{"rows", r.scene.rows}, {"cols", r.scene.cols}, {"cells", r.scene.cells}};
  j["question"] = r.question;
  j["annotations"] = r.annotations;
  j["gt_answer"] = r.gt_answer;
  j["gt_attention"] = r.gt_attention.values();
  j["ambiguous"] = r.ambiguous;
  return j.dump();
}

VQARecord record_from_json(std::string_view line) {
  const json j = json::parse(line);
  VQARecord r;
  r.record_id = j.at("record_id").get<std::uint64_t>();
  const json& s = j.at("scene");
  r.scene.rows = s.at("rows").get<std::size_t>();
  r.scene.cols = s.at("cols").get<std::size_t>();
  r.scene.cells = s.at("cells").get<std::vector<std::uint8_t>>();
  if (r.scene.cells.size() != r.scene.rows * r.scene.cols) throw std::invalid_argument("scene size mismatch");
  r.question = j.at("question").get<std::vector<std::string>>();
  r.annotations = j.at("annotations").get<std::vector<std::string>>();
  r.gt_answer = j.at("gt_answer").get<std::string>();
  r.gt_attention = RealArray({r.scene.rows, r.scene.cols}, j.at("gt_attention").get<std::vector<double>>());
  r.ambiguous = j.at("ambiguous").get<bool>();
  return r;
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["schema_version"] = m.schema_version;
  j["seed"] = m.seed;
  j["generation"] = {{"rows", m.params.rows},
                     {"cols", m.params.cols},
                     {"ambiguous_fraction", m.params.ambiguous_fraction},
                     {"annotator_accuracy", m.params.annotator_accuracy},
                     {"annotators", m.params.annotators}};
  j["splits"] = json::array();
  for (const SplitInfo& s : m.splits) {
    j["splits"].push_back({{"name", s.name}, {"count", s.count}, {"file", s.file}, {"sha256", s.sha256}});
  }
  j["vocabulary"] = m.vocabulary;
  j["answers"] = m.answers;
  return j.dump(2) + "\n";
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
  const std::filesystem::path path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw std::runtime_error("missing manifest: " + path.string());
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception&) {
    corrupt();
  }
  DatasetManifest m;
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != 1) throw std::runtime_error("unsupported dataset schema version");
  m.seed = j.at("seed").get<std::uint64_t>();
  const json& g = j.at("generation");
  m.params.rows = g.at("rows").get<std::size_t>();
  m.params.cols = g.at("cols").get<std::size_t>();
  m.params.ambiguous_fraction = g.at("ambiguous_fraction").get<double>();
  m.params.annotator_accuracy = g.at("annotator_accuracy").get<double>();
  m.params.annotators = g.at("annotators").get<std::size_t>();
  for (const json& s : j.at("splits")) {
    m.splits.push_back(SplitInfo{s.at("name").get<std::string>(), s.at("count").get<std::size_t>(),
                                 s.at("file").get<std::string>(), s.at("sha256").get<std::string>()});
  }
  m.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  m.answers = j.at("answers").get<std::vector<std::string>>();
  return m;
}

DatasetManifest generate_dataset(const std::filesystem::path& dir, std::uint64_t seed, const SplitSizes& sizes,
                                 const GenerationParams& params) {
  std::filesystem::create_directories(dir);
  DatasetManifest m;
  m.seed = seed;
  m.params = params;
  m.vocabulary = vocabulary();
  m.answers = answer_space();
  const std::size_t counts[] = {sizes.train, sizes.val, sizes.test};
  for (std::size_t s = 0; s < 3; ++s) {
    SplitInfo info{kSplitNames[s], counts[s], std::string(kSplitNames[s]) + ".jsonl", {}};
    std::ofstream out(dir / info.file, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / info.file).string());
    Sha256 digest;
    for (std::size_t i = 0; i < counts[s]; ++i) {
      const std::string line = record_to_json(generate_record(seed, s, i, params)) + "\n";
      out << line;
      digest.update(line);
    }
    out.close();
    if (!out) throw std::runtime_error("write failed: " + info.file);
    info.sha256 = digest.hex();
    m.splits.push_back(info);
  }
  write_text_file(dir / "manifest.json", manifest_to_json(m));
  return m;
}

RecordReader::RecordReader(const std::filesystem::path& dir, std::string_view split) {
  const DatasetManifest m = load_manifest(dir);
  const SplitInfo& info = m.split(split);
  const std::filesystem::path path = dir / info.file;
  if (!std::filesystem::exists(path)) corrupt();
  if (sha256_file(path) != info.sha256) corrupt();
  expected_ = info.count;
  in_.open(path, std::ios::binary);
  if (!in_) corrupt();
}

std::optional<VQARecord> RecordReader::next() {
  std::string line;
  if (!std::getline(in_, line)) {
    if (read_ != expected_) corrupt();
    return std::nullopt;
  }
  if (read_ >= expected_) corrupt();
  ++read_;
  try {
    return record_from_json(line);
  } catch (const std::exception&) {
    corrupt();
  }
}

std::vector<VQARecord> load_split(const std::filesystem::path& dir, std::string_view split) {
  RecordReader reader(dir, split);
  std::vector<VQARecord> out;
  out.reserve(reader.expected());
  while (auto r = reader.next()) out.push_back(std::move(*r));
  return out;
}

TrainingExample to_training_example(const VQARecord& r) {
  TrainingExample ex;
  ex.id = r.record_id;
  ex.scene = r.scene;
  for (const std::string& t : r.question) {
    const auto id = token_id(t);
    if (!id) throw std::invalid_argument("out-of-vocabulary");
    ex.tokens.push_back(*id);
  }
  const auto a = answer_id(r.gt_answer);
  if (!a) throw std::invalid_argument("answer outside the answer space");
  ex.target = *a;
  return ex;
}

ModelConfig model_config_for(const GenerationParams& params) {
  ModelConfig cfg;
  cfg.grid_rows = params.rows;
  cfg.grid_cols = params.cols;
  cfg.cell_kinds = kCellKinds;
  cfg.vocab_size = vocabulary().size();
  cfg.answers = answer_space().size();
  return cfg;
}

}  // namespace ucam
