// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic visual question answering data: symbolic shape/color scenes on a
// grid, templated questions, ten noisy annotator answers, and a ground-truth
// attention map per record. Splits are stored as JSONL next to a manifest
// carrying SHA-256 checksums.

#ifndef UCAM_DATA_HPP_
#define UCAM_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ucam/gca.hpp"
#include "ucam/model.hpp"
#include "ucam/numerics.hpp"

namespace ucam {

enum class Shape : std::uint8_t { circle, square, triangle };
enum class Color : std::uint8_t { red, green, blue, yellow };
enum class QuestionType : std::uint8_t { color, count, exists };

inline constexpr std::size_t kShapes = 3;
inline constexpr std::size_t kColors = 4;
/// Cell kind 0 is empty; 1 + 4 * shape + color otherwise.
inline constexpr std::size_t kCellKinds = 1 + kShapes * kColors;

std::uint8_t cell_kind(Shape shape, Color color);
std::optional<Shape> cell_shape(std::uint8_t kind);
std::optional<Color> cell_color(std::uint8_t kind);
std::string_view shape_name(Shape s);
std::string_view color_name(Color c);

/// Fixed question vocabulary (14 tokens) and answer space (16 answers).
const std::vector<std::string>& vocabulary();
const std::vector<std::string>& answer_space();
std::optional<std::size_t> token_id(std::string_view token);
std::optional<std::size_t> answer_id(std::string_view answer);

struct VQARecord {
  std::uint64_t record_id = 0;
  Scene scene;
  std::vector<std::string> question;
  std::vector<std::string> annotations;  // exactly 10
  std::string gt_answer;
  RealArray gt_attention;  // [rows, cols], sums to 1
  bool ambiguous = false;

  friend bool operator==(const VQARecord&, const VQARecord&) = default;
};

struct GenerationParams {
  std::size_t rows = 7;
  std::size_t cols = 7;
  double ambiguous_fraction = 0.1;
  double annotator_accuracy = 0.8;
  std::size_t annotators = 10;
};

struct SplitSizes {
  std::size_t train = 5000;
  std::size_t val = 1000;
  std::size_t test = 1000;
};

struct SplitInfo {
  std::string name;
  std::size_t count = 0;
  std::string file;
  std::string sha256;
};

struct DatasetManifest {
  int schema_version = 1;
  std::uint64_t seed = 0;
  GenerationParams params;
  std::vector<SplitInfo> splits;
  std::vector<std::string> vocabulary;
  std::vector<std::string> answers;

  const SplitInfo& split(std::string_view name) const;
};

inline constexpr const char* kSplitNames[] = {"train", "val", "test"};

/// Deterministic in (seed, split index, record index).
VQARecord generate_record(std::uint64_t seed, std::size_t split_index, std::size_t index,
                          const GenerationParams& params = {});

/// Writes manifest.json and one JSONL file per split into `dir` (created if needed).
DatasetManifest generate_dataset(const std::filesystem::path& dir, std::uint64_t seed, const SplitSizes& sizes,
                                 const GenerationParams& params = {});

/// Answer and referenced cells re-derived from the scene and question alone.
struct OracleResult {
  QuestionType type = QuestionType::color;
  std::optional<std::string> answer;  // nullopt when the question is ambiguous
  std::vector<std::size_t> cells;     // cells holding the referenced shape
  std::vector<std::string> candidates;  // possible answers of an ambiguous question
};

/// Throws std::invalid_argument for a question outside the templates.
OracleResult rule_oracle(const Scene& scene, const std::vector<std::string>& question);

/// Ground-truth attention for a set of referenced cells: uniform over them, or
/// over the whole grid when the set is empty.
RealArray reference_attention(std::size_t rows, std::size_t cols, const std::vector<std::size_t>& cells);

/// Returns an empty string when the record is consistent, else the reason.
std::string check_record(const VQARecord& record);

std::string record_to_json(const VQARecord& record);
VQARecord record_from_json(std::string_view line);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& dir);

/// Streams one split in manifest order. The constructor verifies the file's
/// checksum; any mismatch, parse failure or count mismatch throws
/// std::runtime_error("corrupt dataset").
class RecordReader {
 public:
  RecordReader(const std::filesystem::path& dir, std::string_view split);
  std::optional<VQARecord> next();
  std::size_t expected() const { return expected_; }

 private:
  std::ifstream in_;
  std::size_t expected_ = 0;
  std::size_t read_ = 0;
};

std::vector<VQARecord> load_split(const std::filesystem::path& dir, std::string_view split);

TrainingExample to_training_example(const VQARecord& record);
/// Model configuration matching the dataset grid and vocabularies.
ModelConfig model_config_for(const GenerationParams& params);

}  // namespace ucam

#endif  // UCAM_DATA_HPP_
