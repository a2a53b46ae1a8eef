// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "ucam/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

#include "json.hpp"
#include "ucam/io.hpp"

namespace ucam {

using nlohmann::json;

namespace {

json config_json(const ModelConfig& c) {
  return {{"grid_rows", c.grid_rows},       {"grid_cols", c.grid_cols},       {"cell_kinds", c.cell_kinds},
          {"image_channels", c.image_channels}, {"vocab_size", c.vocab_size}, {"question_dim", c.question_dim},
          {"attention_dim", c.attention_dim}, {"feature_dim", c.feature_dim}, {"hidden", c.hidden},
          {"answers", c.answers},           {"dropout", c.dropout},           {"init_scale", c.init_scale}};
}

ModelConfig config_from(const json& j) {
  ModelConfig c;
  c.grid_rows = j.at("grid_rows").get<std::size_t>();
  c.grid_cols = j.at("grid_cols").get<std::size_t>();
  c.cell_kinds = j.at("cell_kinds").get<std::size_t>();
  c.image_channels = j.at("image_channels").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.question_dim = j.at("question_dim").get<std::size_t>();
  c.attention_dim = j.at("attention_dim").get<std::size_t>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.answers = j.at("answers").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.init_scale = j.at("init_scale").get<double>();
  return c;
}

void put_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xff));
    bits >>= 8;
  }
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) { return config_json(cfg).dump(); }
ModelConfig model_config_from_json(std::string_view text) { return config_from(json::parse(text)); }

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  std::string blob;
  json tensors = json::array();
  ckpt.params.for_each([&](Partition p, std::string_view name, const RealArray& a) {
    tensors.push_back({{"partition", partition_name(p)},
                       {"name", name},
                       {"shape", a.shape()},
                       {"offset", blob.size()},
                       {"bytes", a.size() * 8}});
    for (double v : a.span()) put_le(blob, v);
  });
  json manifest;
  manifest["format"] = "ucam-checkpoint";
  manifest["version"] = 1;
  manifest["dtype"] = "float64-le";
  manifest["step"] = ckpt.step;
  manifest["model"] = config_json(ckpt.config);
  manifest["tensors"] = tensors;
  manifest["total_bytes"] = blob.size();
  manifest["sha256"] = sha256_hex(blob);
  write_text_file(dir / "checkpoint.bin", blob);
  write_text_file(dir / "checkpoint.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto mpath = dir / "checkpoint.json", bpath = dir / "checkpoint.bin";
  if (!std::filesystem::exists(mpath)) throw std::runtime_error("missing checkpoint: " + mpath.string());
  if (!std::filesystem::exists(bpath)) throw std::runtime_error("missing checkpoint: " + bpath.string());
  const json manifest = json::parse(read_text_file(mpath));
  const std::string blob = read_text_file(bpath);
  if (blob.size() != manifest.at("total_bytes").get<std::size_t>()) {
    throw std::runtime_error("checkpoint size mismatch: " + bpath.string());
  }
  Checkpoint ckpt;
  ckpt.config = config_from(manifest.at("model"));
  ckpt.step = manifest.at("step").get<std::uint64_t>();
  ckpt.params = Parameters::zeros(ckpt.config);
  const json& tensors = manifest.at("tensors");
  std::size_t k = 0;
  ckpt.params.for_each([&](Partition p, std::string_view name, RealArray& a) {
    if (k >= tensors.size()) throw std::runtime_error("checkpoint is missing tensors");
    const json& t = tensors[k++];
    if (t.at("name").get<std::string>() != name || t.at("partition").get<std::string>() != partition_name(p) ||
        t.at("shape").get<std::vector<std::size_t>>() != a.shape()) {
      throw std::runtime_error("checkpoint tensor mismatch at " + std::string(name));
    }
    const std::size_t offset = t.at("offset").get<std::size_t>();
    if (offset + a.size() * 8 > blob.size()) throw std::runtime_error("checkpoint blob truncated");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = get_le(blob.data() + offset + 8 * i);
  });
  if (k != tensors.size()) throw std::runtime_error("checkpoint has extra tensors");
  return ckpt;
}

}  // namespace ucam
