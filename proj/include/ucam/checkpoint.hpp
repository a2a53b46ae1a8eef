// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoints: checkpoint.json lists every tensor (partition, name, shape,
// byte offset) plus the model configuration; checkpoint.bin holds the values
// as little-endian 64-bit floats in the same order.

#ifndef UCAM_CHECKPOINT_HPP_
#define UCAM_CHECKPOINT_HPP_

#include <filesystem>
#include <string>

#include "ucam/model.hpp"

namespace ucam {

struct Checkpoint {
  ModelConfig config;
  Parameters params;
  std::uint64_t step = 0;
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(std::string_view text);

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
/// Throws std::runtime_error naming the missing path, or on any size or shape mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace ucam

#endif  // UCAM_CHECKPOINT_HPP_
