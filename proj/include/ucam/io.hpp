// Copyright 2026 The ucam Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
//
// File helpers: SHA-256 digests and 8-bit grayscale PNG output.

#ifndef UCAM_IO_HPP_
#define UCAM_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace ucam {

/// Incremental SHA-256; hex() finalizes.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;
  void update(const void* data, std::size_t size);
  void update(std::string_view s) { update(s.data(), s.size()); }
  std::string hex();

 private:
  void* ctx_;
};

std::string sha256_hex(std::string_view bytes);
/// Streams the file through the digest. Throws std::runtime_error if unreadable.
std::string sha256_file(const std::filesystem::path& path);

/// Writes row-major 8-bit grayscale pixels.
void write_png_gray(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                    std::span<const std::uint8_t> pixels);

/// Writes `contents` to `path`, replacing any existing file.
void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace ucam

#endif  // UCAM_IO_HPP_
