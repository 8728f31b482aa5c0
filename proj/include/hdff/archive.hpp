// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

// Self-describing binary container used for weights files and checkpoints:
//
//   "HDFFARC\0" | u32 schema | u64 header_len | header JSON | payload | u64 fnv1a
//
// The header lists every tensor (name, shape, byte offset into the payload);
// payload values are little-endian IEEE doubles. The trailing checksum covers
// all preceding bytes, so truncated or partially written files are rejected.

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "hdff/tensor.hpp"

namespace hdff {

inline constexpr std::uint32_t kArchiveSchema = 1;

struct Archive {
  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Tensor> tensors;

  const Tensor& tensor(const std::string& name) const;
};

std::string encode_archive(const Archive& archive);
Archive decode_archive(const std::string& bytes, const std::string& origin = "<memory>");

// Write-temp-then-rename; readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

void save_archive(const std::filesystem::path& path, const Archive& archive);
Archive load_archive(const std::filesystem::path& path, const std::string& expected_kind = "");

}  // namespace hdff
