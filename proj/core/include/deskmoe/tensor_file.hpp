// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace deskmoe {

/// Named-tensor container used for checkpoints and packed batches.
///
/// Layout:
///   u64 little-endian  header length N
///   N bytes            UTF-8 JSON header
///   ...                raw little-endian element data
///
/// The header maps each tensor name to {"dtype", "shape", "offset", "nbytes"}
/// (offsets are relative to the first data byte) and carries free-form
/// metadata under "__metadata__". Tensors are laid out in name order.
enum class DType { kF32, kI32 };

struct StoredTensor {
  DType dtype = DType::kF32;
  std::vector<std::size_t> shape;
  std::vector<float> f32;
  std::vector<std::int32_t> i32;

  std::size_t numel() const;
  static StoredTensor from_f32(std::vector<std::size_t> shape, std::vector<float> values);
  static StoredTensor from_i32(std::vector<std::size_t> shape, std::vector<std::int32_t> values);

  friend bool operator==(const StoredTensor&, const StoredTensor&) = default;
};

struct TensorFile {
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, StoredTensor> tensors;

  const StoredTensor& at(const std::string& name) const;
};

std::string encode_tensor_file(const TensorFile& file);
TensorFile decode_tensor_file(const std::string& bytes);

/// Writes to a sibling temporary file and renames it into place.
void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile read_tensor_file(const std::filesystem::path& path);

/// Whole-file helpers shared by the CLI and the container code.
std::string read_file_bytes(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace deskmoe
