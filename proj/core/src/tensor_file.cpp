// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/tensor_file.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "deskmoe/errors.hpp"

namespace deskmoe {

namespace {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559, "IEEE-754 binary32 required");

template <typename T>
void append_le(std::string& out, T value) {
  auto bits = std::bit_cast<std::array<char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  out.append(bits.data(), bits.size());
}

template <typename T>
T load_le(const char* p) {
  std::array<char, sizeof(T)> bits;
  std::memcpy(bits.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  return std::bit_cast<T>(bits);
}

const char* dtype_name(DType d) { return d == DType::kF32 ? "F32" : "I32"; }

DType parse_dtype(const std::string& s) {
  if (s == "F32") return DType::kF32;
  if (s == "I32") return DType::kI32;
  throw IoError("tensor file: unsupported dtype '" + s + "'");
}

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

}  // namespace

std::size_t StoredTensor::numel() const { return dtype == DType::kF32 ? f32.size() : i32.size(); }

StoredTensor StoredTensor::from_f32(std::vector<std::size_t> shape, std::vector<float> values) {
  if (product(shape) != values.size()) throw DimensionError("stored tensor: shape/data length mismatch");
  StoredTensor t;
  t.dtype = DType::kF32;
  t.shape = std::move(shape);
  t.f32 = std::move(values);
  return t;
}

StoredTensor StoredTensor::from_i32(std::vector<std::size_t> shape, std::vector<std::int32_t> values) {
  if (product(shape) != values.size()) throw DimensionError("stored tensor: shape/data length mismatch");
  StoredTensor t;
  t.dtype = DType::kI32;
  t.shape = std::move(shape);
  t.i32 = std::move(values);
  return t;
}

const StoredTensor& TensorFile::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw IoError("tensor file: missing tensor '" + name + "'");
  return it->second;
}

std::string encode_tensor_file(const TensorFile& file) {
  nlohmann::json header = nlohmann::json::object();
  header["__metadata__"] = file.metadata;
  std::uint64_t offset = 0;
  for (const auto& [name, t] : file.tensors) {
    if (name == "__metadata__") throw IoError("tensor file: reserved tensor name '__metadata__'");
    const std::uint64_t nbytes = static_cast<std::uint64_t>(t.numel()) * 4;
    header[name] = {{"dtype", dtype_name(t.dtype)}, {"shape", t.shape}, {"offset", offset}, {"nbytes", nbytes}};
    offset += nbytes;
  }
  const std::string head = header.dump();

  std::string out;
  out.reserve(8 + head.size() + offset);
  append_le<std::uint64_t>(out, head.size());
  out += head;
  for (const auto& [name, t] : file.tensors) {
    if (t.dtype == DType::kF32) {
      for (float v : t.f32) append_le(out, v);
    } else {
      for (std::int32_t v : t.i32) append_le(out, v);
    }
  }
  return out;
}

TensorFile decode_tensor_file(const std::string& bytes) {
  if (bytes.size() < 8) throw IoError("tensor file: truncated header length");
  const auto head_len = load_le<std::uint64_t>(bytes.data());
  if (head_len > bytes.size() - 8) throw IoError("tensor file: header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(head_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("tensor file: malformed header: ") + e.what());
  }
  if (!header.is_object()) throw IoError("tensor file: header is not a JSON object");

  const std::size_t data_start = 8 + head_len;
  const std::size_t data_len = bytes.size() - data_start;
  TensorFile file;
  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") {
      file.metadata = entry;
      continue;
    }
    StoredTensor t;
    t.dtype = parse_dtype(entry.at("dtype").get<std::string>());
    t.shape = entry.at("shape").get<std::vector<std::size_t>>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const std::size_t n = product(t.shape);
    if (entry.contains("nbytes") && entry["nbytes"].get<std::uint64_t>() != n * 4) {
      throw IoError("tensor file: byte count of '" + name + "' disagrees with its shape");
    }
    if (offset > data_len || n * 4 > data_len - offset) throw IoError("tensor file: data of '" + name + "' out of range");
    const char* p = bytes.data() + data_start + offset;
    if (t.dtype == DType::kF32) {
      t.f32.resize(n);
      for (std::size_t i = 0; i < n; ++i) t.f32[i] = load_le<float>(p + 4 * i);
    } else {
      t.i32.resize(n);
      for (std::size_t i = 0; i < n; ++i) t.i32[i] = load_le<std::int32_t>(p + 4 * i);
    }
    file.tensors.emplace(name, std::move(t));
  }
  return file;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  write_file_atomic(path, encode_tensor_file(file));
}

TensorFile read_tensor_file(const std::filesystem::path& path) { return decode_tensor_file(read_file_bytes(path)); }

}  // namespace deskmoe
