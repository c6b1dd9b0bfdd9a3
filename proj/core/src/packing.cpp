// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/packing.hpp"

#include <fstream>
#include <limits>

#include "deskmoe/errors.hpp"
#include "deskmoe/tensor_file.hpp"

namespace deskmoe {

void SourceExample::validate() const {
  if (tokens.empty()) throw InputError("example '" + id + "' has no tokens");
  if (eligible.size() != tokens.size()) {
    throw InputError("example '" + id + "': " + std::to_string(eligible.size()) + " loss flags for " +
                     std::to_string(tokens.size()) + " tokens");
  }
}

std::size_t PackedSequence::num_segments() const {
  std::int32_t last = 0;
  for (std::int32_t s : segments) last = std::max(last, s);
  return static_cast<std::size_t>(last);
}

std::size_t PackedSequence::padding() const {
  std::size_t n = 0;
  for (std::int32_t s : segments) n += s == 0 ? 1 : 0;
  return n;
}

void PackedSequence::validate() const {
  const std::size_t n = tokens.size();
  if (segments.size() != n || positions.size() != n || weights.size() != n) {
    throw ContractError("packed sequence: field lengths differ");
  }
  std::int32_t prev_segment = 0;
  bool seen_padding = false;
  for (std::size_t t = 0; t < n; ++t) {
    const std::int32_t s = segments[t];
    if (s == 0) {
      seen_padding = true;
      if (weights[t] != 0.0f) throw ContractError("packed sequence: padding carries loss weight");
      continue;
    }
    if (seen_padding) throw ContractError("packed sequence: content after padding");
    if (s < prev_segment || s > prev_segment + 1) throw ContractError("packed sequence: segment ids not consecutive");
    const bool starts = s != prev_segment;
    const std::int32_t expected = starts ? 0 : positions[t - 1] + 1;
    if (positions[t] != expected) throw ContractError("packed sequence: positions must restart per segment");
    if (weights[t] < 0.0f) throw ContractError("packed sequence: negative loss weight");
    prev_segment = s;
  }
}

std::vector<PackedSequence> pack(std::span<const SourceExample> examples, std::size_t capacity,
                                 std::int32_t separator, std::int32_t pad_token) {
  if (capacity == 0) throw ConfigError("pack: capacity must be positive");
  struct Open {
    PackedSequence seq;
    std::int32_t segments = 0;
  };
  std::vector<Open> bins;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const SourceExample& ex = examples[i];
    ex.validate();
    const std::size_t need = ex.tokens.size() + 1;
    if (need > capacity) {
      throw InputError("example '" + (ex.id.empty() ? "#" + std::to_string(i) : ex.id) + "' needs " +
                       std::to_string(need) + " slots, capacity is " + std::to_string(capacity));
    }
    Open* bin = nullptr;
    for (Open& b : bins) {
      if (capacity - b.seq.size() >= need) {
        bin = &b;
        break;
      }
    }
    if (bin == nullptr) bin = &bins.emplace_back();
    const std::int32_t segment = ++bin->segments;
    PackedSequence& s = bin->seq;
    for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
      s.tokens.push_back(ex.tokens[t]);
      s.segments.push_back(segment);
      s.positions.push_back(static_cast<std::int32_t>(t));
      s.weights.push_back(ex.eligible[t] ? 1.0f : 0.0f);
    }
    s.tokens.push_back(separator);
    s.segments.push_back(segment);
    s.positions.push_back(static_cast<std::int32_t>(ex.tokens.size()));
    s.weights.push_back(0.0f);
  }

  std::vector<PackedSequence> out;
  out.reserve(bins.size());
  for (Open& b : bins) {
    PackedSequence& s = b.seq;
    const std::size_t fill = capacity - s.size();
    s.tokens.insert(s.tokens.end(), fill, pad_token);
    s.segments.insert(s.segments.end(), fill, 0);
    s.positions.insert(s.positions.end(), fill, 0);
    s.weights.insert(s.weights.end(), fill, 0.0f);
    out.push_back(std::move(s));
  }
  return out;
}

PackingReport packing_report(std::span<const PackedSequence> sequences) {
  PackingReport r;
  r.sequences = sequences.size();
  for (const PackedSequence& s : sequences) {
    r.examples += s.num_segments();
    r.capacity_tokens += s.size();
    r.content_tokens += s.size() - s.padding();
    for (float w : s.weights) r.loss_tokens += w > 0.0f ? 1 : 0;
  }
  return r;
}

void to_json(nlohmann::json& j, const PackingReport& r) {
  j = {{"sequences", r.sequences},           {"examples", r.examples},
       {"capacity_tokens", r.capacity_tokens}, {"content_tokens", r.content_tokens},
       {"loss_tokens", r.loss_tokens},       {"efficiency", r.efficiency()}};
}

std::vector<float> isolation_mask(std::span<const std::int32_t> segments) {
  const std::size_t n = segments.size();
  std::vector<float> mask(n * n, -std::numeric_limits<float>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    if (segments[i] == 0) continue;
    for (std::size_t j = 0; j <= i; ++j) {
      if (segments[j] == segments[i]) mask[i * n + j] = 0.0f;
    }
  }
  return mask;
}

ShiftedTargets shifted_targets(const PackedSequence& seq) {
  const std::size_t n = seq.size();
  ShiftedTargets out;
  out.targets.assign(n, 0);
  out.weights.assign(n, 0.0f);
  for (std::size_t t = 0; t + 1 < n; ++t) {
    out.targets[t] = seq.tokens[t + 1];
    if (seq.segments[t] != 0 && seq.segments[t] == seq.segments[t + 1]) out.weights[t] = seq.weights[t + 1];
  }
  return out;
}

SourceExample example_from_json(const nlohmann::json& j) {
  SourceExample ex;
  if (!j.is_object() || !j.contains("tokens")) throw InputError("example record needs a \"tokens\" array");
  if (j.contains("id")) ex.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
  ex.tokens = j.at("tokens").get<std::vector<std::int32_t>>();
  if (j.contains("loss")) {
    for (const auto& v : j.at("loss")) ex.eligible.push_back(v.is_boolean() ? v.get<bool>() : v.get<int>() != 0);
  } else {
    ex.eligible.assign(ex.tokens.size(), true);
  }
  ex.validate();
  return ex;
}

std::vector<SourceExample> read_examples_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<SourceExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      SourceExample ex = example_from_json(nlohmann::json::parse(line));
      if (ex.id.empty()) ex.id = "line " + std::to_string(lineno);
      out.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_packed(const std::filesystem::path& path, std::span<const PackedSequence> sequences,
                  nlohmann::json metadata) {
  if (sequences.empty()) throw InputError("write_packed: no sequences");
  const std::size_t rows = sequences.size(), cols = sequences.front().size();
  std::vector<std::int32_t> tokens, segments, positions;
  std::vector<float> weights;
  for (const PackedSequence& s : sequences) {
    if (s.size() != cols) throw DimensionError("write_packed: sequences differ in capacity");
    tokens.insert(tokens.end(), s.tokens.begin(), s.tokens.end());
    segments.insert(segments.end(), s.segments.begin(), s.segments.end());
    positions.insert(positions.end(), s.positions.begin(), s.positions.end());
    weights.insert(weights.end(), s.weights.begin(), s.weights.end());
  }
  TensorFile file;
  metadata["kind"] = "packed-batch";
  file.metadata = std::move(metadata);
  file.tensors["tokens"] = StoredTensor::from_i32({rows, cols}, std::move(tokens));
  file.tensors["segments"] = StoredTensor::from_i32({rows, cols}, std::move(segments));
  file.tensors["positions"] = StoredTensor::from_i32({rows, cols}, std::move(positions));
  file.tensors["weights"] = StoredTensor::from_f32({rows, cols}, std::move(weights));
  write_tensor_file(path, file);
}

std::vector<PackedSequence> read_packed(const std::filesystem::path& path) {
  const TensorFile file = read_tensor_file(path);
  const StoredTensor& tokens = file.at("tokens");
  const StoredTensor& segments = file.at("segments");
  const StoredTensor& positions = file.at("positions");
  const StoredTensor& weights = file.at("weights");
  if (tokens.shape.size() != 2 || segments.shape != tokens.shape || positions.shape != tokens.shape ||
      weights.shape != tokens.shape || tokens.dtype != DType::kI32 || weights.dtype != DType::kF32) {
    throw IoError(path.string() + ": not a packed batch file");
  }
  const std::size_t rows = tokens.shape[0], cols = tokens.shape[1];
  std::vector<PackedSequence> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto begin = static_cast<std::ptrdiff_t>(r * cols), end = static_cast<std::ptrdiff_t>((r + 1) * cols);
    PackedSequence& s = out[r];
    s.tokens.assign(tokens.i32.begin() + begin, tokens.i32.begin() + end);
    s.segments.assign(segments.i32.begin() + begin, segments.i32.begin() + end);
    s.positions.assign(positions.i32.begin() + begin, positions.i32.begin() + end);
    s.weights.assign(weights.f32.begin() + begin, weights.f32.begin() + end);
    s.validate();
  }
  return out;
}

}  // namespace deskmoe
