// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace deskmoe {

/// One training example before packing.
struct SourceExample {
  std::string id;
  std::vector<std::int32_t> tokens;
  /// Per-token loss eligibility (true on assistant reasoning/answer spans).
  std::vector<bool> eligible;

  void validate() const;
};

/// A fixed-capacity training row holding whole examples back to back.
struct PackedSequence {
  std::vector<std::int32_t> tokens;
  /// 0 marks padding; examples are numbered 1, 2, ... within the row.
  std::vector<std::int32_t> segments;
  /// Restart at 0 for every segment.
  std::vector<std::int32_t> positions;
  /// Loss weight of each token as a prediction target.
  std::vector<float> weights;

  std::size_t size() const { return tokens.size(); }
  std::size_t num_segments() const;
  std::size_t padding() const;
  /// Throws ContractError when any packing invariant is broken.
  void validate() const;
};

/// Greedy first-fit in arrival order. Each example is followed by one
/// `separator` token (weight 0); leftover space is filled with `pad_token`.
/// Throws InputError naming the first example that cannot fit.
std::vector<PackedSequence> pack(std::span<const SourceExample> examples, std::size_t capacity,
                                 std::int32_t separator, std::int32_t pad_token);

struct PackingReport {
  std::size_t sequences = 0;
  std::size_t examples = 0;
  std::size_t capacity_tokens = 0;
  std::size_t content_tokens = 0;
  std::size_t loss_tokens = 0;

  /// Non-padding share of all slots.
  double efficiency() const {
    return capacity_tokens == 0 ? 0.0 : static_cast<double>(content_tokens) / static_cast<double>(capacity_tokens);
  }
};

PackingReport packing_report(std::span<const PackedSequence> sequences);
void to_json(nlohmann::json& j, const PackingReport& r);

/// Additive [T x T] mask, row-major: 0 where j <= i and both positions share
/// a nonzero segment, -inf elsewhere.
std::vector<float> isolation_mask(std::span<const std::int32_t> segments);

/// Next-token targets of a packed row. Position t predicts token t+1 with
/// the weight of token t+1, and only when both sit in the same segment.
struct ShiftedTargets {
  std::vector<std::int32_t> targets;
  std::vector<float> weights;
};
ShiftedTargets shifted_targets(const PackedSequence& seq);

/// Reads JSON Lines of {"id"?, "tokens": [...], "loss": [0|1 ...]}.
/// A missing "loss" array marks every token eligible.
std::vector<SourceExample> read_examples_jsonl(const std::filesystem::path& path);
SourceExample example_from_json(const nlohmann::json& j);

/// Batch files reuse the checkpoint container: tokens, segments and
/// positions as I32 [S x C], weights as F32 [S x C].
void write_packed(const std::filesystem::path& path, std::span<const PackedSequence> sequences,
                  nlohmann::json metadata = nlohmann::json::object());
std::vector<PackedSequence> read_packed(const std::filesystem::path& path);

}  // namespace deskmoe
