// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deskmoe/special_tokens.hpp"

namespace deskmoe {

/// A run of rendered text: either one control token or ordinary text.
struct Piece {
  std::optional<Special> special;
  std::string text;
  /// Counts toward the training loss.
  bool trainable = false;

  static Piece control(Special s) { return {s, {}, false}; }
  static Piece plain(std::string t, bool trainable = false) { return {std::nullopt, std::move(t), trainable}; }
};

/// Byte-level tokenizer: ids 0..255 are raw bytes, control tokens follow.
/// Ordinary text always encodes byte by byte, so it can never produce a
/// control id even when it spells one out.
class ByteTokenizer {
 public:
  static constexpr std::int32_t kByteVocab = 256;

  ByteTokenizer() : registry_(kByteVocab) {}

  const SpecialTokenRegistry& registry() const { return registry_; }
  std::size_t vocab_size() const { return static_cast<std::size_t>(registry_.end_id()); }
  std::int32_t id(Special s) const { return registry_.id(s); }

  std::vector<std::int32_t> encode_text(std::string_view text) const;

  struct Encoded {
    std::vector<std::int32_t> ids;
    std::vector<bool> trainable;
  };
  Encoded encode(std::span<const Piece> pieces) const;

  /// Control tokens decode to their surface form.
  std::string decode(std::span<const std::int32_t> ids) const;

 private:
  SpecialTokenRegistry registry_;
};

}  // namespace deskmoe
