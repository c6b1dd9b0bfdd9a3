// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace deskmoe {

enum class Special : std::uint8_t {
  kReasoningEn,
  kReasoningIta,
  kTurbo,
  kThinkOpen,
  kThinkClose,
  kImStart,
  kImEnd,
  kToolCallOpen,
  kToolCallClose,
  kToolResponseOpen,
  kToolResponseClose,
  kPad,
};

inline constexpr std::size_t kNumSpecialTokens = 12;

/// The control tokens, with ids allocated contiguously right after the base
/// vocabulary.
class SpecialTokenRegistry {
 public:
  explicit SpecialTokenRegistry(std::int32_t base_vocab_size);

  static constexpr std::size_t size() { return kNumSpecialTokens; }
  std::int32_t first_id() const { return first_id_; }
  std::int32_t end_id() const { return first_id_ + static_cast<std::int32_t>(kNumSpecialTokens); }

  std::int32_t id(Special s) const { return first_id_ + static_cast<std::int32_t>(s); }
  static std::string_view text(Special s);
  bool is_special(std::int32_t id) const { return id >= first_id_ && id < end_id(); }
  /// Token for `id`, if it is one of ours.
  std::optional<Special> special(std::int32_t id) const;
  /// Token whose surface form is exactly `text`.
  static std::optional<Special> find(std::string_view text);

  static const std::array<Special, kNumSpecialTokens>& all();

 private:
  std::int32_t first_id_;
};

}  // namespace deskmoe
