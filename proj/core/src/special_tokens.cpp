// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/special_tokens.hpp"

#include "deskmoe/errors.hpp"

namespace deskmoe {

namespace {

constexpr std::array<std::string_view, kNumSpecialTokens> kText = {
    "/reasoning_en", "/reasoning_ita", "/turbo",        "<think>",           "</think>",           "<|im_start|>",
    "<|im_end|>",    "<tool_call>",    "</tool_call>", "<tool_response>", "</tool_response>", "<|pad|>",
};

}  // namespace

SpecialTokenRegistry::SpecialTokenRegistry(std::int32_t base_vocab_size) : first_id_(base_vocab_size) {
  if (base_vocab_size <= 0) throw ConfigError("special tokens need a positive base vocabulary");
}

std::string_view SpecialTokenRegistry::text(Special s) { return kText[static_cast<std::size_t>(s)]; }

std::optional<Special> SpecialTokenRegistry::special(std::int32_t id) const {
  if (!is_special(id)) return std::nullopt;
  return static_cast<Special>(id - first_id_);
}

std::optional<Special> SpecialTokenRegistry::find(std::string_view text) {
  for (std::size_t i = 0; i < kText.size(); ++i) {
    if (kText[i] == text) return static_cast<Special>(i);
  }
  return std::nullopt;
}

const std::array<Special, kNumSpecialTokens>& SpecialTokenRegistry::all() {
  static const std::array<Special, kNumSpecialTokens> tokens = [] {
    std::array<Special, kNumSpecialTokens> a{};
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<Special>(i);
    return a;
  }();
  return tokens;
}

}  // namespace deskmoe
