// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deskmoe/parameter_store.hpp"

DESKMOE_NUMERIC_BEGIN

struct PerplexityResult {
  double perplexity = 0.0;
  double nll_sum = 0.0;
  std::size_t predicted = 0;
  std::size_t windows = 0;
  /// Number of times each stream position was scored; position 0 is never scored.
  std::vector<std::uint32_t> coverage;
};

/// Sliding-window perplexity. Windows of `window` tokens start every
/// `stride` tokens; each window scores only the targets the previous one
/// did not, so every token after the first is predicted exactly once. A
/// window that would start on its first unscored target starts one token
/// earlier instead.
/// Throws ConfigError unless 0 < stride <= window <= context length, and
/// InputError for streams shorter than 2 tokens.
PerplexityResult perplexity(const ParameterStore& store, std::span<const std::int32_t> stream, std::size_t window,
                            std::size_t stride);

DESKMOE_NUMERIC_END
