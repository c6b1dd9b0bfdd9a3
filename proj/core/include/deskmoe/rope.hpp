// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deskmoe/autograd.hpp"
#include "deskmoe/model_config.hpp"

DESKMOE_NUMERIC_BEGIN

/// YaRN ramp boundaries, expressed as rotation counts over the original
/// context. These are the defaults of the reference YaRN implementation.
struct YarnParams {
  double beta_fast = 32.0;
  double beta_slow = 1.0;
};

/// Per-pair inverse frequencies plus the attention-temperature factor that
/// multiplies both cos and sin (1 for plain RoPE).
struct FrequencyTable {
  std::vector<double> inv_freq;
  double attention_scale = 1.0;

  std::size_t head_dim() const { return inv_freq.size() * 2; }
};

FrequencyTable plain_rope_frequencies(std::size_t head_dim, double base);
FrequencyTable yarn_frequencies(std::size_t head_dim, double base, double factor, std::size_t original_context,
                                const YarnParams& params = {});
/// Plain RoPE when config.yarn_factor == 1, YaRN otherwise.
FrequencyTable rope_frequencies(const ModelConfig& config);

/// Rotates adjacent feature pairs (2i, 2i+1) of every head by position * inv_freq[i].
/// x is [T x (num_heads * head_dim)]; positions has T entries.
Tensor apply_rope(const Tensor& x, std::span<const std::int32_t> positions, const FrequencyTable& table,
                  std::size_t num_heads);
Var apply_rope(Var x, std::span<const std::int32_t> positions, const FrequencyTable& table, std::size_t num_heads);

DESKMOE_NUMERIC_END
