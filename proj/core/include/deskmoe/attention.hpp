// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "deskmoe/autograd.hpp"
#include "deskmoe/rope.hpp"

DESKMOE_NUMERIC_BEGIN

/// Scaled dot-product attention where each of the `num_kv_heads` key/value
/// heads serves num_heads / num_kv_heads consecutive query heads.
///
/// q is [T x num_heads*d], k and v are [T x num_kv_heads*d]; mask is an
/// additive [T x T] matrix holding 0 for open cells and -inf for closed ones.
/// Closed cells get exactly zero weight; a row with no open cell yields zeros.
Var grouped_attention(Var q, Var k, Var v, const Tensor& mask, std::size_t num_heads, std::size_t num_kv_heads);

/// Weights of one attention sublayer.
struct AttentionWeights {
  Var q_proj, k_proj, v_proj, o_proj;
};

/// Full attention sublayer: projections, rotary embedding on q and k,
/// grouped attention, output projection. hidden is [T x H].
Var attention(Var hidden, const AttentionWeights& weights, const Tensor& mask, std::span<const std::int32_t> positions,
              const FrequencyTable& freq, std::size_t num_heads, std::size_t num_kv_heads);

DESKMOE_NUMERIC_END
