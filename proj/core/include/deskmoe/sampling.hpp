// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "deskmoe/precision.hpp"

DESKMOE_NUMERIC_BEGIN

struct SamplingParams {
  double temperature = 0.6;
  /// 0 disables top-k.
  std::size_t top_k = 20;
  double top_p = 0.95;
  double min_p = 0.0;

  void validate() const;
};

/// Distribution left after temperature, top-k, top-p and min-p, renormalised.
/// Temperature 0 puts all mass on the argmax. Tokens with `banned[i]` set are
/// removed first; if every token is filtered the argmax survives.
std::vector<double> sampling_distribution(std::span<const Real> logits, const SamplingParams& params,
                                          std::span<const bool> banned = {});

/// Uniform draw in [0, 1) from the top 53 bits of the generator.
double uniform01(std::mt19937_64& rng);

std::int32_t sample_next(std::span<const Real> logits, const SamplingParams& params, std::mt19937_64& rng,
                         std::span<const bool> banned = {});

DESKMOE_NUMERIC_END
