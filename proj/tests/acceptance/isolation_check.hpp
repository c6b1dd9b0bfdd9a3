// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

// Random-packing isolation check, built once per precision.
namespace deskmoe::acceptance {

struct IsolationStats {
  std::size_t packings = 0;
  std::size_t logits_compared = 0;
  std::size_t logits_differing = 0;
  double max_loss_gap = 0.0;
};

IsolationStats isolation_check_f32(std::size_t packings, std::uint64_t seed);
IsolationStats isolation_check_f64(std::size_t packings, std::uint64_t seed);

}  // namespace deskmoe::acceptance
