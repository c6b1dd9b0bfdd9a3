// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/rope.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "deskmoe/errors.hpp"

DESKMOE_NUMERIC_BEGIN

namespace {

void check_head_dim(std::size_t head_dim) {
  if (head_dim == 0 || head_dim % 2 != 0) {
    throw ConfigError("rotary embedding needs an even head_dim, got " + std::to_string(head_dim));
  }
}

// Dimension index at which a pair completes `rotations` turns over `context` tokens.
double correction_dim(double rotations, std::size_t head_dim, double base, std::size_t context) {
  return static_cast<double>(head_dim) * std::log(static_cast<double>(context) / (rotations * 2.0 * std::numbers::pi)) /
         (2.0 * std::log(base));
}

struct Rotation {
  std::vector<Real> cos, sin;  // [T x pairs]
};

Rotation rotation_table(std::span<const std::int32_t> positions, const FrequencyTable& table) {
  const std::size_t pairs = table.inv_freq.size();
  Rotation r;
  r.cos.resize(positions.size() * pairs);
  r.sin.resize(positions.size() * pairs);
  for (std::size_t t = 0; t < positions.size(); ++t) {
    if (positions[t] < 0) throw InputError("rotary embedding: negative position");
    for (std::size_t i = 0; i < pairs; ++i) {
      const double angle = static_cast<double>(positions[t]) * table.inv_freq[i];
      r.cos[t * pairs + i] = static_cast<Real>(std::cos(angle) * table.attention_scale);
      r.sin[t * pairs + i] = static_cast<Real>(std::sin(angle) * table.attention_scale);
    }
  }
  return r;
}

void check_layout(const Tensor& x, std::span<const std::int32_t> positions, const FrequencyTable& table,
                  std::size_t num_heads) {
  if (x.rank() != 2 || x.dim(0) != positions.size() || num_heads == 0 || x.dim(1) != num_heads * table.head_dim()) {
    throw DimensionError("apply_rope: expected [" + std::to_string(positions.size()) + " x " +
                         std::to_string(num_heads * table.head_dim()) + "], got " + shape_to_string(x.shape()));
  }
}

// sign = +1 rotates forward; sign = -1 applies the transpose.
void rotate(const Real* in, Real* out, const Rotation& rot, std::size_t steps, std::size_t num_heads, std::size_t pairs,
            Real sign) {
  const std::size_t width = num_heads * pairs * 2;
  for (std::size_t t = 0; t < steps; ++t) {
    const Real* c = rot.cos.data() + t * pairs;
    const Real* s = rot.sin.data() + t * pairs;
    for (std::size_t h = 0; h < num_heads; ++h) {
      const std::size_t base = t * width + h * pairs * 2;
      for (std::size_t i = 0; i < pairs; ++i) {
        const Real a = in[base + 2 * i];
        const Real b = in[base + 2 * i + 1];
        out[base + 2 * i] += c[i] * a - sign * s[i] * b;
        out[base + 2 * i + 1] += sign * s[i] * a + c[i] * b;
      }
    }
  }
}

}  // namespace

FrequencyTable plain_rope_frequencies(std::size_t head_dim, double base) {
  check_head_dim(head_dim);
  FrequencyTable table;
  table.inv_freq.resize(head_dim / 2);
  for (std::size_t i = 0; i < head_dim / 2; ++i) {
    table.inv_freq[i] = 1.0 / std::pow(base, static_cast<double>(2 * i) / static_cast<double>(head_dim));
  }
  return table;
}

FrequencyTable yarn_frequencies(std::size_t head_dim, double base, double factor, std::size_t original_context,
                                const YarnParams& params) {
  if (!(factor >= 1.0)) throw ConfigError("yarn factor must be >= 1");
  FrequencyTable table = plain_rope_frequencies(head_dim, base);
  if (factor == 1.0) return table;
  if (original_context == 0) throw ConfigError("yarn needs the original context length");

  const double last = static_cast<double>(head_dim - 1);
  double low = std::floor(correction_dim(params.beta_fast, head_dim, base, original_context));
  double high = std::ceil(correction_dim(params.beta_slow, head_dim, base, original_context));
  low = std::clamp(low, 0.0, last);
  high = std::clamp(high, 0.0, last);
  if (high == low) high += 0.001;

  for (std::size_t i = 0; i < table.inv_freq.size(); ++i) {
    const double ramp = std::clamp((static_cast<double>(i) - low) / (high - low), 0.0, 1.0);
    // High-frequency pairs (ramp 0) keep their extrapolated frequency; low-frequency
    // pairs (ramp 1) are interpolated by the scale factor.
    const double extrapolation = 1.0 - ramp;
    const double f = table.inv_freq[i];
    table.inv_freq[i] = (f / factor) * (1.0 - extrapolation) + f * extrapolation;
  }
  table.attention_scale = 0.1 * std::log(factor) + 1.0;
  return table;
}

FrequencyTable rope_frequencies(const ModelConfig& config) {
  return yarn_frequencies(config.head_dim(), config.rope_base, config.yarn_factor, config.original_context());
}

Tensor apply_rope(const Tensor& x, std::span<const std::int32_t> positions, const FrequencyTable& table,
                  std::size_t num_heads) {
  check_layout(x, positions, table, num_heads);
  const Rotation rot = rotation_table(positions, table);
  Tensor out(x.shape());
  rotate(x.data().data(), out.data().data(), rot, positions.size(), num_heads, table.inv_freq.size(), Real{1});
  return out;
}

Var apply_rope(Var x, std::span<const std::int32_t> positions, const FrequencyTable& table, std::size_t num_heads) {
  check_layout(x.value(), positions, table, num_heads);
  Rotation rot = rotation_table(positions, table);
  Tensor out(x.value().shape());
  const std::size_t pairs = table.inv_freq.size();
  const std::size_t steps = positions.size();
  rotate(x.value().data().data(), out.data().data(), rot, steps, num_heads, pairs, Real{1});
  return x.tape->record(std::move(out), {x.id},
                        [x = x.id, rot = std::move(rot), steps, num_heads, pairs](Tape& t, std::size_t self) {
                          rotate(t.grad(self).data().data(), t.grad_buffer(x).data().data(), rot, steps, num_heads,
                                 pairs, Real{-1});
                        });
}

DESKMOE_NUMERIC_END
