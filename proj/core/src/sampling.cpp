// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "deskmoe/errors.hpp"

DESKMOE_NUMERIC_BEGIN

namespace {

constexpr double kTopPSlack = 1e-6;

bool allowed(std::span<const bool> banned, std::size_t i) { return banned.empty() || !banned[i]; }

std::size_t argmax(std::span<const Real> logits, std::span<const bool> banned) {
  std::size_t best = logits.size();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!allowed(banned, i)) continue;
    if (best == logits.size() || logits[i] > logits[best]) best = i;
  }
  if (best == logits.size()) best = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  return best;
}

}  // namespace

void SamplingParams::validate() const {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1]");
  if (!(min_p >= 0.0 && min_p <= 1.0)) throw ConfigError("min_p must lie in [0, 1]");
}

std::vector<double> sampling_distribution(std::span<const Real> logits, const SamplingParams& params,
                                          std::span<const bool> banned) {
  params.validate();
  if (logits.empty()) throw InputError("sampling: empty logits");
  if (!banned.empty() && banned.size() != logits.size()) throw DimensionError("sampling: ban mask length mismatch");
  const std::size_t V = logits.size();
  std::vector<double> p(V, 0.0);
  const std::size_t best = argmax(logits, banned);
  if (params.temperature == 0.0 || params.top_k == 1) {
    p[best] = 1.0;
    return p;
  }

  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < V; ++i) {
    if (allowed(banned, i)) mx = std::max(mx, static_cast<double>(logits[i]) / params.temperature);
  }
  if (!std::isfinite(mx)) {
    p[best] = 1.0;
    return p;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < V; ++i) {
    if (!allowed(banned, i)) continue;
    p[i] = std::exp(static_cast<double>(logits[i]) / params.temperature - mx);
    total += p[i];
  }
  for (double& v : p) v /= total;

  std::vector<std::size_t> order(V);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });

  std::size_t keep = V;
  while (keep > 0 && p[order[keep - 1]] == 0.0) --keep;
  if (params.top_k > 0) keep = std::min(keep, params.top_k);

  double kept_mass = 0.0;
  for (std::size_t r = 0; r < keep; ++r) kept_mass += p[order[r]];
  double before = 0.0;
  std::size_t nucleus = 0;
  while (nucleus < keep && before / kept_mass < params.top_p - kTopPSlack) {
    before += p[order[nucleus]];
    ++nucleus;
  }
  keep = std::max<std::size_t>(nucleus, 1);

  const double floor = params.min_p * p[order[0]];
  std::vector<double> out(V, 0.0);
  double mass = 0.0;
  for (std::size_t r = 0; r < keep; ++r) {
    const std::size_t i = order[r];
    if (r > 0 && p[i] < floor) continue;
    out[i] = p[i];
    mass += p[i];
  }
  for (double& v : out) v /= mass;
  return out;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::int32_t sample_next(std::span<const Real> logits, const SamplingParams& params, std::mt19937_64& rng,
                         std::span<const bool> banned) {
  const std::vector<double> p = sampling_distribution(logits, params, banned);
  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    acc += p[i];
    last = i;
    if (u < acc) return static_cast<std::int32_t>(i);
  }
  return static_cast<std::int32_t>(last);
}

DESKMOE_NUMERIC_END
