// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/perplexity.hpp"

#include <algorithm>
#include <cmath>

#include "deskmoe/errors.hpp"
#include "deskmoe/transformer.hpp"

DESKMOE_NUMERIC_BEGIN

PerplexityResult perplexity(const ParameterStore& store, std::span<const std::int32_t> stream, std::size_t window,
                            std::size_t stride) {
  if (window < 2 || window > store.config().context_length) {
    throw ConfigError("perplexity: window must be in [2, context length]");
  }
  if (stride == 0 || stride > window) throw ConfigError("perplexity: stride must be in (0, window]");
  const std::size_t n = stream.size();
  if (n < 2) throw InputError("perplexity: stream needs at least 2 tokens");

  PerplexityResult r;
  r.coverage.assign(n, 0);
  std::vector<std::int32_t> pos, seg;
  std::size_t scored_end = 1;  // targets [1, scored_end) are done
  for (std::size_t begin = 0; scored_end < n; begin += stride) {
    // Pull the start back so the first unscored target keeps its predecessor.
    const std::size_t start = std::min(begin, scored_end - 1);
    const std::size_t end = std::min(start + window, n);
    if (end <= scored_end) continue;
    const auto tokens = stream.subspan(start, end - start);
    const Tensor logits = forward_logits(store, single_sequence(tokens, pos, seg));
    ++r.windows;
    for (std::size_t target = std::max(scored_end, start + 1); target < end; ++target) {
      const auto row = logits.row(target - 1 - start);
      double mx = -INFINITY;
      for (Real v : row) mx = std::max(mx, static_cast<double>(v));
      double z = 0.0;
      for (Real v : row) z += std::exp(static_cast<double>(v) - mx);
      r.nll_sum += std::log(z) + mx - static_cast<double>(row[static_cast<std::size_t>(stream[target])]);
      ++r.coverage[target];
      ++r.predicted;
    }
    scored_end = end;
  }
  r.perplexity = std::exp(r.nll_sum / static_cast<double>(r.predicted));
  if (!std::isfinite(r.perplexity)) throw NumericError("perplexity is not finite");
  return r;
}

DESKMOE_NUMERIC_END
