// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/objectives.hpp"

#include <algorithm>

#include "deskmoe/errors.hpp"
#include "deskmoe/ops.hpp"

DESKMOE_NUMERIC_BEGIN

SftLoss sft_loss(BoundModel& model, const PackedSequence& batch, Real aux_coefficient) {
  if (!(aux_coefficient >= 0)) throw ConfigError("sft_loss: aux coefficient must be >= 0");
  batch.validate();
  const ShiftedTargets st = shifted_targets(batch);
  const std::vector<Real> weights(st.weights.begin(), st.weights.end());

  ForwardResult fwd = forward(model, TokenBatch::from(batch));
  SftLoss out;
  out.cross_entropy = cross_entropy(fwd.logits, st.targets, weights);
  out.aux_loss = fwd.aux_loss;
  out.total = aux_coefficient == 0 ? out.cross_entropy : add(out.cross_entropy, scale(fwd.aux_loss, aux_coefficient));
  for (float w : st.weights) out.target_weight += w;
  return out;
}

PackedSequence concat_rows(std::span<const PackedSequence> rows) {
  PackedSequence out;
  std::int32_t offset = 0;
  std::size_t padding = 0;
  std::int32_t pad_token = 0;
  for (const PackedSequence& r : rows) {
    std::int32_t top = 0;
    for (std::size_t t = 0; t < r.size(); ++t) {
      if (r.segments[t] == 0) {
        ++padding;
        pad_token = r.tokens[t];
        continue;
      }
      out.tokens.push_back(r.tokens[t]);
      out.positions.push_back(r.positions[t]);
      out.weights.push_back(r.weights[t]);
      out.segments.push_back(r.segments[t] + offset);
      top = std::max(top, r.segments[t]);
    }
    offset += top;
  }
  out.tokens.insert(out.tokens.end(), padding, pad_token);
  out.positions.insert(out.positions.end(), padding, 0);
  out.weights.insert(out.weights.end(), padding, 0.0f);
  out.segments.insert(out.segments.end(), padding, 0);
  return out;
}

void PreferencePair::validate() const {
  if (chosen.empty() || rejected.empty()) throw InputError("preference pair: responses must be non-empty");
  if (chosen == rejected) throw InputError("preference pair: chosen and rejected responses are identical");
}

Var sequence_logprob(BoundModel& model, std::span<const std::int32_t> context,
                     std::span<const std::int32_t> response) {
  if (response.empty()) throw InputError("sequence_logprob: empty response");
  std::vector<std::int32_t> tokens(context.begin(), context.end());
  tokens.insert(tokens.end(), response.begin(), response.end());
  const std::size_t T = tokens.size();

  std::vector<std::int32_t> targets(T, 0);
  std::vector<Real> weights(T, Real(0));
  // Without context the first response token has no prediction.
  for (std::size_t t = 0; t + 1 < T; ++t) {
    targets[t] = tokens[t + 1];
    if (t + 1 >= context.size()) weights[t] = 1;
  }
  std::vector<std::int32_t> pos, seg;
  ForwardResult fwd = forward(model, single_sequence(tokens, pos, seg));
  return scale(weighted_nll_sum(fwd.logits, targets, weights), Real(-1));
}

Var preference_loss(Var policy_chosen, Var policy_rejected, Real reference_chosen, Real reference_rejected,
                    Real beta) {
  return sigmoid_preference_loss(policy_chosen, policy_rejected, reference_chosen, reference_rejected, beta);
}

DESKMOE_NUMERIC_END
