// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deskmoe/autograd.hpp"
#include "deskmoe/packing.hpp"
#include "deskmoe/transformer.hpp"

DESKMOE_NUMERIC_BEGIN

struct SftLoss {
  Var total;
  Var cross_entropy;
  Var aux_loss;
  /// Sum of target weights; the share of this batch in an accumulated step.
  double target_weight = 0.0;
};

/// Masked next-token cross-entropy plus `aux_coefficient` times the routing
/// balance penalty. Throws InputError when no target carries weight.
SftLoss sft_loss(BoundModel& model, const PackedSequence& batch, Real aux_coefficient);

/// Joins rows into one stream; segment ids are renumbered so rows stay
/// isolated and all padding moves to the end.
PackedSequence concat_rows(std::span<const PackedSequence> rows);

struct PreferencePair {
  std::vector<std::int32_t> context;
  std::vector<std::int32_t> chosen;
  std::vector<std::int32_t> rejected;

  /// Throws InputError when a response is empty or both responses match.
  void validate() const;
};

/// Sum of log p(response[t] | context, response[:t]).
Var sequence_logprob(BoundModel& model, std::span<const std::int32_t> context,
                     std::span<const std::int32_t> response);

/// -log sigmoid(beta * ((pc - rc) - (pr - rr))). Throws ConfigError when beta <= 0.
Var preference_loss(Var policy_chosen, Var policy_rejected, Real reference_chosen, Real reference_rejected,
                    Real beta = Real(0.1));

DESKMOE_NUMERIC_END
