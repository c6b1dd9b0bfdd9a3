// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "deskmoe/autograd.hpp"

DESKMOE_NUMERIC_BEGIN

/// Top-k routing result for a batch of T tokens over N experts.
struct RouterDecision {
  std::size_t num_tokens = 0;
  std::size_t num_experts = 0;
  std::size_t k = 0;
  /// [T x k] selected experts, highest probability first; ties go to the lower index.
  std::vector<std::size_t> experts;
  /// [T x k] selected probabilities renormalised to sum to one per token.
  std::vector<Real> weights;
  /// [T x N] full router softmax.
  std::vector<Real> probs;
  /// Share of token-slots sent to each expert (sums to 1).
  std::vector<double> load;
  /// Mean router probability of each expert (sums to 1).
  std::vector<double> importance;

  std::size_t expert(std::size_t token, std::size_t slot) const { return experts[token * k + slot]; }
  Real weight(std::size_t token, std::size_t slot) const { return weights[token * k + slot]; }
};

/// Softmax over the N logits of each row, top-k by probability, renormalised
/// weights. `counted` (optional, length T) excludes tokens from the load and
/// importance statistics, e.g. padding.
RouterDecision route_tokens(const Tensor& gate_logits, std::size_t k, std::span<const bool> counted = {});

/// Switch-style balance penalty N * sum_i load_i * importance_i. Equals 1
/// for perfectly balanced routing.
double load_balance_loss(const RouterDecision& decision);

/// Differentiable variants over router logits [T x N]: the renormalised
/// top-k weights [T x k] (gradient reaches only the selected logits) and the
/// balance penalty (gradient flows through the importance term; the load
/// term is a constant of the decision).
Var routing_weights(Var gate_logits, const RouterDecision& decision);
Var load_balance_loss(Var gate_logits, const RouterDecision& decision, std::span<const bool> counted = {});

struct ExpertWeights {
  Var gate_proj, up_proj, down_proj;
};

struct MoeLayerWeights {
  Var router;
  std::vector<ExpertWeights> experts;
};

struct MoeOutput {
  Var output;
  Var aux_loss;
  RouterDecision decision;
};

/// down(swiglu(x gate, x up)) for one expert, x is [n x H].
Var expert_forward(Var x, const ExpertWeights& expert);

/// Dropless sparse MoE: every token is processed by its k selected experts
/// and the results are combined with the routing weights.
MoeOutput moe_forward(Var hidden, const MoeLayerWeights& weights, std::size_t k, std::span<const bool> counted = {});

DESKMOE_NUMERIC_END
