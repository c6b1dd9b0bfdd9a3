// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>

#include "deskmoe/autograd.hpp"

DESKMOE_NUMERIC_BEGIN

inline constexpr Real kDefaultRmsNormEps = Real(1e-6);

// ---------------------------------------------------------------------------
// Differentiable kernel ops. Every op checks shapes at its boundary and throws
// DimensionError on mismatch; no broadcasting is performed anywhere.
// ---------------------------------------------------------------------------

Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, Real factor);
/// Sum of all elements, as a scalar of shape (1).
Var sum(Var a);

/// a[M x K] * b[K x N].
Var matmul(Var a, Var b);
/// a[M x K] * b[N x K]^T.
Var matmul_transposed(Var a, Var b);

/// Row-wise RMS normalisation over the last axis, times `gain`.
Var rms_norm(Var x, Var gain, Real eps = kDefaultRmsNormEps);

/// silu(gate) * value, elementwise.
Var swiglu(Var gate, Var value);

/// Max-stabilised softmax along `axis`.
Var softmax(Var x, std::size_t axis);

/// Rows of `table` selected by `ids`: table[V x H] -> [n x H].
Var embedding(Var table, std::span<const std::int32_t> ids);

/// Rows of `x` selected by `rows`.
Var gather_rows(Var x, std::span<const std::size_t> rows);

/// Sum over positions of weight[t] * -log softmax(logits[t])[target[t]].
/// Positions with weight 0 contribute nothing, not even NaN.
Var weighted_nll_sum(Var logits, std::span<const std::int32_t> targets, std::span<const Real> weights);

/// Weighted mean token cross-entropy. Throws InputError when all weights are 0.
Var cross_entropy(Var logits, std::span<const std::int32_t> targets, std::span<const Real> weights);

/// Pairwise sigmoid preference objective on sequence log-probabilities:
/// -log sigmoid(beta * ((policy_chosen - ref_chosen) - (policy_rejected - ref_rejected))).
Var sigmoid_preference_loss(Var policy_chosen, Var policy_rejected, Real reference_chosen, Real reference_rejected,
                            Real beta);

// Non-differentiable helpers over plain tensors.
Tensor softmax_rows(const Tensor& x);
Tensor matmul(const Tensor& a, const Tensor& b);

DESKMOE_NUMERIC_END
