// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "deskmoe/attention.hpp"
#include "deskmoe/autograd.hpp"
#include "deskmoe/moe.hpp"
#include "deskmoe/packing.hpp"
#include "deskmoe/parameter_store.hpp"
#include "deskmoe/rope.hpp"

DESKMOE_NUMERIC_BEGIN

/// Exposes the tensors of a store on a tape. Each tensor becomes a leaf the
/// first time it is requested: a trainable parameter when `trainable`, a
/// constant otherwise.
class BoundModel {
 public:
  BoundModel(const ParameterStore& store, Tape& tape, bool trainable = true);

  const ModelConfig& config() const { return store_->config(); }
  const FrequencyTable& frequencies() const { return freq_; }
  Tape& tape() const { return *tape_; }

  Var get(const std::string& name);
  AttentionWeights attention(std::size_t layer);
  MoeLayerWeights moe(std::size_t layer);

 private:
  const ParameterStore* store_;
  Tape* tape_;
  bool trainable_;
  FrequencyTable freq_;
  std::map<std::string, Var> bound_;
};

/// Token stream of one forward pass. Positions restart per segment and
/// segment 0 marks padding, as produced by pack().
struct TokenBatch {
  std::span<const std::int32_t> tokens;
  std::span<const std::int32_t> positions;
  std::span<const std::int32_t> segments;

  static TokenBatch from(const PackedSequence& seq) { return {seq.tokens, seq.positions, seq.segments}; }
};

struct ForwardResult {
  Var logits;    // [T x V]
  Var aux_loss;  // scalar, mean of per-layer balance penalties over non-padding tokens
  std::vector<RouterDecision> decisions;
};

/// Pre-norm blocks: h += attn(norm(h)); h += moe(norm(h)); logits = norm(h) W.
ForwardResult forward(BoundModel& model, const TokenBatch& batch);

/// Additive isolation mask as a tensor.
Tensor mask_tensor(std::span<const std::int32_t> segments);

/// Inference-only logits for a batch.
Tensor forward_logits(const ParameterStore& store, const TokenBatch& batch);

/// Single unpacked sequence: positions 0..n-1, one segment.
TokenBatch single_sequence(std::span<const std::int32_t> tokens, std::vector<std::int32_t>& positions_storage,
                           std::vector<std::int32_t>& segments_storage);

DESKMOE_NUMERIC_END
