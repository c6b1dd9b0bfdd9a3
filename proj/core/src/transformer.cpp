// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/transformer.hpp"

#include <memory>

#include "deskmoe/errors.hpp"
#include "deskmoe/ops.hpp"

DESKMOE_NUMERIC_BEGIN

BoundModel::BoundModel(const ParameterStore& store, Tape& tape, bool trainable)
    : store_(&store), tape_(&tape), trainable_(trainable), freq_(rope_frequencies(store.config())) {}

Var BoundModel::get(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const Tensor& value = store_->at(name);
  Var v = trainable_ ? tape_->parameter(name, value) : tape_->constant(value);
  bound_.emplace(name, v);
  return v;
}

AttentionWeights BoundModel::attention(std::size_t layer) {
  return {get(param_names::layer(layer, "attn.q_proj")), get(param_names::layer(layer, "attn.k_proj")),
          get(param_names::layer(layer, "attn.v_proj")), get(param_names::layer(layer, "attn.o_proj"))};
}

MoeLayerWeights BoundModel::moe(std::size_t layer) {
  MoeLayerWeights w;
  w.router = get(param_names::layer(layer, "moe.router"));
  for (std::size_t e = 0; e < config().num_experts; ++e) {
    w.experts.push_back({get(param_names::expert(layer, e, "gate_proj")),
                         get(param_names::expert(layer, e, "up_proj")),
                         get(param_names::expert(layer, e, "down_proj"))});
  }
  return w;
}

Tensor mask_tensor(std::span<const std::int32_t> segments) {
  const std::vector<float> m = isolation_mask(segments);
  return Tensor({segments.size(), segments.size()}, std::vector<Real>(m.begin(), m.end()));
}

ForwardResult forward(BoundModel& model, const TokenBatch& batch) {
  const ModelConfig& c = model.config();
  const std::size_t T = batch.tokens.size();
  if (T == 0) throw InputError("forward: empty batch");
  if (batch.positions.size() != T || batch.segments.size() != T) {
    throw DimensionError("forward: tokens, positions and segments differ in length");
  }
  for (std::int32_t id : batch.tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
      throw InputError("forward: token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(c.vocab_size));
    }
  }

  const Tensor mask = mask_tensor(batch.segments);
  // Padding is excluded from the routing statistics.
  std::unique_ptr<bool[]> counted(new bool[T]);
  for (std::size_t t = 0; t < T; ++t) counted[t] = batch.segments[t] != 0;
  const std::span<const bool> counted_span(counted.get(), T);

  const Real eps = static_cast<Real>(c.norm_eps);
  ForwardResult result;
  Var h = embedding(model.get(param_names::kEmbedding), batch.tokens);
  Var aux_total;
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    Var a = rms_norm(h, model.get(param_names::layer(l, "attn_norm")), eps);
    h = add(h, attention(a, model.attention(l), mask, batch.positions, model.frequencies(), c.num_attention_heads,
                         c.num_kv_heads));
    Var m = rms_norm(h, model.get(param_names::layer(l, "mlp_norm")), eps);
    MoeOutput moe = moe_forward(m, model.moe(l), c.experts_per_token, counted_span);
    h = add(h, moe.output);
    aux_total = l == 0 ? moe.aux_loss : add(aux_total, moe.aux_loss);
    result.decisions.push_back(std::move(moe.decision));
  }
  Var out = rms_norm(h, model.get(param_names::kFinalNorm), eps);
  result.logits = c.tie_embeddings ? matmul_transposed(out, model.get(param_names::kEmbedding))
                                   : matmul(out, model.get(param_names::kLmHead));
  result.aux_loss = scale(aux_total, Real(1) / static_cast<Real>(c.num_layers));
  return result;
}

Tensor forward_logits(const ParameterStore& store, const TokenBatch& batch) {
  Tape tape(false);
  BoundModel model(store, tape, false);
  return forward(model, batch).logits.value();
}

TokenBatch single_sequence(std::span<const std::int32_t> tokens, std::vector<std::int32_t>& positions_storage,
                           std::vector<std::int32_t>& segments_storage) {
  positions_storage.resize(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) positions_storage[t] = static_cast<std::int32_t>(t);
  segments_storage.assign(tokens.size(), 1);
  return {tokens, positions_storage, segments_storage};
}

DESKMOE_NUMERIC_END
