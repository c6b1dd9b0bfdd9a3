// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/moe.hpp"

#include <algorithm>
#include <numeric>

#include "deskmoe/errors.hpp"
#include "deskmoe/ops.hpp"

DESKMOE_NUMERIC_BEGIN

namespace {

bool is_counted(std::span<const bool> counted, std::size_t t) { return counted.empty() || counted[t]; }

// Rows of one expert's batch and the (token, slot) each row came from.
struct ExpertAssignment {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> slots;
};

std::vector<ExpertAssignment> assignments(const RouterDecision& d) {
  std::vector<ExpertAssignment> out(d.num_experts);
  for (std::size_t t = 0; t < d.num_tokens; ++t) {
    for (std::size_t s = 0; s < d.k; ++s) {
      ExpertAssignment& a = out[d.expert(t, s)];
      a.tokens.push_back(t);
      a.slots.push_back(s);
    }
  }
  return out;
}

// out[t] = sum over experts (ascending) of weight[t, slot] * y_e[row].
Var combine_experts(const std::vector<Var>& outputs, const std::vector<ExpertAssignment>& assign, Var weights,
                    std::size_t num_tokens, std::size_t width, std::size_t k) {
  Tensor out({num_tokens, width});
  std::vector<std::size_t> inputs{weights.id};
  std::vector<std::size_t> used;  // expert index for each entry of `outputs`
  const Tensor& w = weights.value();
  for (std::size_t e = 0, o = 0; e < assign.size(); ++e) {
    if (assign[e].tokens.empty()) continue;
    const Tensor& y = outputs[o++].value();
    for (std::size_t r = 0; r < assign[e].tokens.size(); ++r) {
      const std::size_t t = assign[e].tokens[r];
      const Real wt = w[t * k + assign[e].slots[r]];
      const auto yr = y.row(r);
      auto orow = out.row(t);
      for (std::size_t c = 0; c < width; ++c) orow[c] += wt * yr[c];
    }
    used.push_back(e);
  }
  for (const Var& v : outputs) inputs.push_back(v.id);

  std::vector<std::size_t> output_ids;
  for (const Var& v : outputs) output_ids.push_back(v.id);
  return weights.tape->record(
      std::move(out), std::move(inputs),
      [wid = weights.id, output_ids = std::move(output_ids), used = std::move(used), assign, k, width](Tape& t,
                                                                                                       std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& w = t.value(wid);
        Tensor* gw = t.needs_grad(wid) ? &t.grad_buffer(wid) : nullptr;
        for (std::size_t o = 0; o < output_ids.size(); ++o) {
          const ExpertAssignment& a = assign[used[o]];
          const Tensor& y = t.value(output_ids[o]);
          Tensor* gy = t.needs_grad(output_ids[o]) ? &t.grad_buffer(output_ids[o]) : nullptr;
          for (std::size_t r = 0; r < a.tokens.size(); ++r) {
            const std::size_t tok = a.tokens[r];
            const std::size_t idx = tok * k + a.slots[r];
            const auto gr = g.row(tok);
            const auto yr = y.row(r);
            if (gy) {
              auto gyr = gy->row(r);
              for (std::size_t c = 0; c < width; ++c) gyr[c] += w[idx] * gr[c];
            }
            if (gw) {
              Real dot = 0;
              for (std::size_t c = 0; c < width; ++c) dot += gr[c] * yr[c];
              (*gw)[idx] += dot;
            }
          }
        }
      });
}

}  // namespace

RouterDecision route_tokens(const Tensor& gate_logits, std::size_t k, std::span<const bool> counted) {
  if (gate_logits.rank() != 2) throw DimensionError("route_tokens: logits must be [T x N]");
  const std::size_t T = gate_logits.dim(0), N = gate_logits.dim(1);
  if (k == 0 || k > N) throw ConfigError("route_tokens: k must lie in [1, N]");
  if (!counted.empty() && counted.size() != T) throw DimensionError("route_tokens: counted mask length mismatch");

  RouterDecision d;
  d.num_tokens = T;
  d.num_experts = N;
  d.k = k;
  const Tensor probs = softmax_rows(gate_logits);
  d.probs.assign(probs.data().begin(), probs.data().end());
  d.experts.resize(T * k);
  d.weights.resize(T * k);
  d.load.assign(N, 0.0);
  d.importance.assign(N, 0.0);

  std::vector<std::size_t> order(N);
  std::size_t num_counted = 0;
  for (std::size_t t = 0; t < T; ++t) {
    const auto p = probs.row(t);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });
    Real total = 0;
    for (std::size_t s = 0; s < k; ++s) total += p[order[s]];
    for (std::size_t s = 0; s < k; ++s) {
      d.experts[t * k + s] = order[s];
      d.weights[t * k + s] = p[order[s]] / total;
    }
    if (!is_counted(counted, t)) continue;
    ++num_counted;
    for (std::size_t s = 0; s < k; ++s) d.load[order[s]] += 1.0;
    for (std::size_t i = 0; i < N; ++i) d.importance[i] += static_cast<double>(p[i]);
  }
  if (num_counted > 0) {
    for (double& f : d.load) f /= static_cast<double>(num_counted * k);
    for (double& P : d.importance) P /= static_cast<double>(num_counted);
  }
  return d;
}

double load_balance_loss(const RouterDecision& d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d.num_experts; ++i) acc += d.load[i] * d.importance[i];
  return static_cast<double>(d.num_experts) * acc;
}

Var routing_weights(Var gate_logits, const RouterDecision& d) {
  if (gate_logits.value().shape() != Shape{d.num_tokens, d.num_experts}) {
    throw DimensionError("routing_weights: logits do not match the decision");
  }
  Tensor w({d.num_tokens, d.k}, std::vector<Real>(d.weights.begin(), d.weights.end()));
  return gate_logits.tape->record(std::move(w), {gate_logits.id}, [lid = gate_logits.id, d](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& w = t.value(self);
    Tensor& gl = t.grad_buffer(lid);
    for (std::size_t tok = 0; tok < d.num_tokens; ++tok) {
      Real dot = 0;
      for (std::size_t s = 0; s < d.k; ++s) dot += g.at(tok, s) * w.at(tok, s);
      for (std::size_t s = 0; s < d.k; ++s) {
        gl.at(tok, d.expert(tok, s)) += w.at(tok, s) * (g.at(tok, s) - dot);
      }
    }
  });
}

Var load_balance_loss(Var gate_logits, const RouterDecision& d, std::span<const bool> counted) {
  if (gate_logits.value().shape() != Shape{d.num_tokens, d.num_experts}) {
    throw DimensionError("load_balance_loss: logits do not match the decision");
  }
  std::size_t num_counted = 0;
  for (std::size_t t = 0; t < d.num_tokens; ++t) num_counted += is_counted(counted, t) ? 1 : 0;
  const Real value = static_cast<Real>(load_balance_loss(d));
  std::vector<bool> mask(d.num_tokens);
  for (std::size_t t = 0; t < d.num_tokens; ++t) mask[t] = is_counted(counted, t);
  return gate_logits.tape->record(
      Tensor({1}, {value}), {gate_logits.id},
      [lid = gate_logits.id, d, mask = std::move(mask), num_counted](Tape& t, std::size_t self) {
        if (num_counted == 0) return;
        const Real up = t.grad(self)[0];
        Tensor& gl = t.grad_buffer(lid);
        const std::size_t N = d.num_experts;
        // d(loss)/d(p_ti) = N * load_i / T_counted, then through each row's softmax.
        std::vector<Real> dp(N);
        for (std::size_t i = 0; i < N; ++i) {
          dp[i] = up * static_cast<Real>(static_cast<double>(N) * d.load[i] / static_cast<double>(num_counted));
        }
        for (std::size_t tok = 0; tok < d.num_tokens; ++tok) {
          if (!mask[tok]) continue;
          const Real* p = d.probs.data() + tok * N;
          Real dot = 0;
          for (std::size_t i = 0; i < N; ++i) dot += p[i] * dp[i];
          auto row = gl.row(tok);
          for (std::size_t i = 0; i < N; ++i) row[i] += p[i] * (dp[i] - dot);
        }
      });
}

Var expert_forward(Var x, const ExpertWeights& expert) {
  return matmul(swiglu(matmul(x, expert.gate_proj), matmul(x, expert.up_proj)), expert.down_proj);
}

MoeOutput moe_forward(Var hidden, const MoeLayerWeights& weights, std::size_t k, std::span<const bool> counted) {
  const Tensor& hv = hidden.value();
  if (hv.rank() != 2) throw DimensionError("moe_forward: hidden must be [T x H]");
  const std::size_t N = weights.experts.size();
  if (weights.router.value().shape() != Shape{hv.dim(1), N}) {
    throw DimensionError("moe_forward: router shape does not match hidden size and expert count");
  }
  Var logits = matmul(hidden, weights.router);
  RouterDecision decision = route_tokens(logits.value(), k, counted);
  Var combine_w = routing_weights(logits, decision);
  Var aux = load_balance_loss(logits, decision, counted);

  const auto assign = assignments(decision);
  std::vector<Var> outputs;
  for (std::size_t e = 0; e < N; ++e) {
    if (assign[e].tokens.empty()) continue;
    outputs.push_back(expert_forward(gather_rows(hidden, assign[e].tokens), weights.experts[e]));
  }
  Var out = combine_experts(outputs, assign, combine_w, hv.dim(0), hv.dim(1), k);
  return MoeOutput{out, aux, std::move(decision)};
}

DESKMOE_NUMERIC_END
