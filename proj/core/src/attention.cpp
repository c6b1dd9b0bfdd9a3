// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/attention.hpp"

#include <cmath>
#include <limits>

#include "deskmoe/errors.hpp"
#include "deskmoe/ops.hpp"

DESKMOE_NUMERIC_BEGIN

namespace {

struct Layout {
  std::size_t steps, heads, kv_heads, head_dim;
  std::size_t q_width() const { return heads * head_dim; }
  std::size_t kv_width() const { return kv_heads * head_dim; }
  std::size_t group() const { return heads / kv_heads; }
};

bool is_open(Real m) { return m != -std::numeric_limits<Real>::infinity(); }

}  // namespace

Var grouped_attention(Var q, Var k, Var v, const Tensor& mask, std::size_t num_heads, std::size_t num_kv_heads) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  if (num_heads == 0 || num_kv_heads == 0 || num_heads % num_kv_heads != 0) {
    throw ConfigError("attention: num_heads must be a positive multiple of num_kv_heads");
  }
  if (qv.rank() != 2 || qv.dim(1) % num_heads != 0) throw DimensionError("attention: bad query shape");
  const Layout l{qv.dim(0), num_heads, num_kv_heads, qv.dim(1) / num_heads};
  if (kv.shape() != Shape{l.steps, l.kv_width()} || vv.shape() != kv.shape()) {
    throw DimensionError("attention: key/value shape " + shape_to_string(kv.shape()) + " does not match queries " +
                         shape_to_string(qv.shape()));
  }
  if (mask.shape() != Shape{l.steps, l.steps}) {
    throw DimensionError("attention: mask shape " + shape_to_string(mask.shape()) + " does not match sequence length " +
                         std::to_string(l.steps));
  }

  const Real scale = Real(1) / std::sqrt(static_cast<Real>(l.head_dim));
  const std::size_t T = l.steps, d = l.head_dim;
  // probs[h][i][j]
  Tensor probs({l.heads, T, T});
  Tensor out({T, l.q_width()});
  const Real* Q = qv.data().data();
  const Real* K = kv.data().data();
  const Real* V = vv.data().data();
  const Real* M = mask.data().data();
  Real* P = probs.data().data();
  Real* O = out.data().data();

  for (std::size_t h = 0; h < l.heads; ++h) {
    const std::size_t g = h / l.group();
    for (std::size_t i = 0; i < T; ++i) {
      Real* p = P + (h * T + i) * T;
      const Real* qi = Q + i * l.q_width() + h * d;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < T; ++j) {
        const Real m = M[i * T + j];
        if (!is_open(m)) continue;
        const Real* kj = K + j * l.kv_width() + g * d;
        Real s = 0;
        for (std::size_t c = 0; c < d; ++c) s += qi[c] * kj[c];
        s = s * scale + m;
        p[j] = s;
        mx = std::max(mx, s);
      }
      if (!is_open(mx)) continue;  // fully closed row: zero weights, zero output
      Real total = 0;
      for (std::size_t j = 0; j < T; ++j) {
        if (!is_open(M[i * T + j])) continue;
        p[j] = std::exp(p[j] - mx);
        total += p[j];
      }
      Real* oi = O + i * l.q_width() + h * d;
      for (std::size_t j = 0; j < T; ++j) {
        if (!is_open(M[i * T + j])) continue;
        p[j] /= total;
        const Real* vj = V + j * l.kv_width() + g * d;
        for (std::size_t c = 0; c < d; ++c) oi[c] += p[j] * vj[c];
      }
    }
  }

  return q.tape->record(
      std::move(out), {q.id, k.id, v.id},
      [q = q.id, k = k.id, v = v.id, probs = std::move(probs), l, scale](Tape& t, std::size_t self) {
        const std::size_t T = l.steps, d = l.head_dim;
        const Real* G = t.grad(self).data().data();
        const Real* Q = t.value(q).data().data();
        const Real* K = t.value(k).data().data();
        const Real* V = t.value(v).data().data();
        const Real* P = probs.data().data();
        Real* dQ = t.needs_grad(q) ? t.grad_buffer(q).data().data() : nullptr;
        Real* dK = t.needs_grad(k) ? t.grad_buffer(k).data().data() : nullptr;
        Real* dV = t.needs_grad(v) ? t.grad_buffer(v).data().data() : nullptr;
        std::vector<Real> dp(T);
        for (std::size_t h = 0; h < l.heads; ++h) {
          const std::size_t g = h / l.group();
          for (std::size_t i = 0; i < T; ++i) {
            const Real* p = P + (h * T + i) * T;
            const Real* gi = G + i * l.q_width() + h * d;
            Real dot = 0;
            for (std::size_t j = 0; j < T; ++j) {
              if (p[j] == 0) {
                dp[j] = 0;
                continue;
              }
              const Real* vj = V + j * l.kv_width() + g * d;
              Real s = 0;
              for (std::size_t c = 0; c < d; ++c) s += gi[c] * vj[c];
              dp[j] = s;
              dot += p[j] * s;
              if (dV) {
                Real* dvj = dV + j * l.kv_width() + g * d;
                for (std::size_t c = 0; c < d; ++c) dvj[c] += p[j] * gi[c];
              }
            }
            const Real* qi = Q + i * l.q_width() + h * d;
            Real* dqi = dQ ? dQ + i * l.q_width() + h * d : nullptr;
            for (std::size_t j = 0; j < T; ++j) {
              if (p[j] == 0) continue;
              const Real ds = p[j] * (dp[j] - dot) * scale;
              const Real* kj = K + j * l.kv_width() + g * d;
              if (dqi) {
                for (std::size_t c = 0; c < d; ++c) dqi[c] += ds * kj[c];
              }
              if (dK) {
                Real* dkj = dK + j * l.kv_width() + g * d;
                for (std::size_t c = 0; c < d; ++c) dkj[c] += ds * qi[c];
              }
            }
          }
        }
      });
}

Var attention(Var hidden, const AttentionWeights& w, const Tensor& mask, std::span<const std::int32_t> positions,
              const FrequencyTable& freq, std::size_t num_heads, std::size_t num_kv_heads) {
  Var q = apply_rope(matmul(hidden, w.q_proj), positions, freq, num_heads);
  Var k = apply_rope(matmul(hidden, w.k_proj), positions, freq, num_kv_heads);
  Var v = matmul(hidden, w.v_proj);
  return matmul(grouped_attention(q, k, v, mask, num_heads, num_kv_heads), w.o_proj);
}

DESKMOE_NUMERIC_END
