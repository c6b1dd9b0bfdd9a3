// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "deskmoe/errors.hpp"

DESKMOE_NUMERIC_BEGIN

namespace {

void require_same_tape(Var a, Var b, const char* what) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw ContractError(std::string(what) + ": operands live on different tapes");
  }
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + ": expected a matrix, got shape " + shape_to_string(t.shape()));
  }
}

// c[M x N] += a[M x K] * b[K x N]
void gemm_nn_acc(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* ci = c + i * n;
    const Real* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = ai[p];
      const Real* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[M x K] += a[M x N] * b[K x N]^T
void gemm_nt_acc(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* ai = a + i * n;
    Real* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real* bp = b + p * n;
      Real acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += ai[j] * bp[j];
      ci[p] += acc;
    }
  }
}

// c[K x N] += a[M x K]^T * b[M x N]
void gemm_tn_acc(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* ai = a + i * k;
    const Real* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = ai[p];
      Real* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

Real sigmoid(Real x) {
  if (x >= 0) {
    const Real e = std::exp(-x);
    return Real(1) / (Real(1) + e);
  }
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

// log(1 + exp(x)) without overflow.
Real softplus(Real x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner extents differ, " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)});
  gemm_nn_acc(a.data().data(), b.data().data(), out.data().data(), a.dim(0), a.dim(1), b.dim(1));
  return out;
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  Tape& tape = *a.tape;
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.add_scaled(b.value(), Real{1});
  return tape.record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a)) t.grad_buffer(a).add_scaled(g, Real{1});
    if (t.needs_grad(b)) t.grad_buffer(b).add_scaled(g, Real{1});
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  Tape& tape = *a.tape;
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] *= bv[i];
  return tape.record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const auto g = t.grad(self).data();
    if (t.needs_grad(a)) {
      auto ga = t.grad_buffer(a).data();
      const auto bv = t.value(b).data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(b)) {
      auto gb = t.grad_buffer(b).data();
      const auto av = t.value(a).data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, Real factor) {
  Tensor out = a.value();
  for (Real& v : out.data()) v *= factor;
  return a.tape->record(std::move(out), {a.id}, [a = a.id, factor](Tape& t, std::size_t self) {
    t.grad_buffer(a).add_scaled(t.grad(self), factor);
  });
}

Var sum(Var a) {
  Real total = 0;
  for (Real v : a.value().data()) total += v;
  return a.tape->record(Tensor({1}, {total}), {a.id}, [a = a.id](Tape& t, std::size_t self) {
    const Real g = t.grad(self)[0];
    for (Real& v : t.grad_buffer(a).data()) v += g;
  });
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  Tensor out = matmul(a.value(), b.value());
  return a.tape->record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (t.needs_grad(a)) gemm_nt_acc(g.data().data(), bv.data().data(), t.grad_buffer(a).data().data(), m, n, k);
    if (t.needs_grad(b)) gemm_tn_acc(av.data().data(), g.data().data(), t.grad_buffer(b).data().data(), m, k, n);
  });
}

Var matmul_transposed(Var a, Var b) {
  require_same_tape(a, b, "matmul_transposed");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul_transposed");
  require_matrix(bv, "matmul_transposed");
  if (av.dim(1) != bv.dim(1)) {
    throw DimensionError("matmul_transposed: inner extents differ, " + shape_to_string(av.shape()) + " x " +
                         shape_to_string(bv.shape()) + "^T");
  }
  Tensor out({av.dim(0), bv.dim(0)});
  gemm_nt_acc(av.data().data(), bv.data().data(), out.data().data(), av.dim(0), av.dim(1), bv.dim(0));
  return a.tape->record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(0);
    // dA = G B, dB = G^T A
    if (t.needs_grad(a)) gemm_nn_acc(g.data().data(), bv.data().data(), t.grad_buffer(a).data().data(), m, n, k);
    if (t.needs_grad(b)) gemm_tn_acc(g.data().data(), av.data().data(), t.grad_buffer(b).data().data(), m, n, k);
  });
}

Var rms_norm(Var x, Var gain, Real eps) {
  require_same_tape(x, gain, "rms_norm");
  if (!(eps > 0)) throw ConfigError("rms_norm: eps must be positive");
  const Tensor& xv = x.value();
  const Tensor& gv = gain.value();
  if (gv.rank() != 1 || gv.dim(0) != xv.cols()) {
    throw DimensionError("rms_norm: gain shape " + shape_to_string(gv.shape()) + " does not match last extent of " +
                         shape_to_string(xv.shape()));
  }
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor out(xv.shape());
  Tensor inv_rms({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    const auto xr = xv.row(r);
    Real ms = 0;
    for (Real v : xr) ms += v * v;
    ms /= static_cast<Real>(cols);
    const Real s = Real(1) / std::sqrt(ms + eps);
    inv_rms[r] = s;
    auto orow = out.row(r);
    for (std::size_t c = 0; c < cols; ++c) orow[c] = xr[c] * s * gv[c];
  }
  return x.tape->record(
      std::move(out), {x.id, gain.id},
      [x = x.id, gain = gain.id, inv_rms = std::move(inv_rms)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.value(x);
        const Tensor& gv = t.value(gain);
        const std::size_t rows = xv.rows(), cols = xv.cols();
        const bool want_x = t.needs_grad(x), want_gain = t.needs_grad(gain);
        Tensor* gx = want_x ? &t.grad_buffer(x) : nullptr;
        Tensor* ggain = want_gain ? &t.grad_buffer(gain) : nullptr;
        for (std::size_t r = 0; r < rows; ++r) {
          const auto xr = xv.row(r);
          const auto gr = g.row(r);
          const Real s = inv_rms[r];
          if (want_gain) {
            auto gg = ggain->data();
            for (std::size_t c = 0; c < cols; ++c) gg[c] += gr[c] * xr[c] * s;
          }
          if (want_x) {
            // y_c = gain_c x_c s,  ds/dx_j = -s^3 x_j / n
            Real dot = 0;
            for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * gv[c] * xr[c];
            const Real coeff = dot * s * s * s / static_cast<Real>(cols);
            auto gxr = gx->row(r);
            for (std::size_t c = 0; c < cols; ++c) gxr[c] += gr[c] * gv[c] * s - coeff * xr[c];
          }
        }
      });
}

Var swiglu(Var gate, Var value) {
  require_same_tape(gate, value, "swiglu");
  require_same_shape(gate.value(), value.value(), "swiglu");
  const auto gv = gate.value().data();
  const auto vv = value.value().data();
  Tensor out(gate.value().shape());
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = gv[i] * sigmoid(gv[i]) * vv[i];
  return gate.tape->record(std::move(out), {gate.id, value.id}, [gate = gate.id, value = value.id](Tape& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto gv = t.value(gate).data();
    const auto vv = t.value(value).data();
    if (t.needs_grad(gate)) {
      auto gg = t.grad_buffer(gate).data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Real s = sigmoid(gv[i]);
        gg[i] += g[i] * vv[i] * s * (Real(1) + gv[i] * (Real(1) - s));
      }
    }
    if (t.needs_grad(value)) {
      auto gval = t.grad_buffer(value).data();
      for (std::size_t i = 0; i < g.size(); ++i) gval[i] += g[i] * gv[i] * sigmoid(gv[i]);
    }
  });
}

namespace {

struct AxisLayout {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisLayout axis_layout(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_to_string(shape));
  }
  AxisLayout l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  l.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

}  // namespace

Var softmax(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  const AxisLayout l = axis_layout(xv.shape(), axis);
  Tensor out(xv.shape());
  const auto in = xv.data();
  auto o = out.data();
  for (std::size_t a = 0; a < l.outer; ++a) {
    for (std::size_t b = 0; b < l.inner; ++b) {
      const std::size_t base = a * l.extent * l.inner + b;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t i = 0; i < l.extent; ++i) mx = std::max(mx, in[base + i * l.inner]);
      Real total = 0;
      for (std::size_t i = 0; i < l.extent; ++i) {
        const Real e = std::exp(in[base + i * l.inner] - mx);
        o[base + i * l.inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < l.extent; ++i) o[base + i * l.inner] /= total;
    }
  }
  return x.tape->record(std::move(out), {x.id}, [x = x.id, l](Tape& t, std::size_t self) {
    const auto g = t.grad(self).data();
    const auto y = t.value(self).data();
    auto gx = t.grad_buffer(x).data();
    for (std::size_t a = 0; a < l.outer; ++a) {
      for (std::size_t b = 0; b < l.inner; ++b) {
        const std::size_t base = a * l.extent * l.inner + b;
        Real dot = 0;
        for (std::size_t i = 0; i < l.extent; ++i) dot += g[base + i * l.inner] * y[base + i * l.inner];
        for (std::size_t i = 0; i < l.extent; ++i) {
          const std::size_t idx = base + i * l.inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto xr = x.row(r);
    auto orow = out.row(r);
    const Real mx = *std::max_element(xr.begin(), xr.end());
    Real total = 0;
    for (std::size_t c = 0; c < xr.size(); ++c) {
      orow[c] = std::exp(xr[c] - mx);
      total += orow[c];
    }
    for (Real& v : orow) v /= total;
  }
  return out;
}

Var embedding(Var table, std::span<const std::int32_t> ids) {
  const Tensor& tv = table.value();
  require_matrix(tv, "embedding");
  const std::size_t vocab = tv.dim(0), width = tv.dim(1);
  if (ids.empty()) throw DimensionError("embedding: empty id sequence");
  Tensor out({ids.size(), width});
  std::vector<std::size_t> rows(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw InputError("embedding: token id " + std::to_string(ids[i]) + " outside vocabulary of size " +
                       std::to_string(vocab));
    }
    rows[i] = static_cast<std::size_t>(ids[i]);
    std::copy_n(tv.row(rows[i]).begin(), width, out.row(i).begin());
  }
  return table.tape->record(std::move(out), {table.id}, [table = table.id, rows = std::move(rows)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gt = t.grad_buffer(table);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto gr = g.row(i);
      auto dst = gt.row(rows[i]);
      for (std::size_t c = 0; c < gr.size(); ++c) dst[c] += gr[c];
    }
  });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
  const Tensor& xv = x.value();
  require_matrix(xv, "gather_rows");
  if (rows.empty()) throw DimensionError("gather_rows: no rows selected");
  const std::size_t width = xv.dim(1);
  Tensor out({rows.size(), width});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= xv.dim(0)) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(xv.row(rows[i]).begin(), width, out.row(i).begin());
  }
  std::vector<std::size_t> kept(rows.begin(), rows.end());
  return x.tape->record(std::move(out), {x.id}, [x = x.id, rows = std::move(kept)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto gr = g.row(i);
      auto dst = gx.row(rows[i]);
      for (std::size_t c = 0; c < gr.size(); ++c) dst[c] += gr[c];
    }
  });
}

Var weighted_nll_sum(Var logits, std::span<const std::int32_t> targets, std::span<const Real> weights) {
  const Tensor& lv = logits.value();
  require_matrix(lv, "cross_entropy");
  const std::size_t steps = lv.dim(0), vocab = lv.dim(1);
  if (targets.size() != steps || weights.size() != steps) {
    throw DimensionError("cross_entropy: targets/weights length must equal the number of logit rows (" +
                         std::to_string(steps) + ")");
  }
  Real total = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    if (weights[t] < 0) throw InputError("cross_entropy: negative loss weight");
    if (weights[t] == 0) continue;
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= vocab) {
      throw InputError("cross_entropy: target " + std::to_string(targets[t]) + " outside vocabulary");
    }
    const auto row = lv.row(t);
    const Real mx = *std::max_element(row.begin(), row.end());
    Real z = 0;
    for (Real v : row) z += std::exp(v - mx);
    total += weights[t] * (std::log(z) + mx - row[static_cast<std::size_t>(targets[t])]);
  }
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  std::vector<Real> w(weights.begin(), weights.end());
  return logits.tape->record(
      Tensor({1}, {total}), {logits.id},
      [logits = logits.id, tgt = std::move(tgt), w = std::move(w)](Tape& t, std::size_t self) {
        const Real up = t.grad(self)[0];
        const Tensor& lv = t.value(logits);
        Tensor& gl = t.grad_buffer(logits);
        for (std::size_t s = 0; s < tgt.size(); ++s) {
          if (w[s] == 0) continue;
          const auto row = lv.row(s);
          auto grow = gl.row(s);
          const Real mx = *std::max_element(row.begin(), row.end());
          Real z = 0;
          for (Real v : row) z += std::exp(v - mx);
          const Real coeff = up * w[s];
          for (std::size_t c = 0; c < row.size(); ++c) grow[c] += coeff * std::exp(row[c] - mx) / z;
          grow[static_cast<std::size_t>(tgt[s])] -= coeff;
        }
      });
}

Var cross_entropy(Var logits, std::span<const std::int32_t> targets, std::span<const Real> weights) {
  Real total_weight = 0;
  for (Real w : weights) total_weight += w;
  if (!(total_weight > 0)) {
    throw InputError("cross_entropy: loss mask is all zero; the loss of a fully masked batch is undefined");
  }
  return scale(weighted_nll_sum(logits, targets, weights), Real(1) / total_weight);
}

Var sigmoid_preference_loss(Var policy_chosen, Var policy_rejected, Real reference_chosen, Real reference_rejected,
                            Real beta) {
  require_same_tape(policy_chosen, policy_rejected, "preference_loss");
  if (!(beta > 0)) throw ConfigError("preference_loss: beta must be positive");
  if (policy_chosen.value().numel() != 1 || policy_rejected.value().numel() != 1) {
    throw DimensionError("preference_loss: log-probabilities must be scalars");
  }
  const Real margin = (policy_chosen.value()[0] - reference_chosen) - (policy_rejected.value()[0] - reference_rejected);
  const Real z = beta * margin;
  const Real loss = softplus(-z);
  return policy_chosen.tape->record(
      Tensor({1}, {loss}), {policy_chosen.id, policy_rejected.id},
      [c = policy_chosen.id, r = policy_rejected.id, z, beta](Tape& t, std::size_t self) {
        // d/dz softplus(-z) = -sigmoid(-z)
        const Real dz = -t.grad(self)[0] * sigmoid(-z) * beta;
        if (t.needs_grad(c)) t.grad_buffer(c)[0] += dz;
        if (t.needs_grad(r)) t.grad_buffer(r)[0] -= dz;
      });
}

DESKMOE_NUMERIC_END
