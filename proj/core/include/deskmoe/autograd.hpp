// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "deskmoe/tensor.hpp"

DESKMOE_NUMERIC_BEGIN

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

using GradientMap = std::map<std::string, Tensor>;

/// Reverse-mode tape. Operations append nodes in execution order; backward()
/// walks them in reverse and accumulates gradients into named parameters.
///
/// A tape is single-writer: one per forward/backward pass, never shared
/// between threads. A tape constructed with `record = false` keeps values
/// but drops backward closures, which is what inference wants.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t node)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor value);
  /// Registers a trainable leaf. Registering the same name twice is allowed;
  /// the gradients of both leaves are summed into one entry.
  Var parameter(std::string name, Tensor value);

  const Tensor& value(std::size_t node) const { return nodes_[node].value; }
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  std::size_t size() const { return nodes_.size(); }

  /// True when gradients must flow into this node.
  bool needs_grad(std::size_t node) const { return nodes_[node].requires_grad; }
  bool needs_grad(Var v) const { return needs_grad(v.id); }

  /// Appends an op result. `fn` is dropped when no input needs a gradient.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

  /// Upstream gradient of `node` while its backward closure runs.
  const Tensor& grad(std::size_t node) const { return nodes_[node].grad; }
  /// Gradient accumulator of `node`, zero-initialised on first use.
  Tensor& grad_buffer(std::size_t node);

  /// Runs the reverse pass from a scalar loss. Every registered parameter
  /// gets an entry; parameters the loss does not depend on get exact zeros.
  GradientMap backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::string param_name;
  };

  bool record_;
  // A deque keeps values in place while ops append, so a Tensor reference
  // taken from value() stays valid for the life of the tape.
  std::deque<Node> nodes_;
};

DESKMOE_NUMERIC_END
