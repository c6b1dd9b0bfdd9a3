// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#include "deskmoe/autograd.hpp"

#include "deskmoe/errors.hpp"

DESKMOE_NUMERIC_BEGIN

const Tensor& Var::value() const {
  if (tape == nullptr) throw ContractError("Var is not bound to a tape");
  return tape->value(id);
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(std::string name, Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = record_;
  node.param_name = std::move(name);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  if (record_) {
    for (std::size_t in : inputs) {
      if (nodes_[in].requires_grad) {
        node.requires_grad = true;
        break;
      }
    }
  }
  if (node.requires_grad) {
    node.inputs = std::move(inputs);
    node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(std::size_t node) {
  Node& n = nodes_[node];
  if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
  return n.grad;
}

GradientMap Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: loss belongs to a different tape");
  if (!record_) throw ContractError("backward: tape was created without recording");
  if (nodes_[loss.id].value.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_to_string(nodes_[loss.id].value.shape()));
  }

  for (Node& n : nodes_) n.grad = Tensor();
  grad_buffer(loss.id)[0] = Real{1};

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }

  GradientMap grads;
  for (Node& n : nodes_) {
    if (n.param_name.empty()) continue;
    Tensor g = n.grad.empty() ? Tensor::zeros_like(n.value) : std::move(n.grad);
    auto it = grads.find(n.param_name);
    if (it == grads.end()) {
      grads.emplace(n.param_name, std::move(g));
    } else {
      it->second.add_scaled(g, Real{1});
    }
  }
  return grads;
}

DESKMOE_NUMERIC_END
