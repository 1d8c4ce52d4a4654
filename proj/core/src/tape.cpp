/* Copyright 2026 The FMDConv Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "fmdconv/tape.hpp"

#include <stdexcept>

namespace fmdconv {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::input(Tensor value) {
  nodes_.push_back(Node{"input", std::move(value), {}, {}, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const Parameter& p) {
  nodes_.push_back(Node{"param", p.value, {}, {}, nullptr, true});
  param_leaves_[&p].push_back(nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

std::size_t Tape::check(Var v) const {
  if (v.tape_ != this) throw std::logic_error("variable was not recorded on this tape");
  if (v.id_ >= nodes_.size()) throw std::logic_error("variable id out of range");
  return v.id_;
}

Var Tape::record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  Node node{op, std::move(value), {}, {}, std::move(fn), false};
  node.inputs.reserve(inputs.size());
  for (Var in : inputs) {
    std::size_t id = check(in);
    node.inputs.push_back(id);
    node.requires_grad = node.requires_grad || nodes_[id].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const { return nodes_[check(v)].value; }
bool Tape::requires_grad(Var v) const { return nodes_[check(v)].requires_grad; }

void Tape::backward(Var root) {
  const Tensor& out = value(root);
  if (out.numel() != 1) {
    throw ShapeError("backward without a seed needs a scalar root, got shape " +
                     shape_to_string(out.shape()));
  }
  backward(root, Tensor(out.shape(), 1.0));
}

void Tape::backward(Var root, const Tensor& seed) {
  if (nodes_.empty()) throw std::logic_error("backward called on an empty tape");
  const std::size_t root_id = check(root);
  if (seed.shape() != nodes_[root_id].value.shape()) {
    throw ShapeError("backward seed shape " + shape_to_string(seed.shape()) +
                     " != root shape " + shape_to_string(nodes_[root_id].value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  visited_.clear();
  nodes_[root_id].grad = seed;

  std::vector<const Tensor*> ins;
  std::vector<bool> needs;
  for (std::size_t idx = root_id + 1; idx-- > 0;) {
    Node& node = nodes_[idx];
    if (!node.backward || !node.requires_grad || node.grad.empty()) continue;
    visited_.push_back(idx);
    ins.clear();
    needs.clear();
    for (std::size_t in : node.inputs) {
      ins.push_back(&nodes_[in].value);
      needs.push_back(nodes_[in].requires_grad);
    }
    BackwardArgs args{std::span<const Tensor* const>(ins.data(), ins.size()), needs,
                      node.value, node.grad};
    std::vector<Tensor> grads = node.backward(args);
    if (grads.size() != node.inputs.size()) {
      throw std::logic_error(std::string("backward of '") + node.op +
                             "' returned the wrong number of gradients");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
      Node& in = nodes_[node.inputs[i]];
      if (!in.requires_grad || grads[i].empty()) continue;
      if (grads[i].shape() != in.value.shape()) {
        throw ShapeError(std::string("backward of '") + node.op + "' produced gradient " +
                         shape_to_string(grads[i].shape()) + " for input " +
                         shape_to_string(in.value.shape()));
      }
      if (in.grad.empty()) {
        in.grad = std::move(grads[i]);
      } else {
        double* dst = in.grad.data();
        const double* src = grads[i].data();
        for (std::size_t j = 0; j < in.grad.numel(); ++j) dst[j] += src[j];
      }
    }
    // Intermediate gradients are no longer needed once propagated.
    if (idx != root_id) node.grad = Tensor();
  }
  has_gradients_ = true;
}

Tensor Tape::grad(Var v) const {
  if (!has_gradients_) throw std::logic_error("grad requested before backward");
  const Node& node = nodes_[check(v)];
  if (node.grad.empty()) return Tensor(node.value.shape(), 0.0);
  return node.grad;
}

Tensor Tape::gradient_of(const Parameter& p) const {
  if (!has_gradients_) throw std::logic_error("gradient requested before backward");
  Tensor total(p.value.shape(), 0.0);
  auto it = param_leaves_.find(&p);
  if (it == param_leaves_.end()) return total;
  for (std::size_t id : it->second) {
    const Tensor& g = nodes_[id].grad;
    if (g.empty()) continue;
    for (std::size_t j = 0; j < total.numel(); ++j) total[j] += g[j];
  }
  return total;
}

}  // namespace fmdconv
