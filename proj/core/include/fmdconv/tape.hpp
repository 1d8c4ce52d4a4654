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

#ifndef FMDCONV_TAPE_HPP_
#define FMDCONV_TAPE_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fmdconv/tensor.hpp"

namespace fmdconv {

/// A named trainable tensor. Layers own these; tapes only reference them.
struct Parameter {
  std::string name;
  Tensor value;
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  bool valid() const noexcept { return tape_ != nullptr; }
  std::size_t id() const noexcept { return id_; }

 private:
  friend class Tape;
  Var(const Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  const Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct BackwardArgs {
  std::span<const Tensor* const> inputs;
  const std::vector<bool>& needs_grad;
  const Tensor& output;
  const Tensor& grad_out;
};

/// Returns one gradient per input; entries whose needs_grad is false may be
/// left empty.
using BackwardFn = std::function<std::vector<Tensor>(const BackwardArgs&)>;

/// Reverse-mode gradient tape. Operations are appended in execution order and
/// replayed in exactly the reverse order by backward(). Single writer.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var input(Tensor value);
  Var param(const Parameter& p);

  Var record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn fn);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  void backward(Var root);
  void backward(Var root, const Tensor& seed);

  /// Gradient of the last backward root with respect to v. Zero if v did not
  /// contribute. Intermediate gradients are released once propagated, so
  /// this is meaningful for leaves and for the root. Throws if backward()
  /// has not run.
  Tensor grad(Var v) const;
  /// Sum over every leaf bound to p.
  Tensor gradient_of(const Parameter& p) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const char* op_name(std::size_t id) const { return nodes_.at(id).op; }
  /// Node ids visited by the last backward(), in visit order.
  const std::vector<std::size_t>& last_backward_order() const noexcept { return visited_; }

 private:
  struct Node {
    const char* op;
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad;
  };

  std::size_t check(Var v) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::vector<std::size_t>> param_leaves_;
  std::vector<std::size_t> visited_;
  bool has_gradients_ = false;
};

}  // namespace fmdconv

#endif  // FMDCONV_TAPE_HPP_
