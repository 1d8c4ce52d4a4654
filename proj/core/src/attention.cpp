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

#include "fmdconv/attention.hpp"

#include <cmath>
#include <stdexcept>

#include "fmdconv/init.hpp"
#include "fmdconv/ops.hpp"

namespace fmdconv {

std::size_t hidden_dim_for(std::size_t in_dim, double reduction) {
  if (!(reduction > 0.0 && reduction <= 1.0)) {
    throw ValueError("reduction rate must be in (0, 1], got " + std::to_string(reduction));
  }
  // The small epsilon keeps products such as 0.1 * 30 from flooring low.
  const auto h = static_cast<std::size_t>(std::floor(reduction * static_cast<double>(in_dim) + 1e-9));
  return h < 1 ? 1 : h;
}

AttentionHead::AttentionHead(std::string name, std::size_t in_dim, double reduction,
                             std::vector<BranchSpec> branches, Rng& rng)
    : in_dim_(in_dim), hidden_dim_(hidden_dim_for(in_dim, reduction)) {
  if (in_dim == 0) throw ShapeError("attention head input dimension must be positive");
  if (branches.empty()) throw ShapeError("attention head needs at least one branch");
  fc1_w_ = Parameter{name + ".fc1.weight", Tensor(Shape{hidden_dim_, in_dim_})};
  fc1_b_ = Parameter{name + ".fc1.bias", Tensor(Shape{hidden_dim_})};
  kaiming_uniform(fc1_w_.value, in_dim_, rng);
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const BranchSpec spec = branches[i];
    if (spec.out_dim == 0) throw ShapeError("attention branch output dimension must be positive");
    const std::string prefix = name + ".fc2" + (branches.size() > 1 ? "_" + std::to_string(i) : "");
    Branch br{spec, Parameter{prefix + ".weight", Tensor(Shape{spec.out_dim, hidden_dim_})},
              Parameter{prefix + ".bias", Tensor(Shape{spec.out_dim})}};
    kaiming_uniform(br.w.value, hidden_dim_, rng);
    branches_.push_back(std::move(br));
  }
}

AttentionHead::AttentionHead(std::string name, std::size_t in_dim, std::size_t out_dim,
                             double reduction, HeadActivation activation, Rng& rng)
    : AttentionHead(std::move(name), in_dim, reduction, {BranchSpec{out_dim, activation}}, rng) {}

std::vector<Var> AttentionHead::forward_all(Tape& tape, Var pooled,
                                            const ForwardOptions& opts) const {
  const Tensor& pv = tape.value(pooled);
  if (pv.rank() != 2 || pv.dim(1) != in_dim_) {
    throw ShapeError("attention head expects pooled [N, " + std::to_string(in_dim_) + "], got " +
                     shape_to_string(pv.shape()));
  }
  Var h = dense(tape, pooled, tape.param(fc1_w_), tape.param(fc1_b_));
  h = relu(tape, h);
  if (opts.training && opts.dropout > 0.0) {
    if (!opts.rng) throw std::logic_error("dropout during training requires an Rng");
    h = dropout(tape, h, opts.dropout, *opts.rng);
  }
  std::vector<Var> out;
  out.reserve(branches_.size());
  for (const Branch& br : branches_) {
    Var z = dense(tape, h, tape.param(br.w), tape.param(br.b));
    out.push_back(br.spec.activation == HeadActivation::Sigmoid
                      ? sigmoid(tape, z)
                      : softmax_temperature(tape, z, opts.temperature));
  }
  return out;
}

Var AttentionHead::forward(Tape& tape, Var pooled, const ForwardOptions& opts) const {
  if (branches_.size() != 1) throw std::logic_error("forward() needs a single-branch head");
  return forward_all(tape, pooled, opts).front();
}

std::vector<Tensor> AttentionHead::evaluate_all(const Tensor& pooled, double temperature) const {
  if (pooled.rank() != 2 || pooled.dim(1) != in_dim_) {
    throw ShapeError("attention head expects pooled [N, " + std::to_string(in_dim_) + "], got " +
                     shape_to_string(pooled.shape()));
  }
  const Tensor h = relu(dense(pooled, fc1_w_.value, &fc1_b_.value));
  std::vector<Tensor> out;
  for (const Branch& br : branches_) {
    Tensor z = dense(h, br.w.value, &br.b.value);
    out.push_back(br.spec.activation == HeadActivation::Sigmoid
                      ? sigmoid(z)
                      : softmax_temperature(z, temperature));
  }
  return out;
}

Tensor AttentionHead::evaluate(const Tensor& pooled, double temperature) const {
  if (branches_.size() != 1) throw std::logic_error("evaluate() needs a single-branch head");
  return evaluate_all(pooled, temperature).front();
}

std::vector<const Parameter*> AttentionHead::parameters() const {
  std::vector<const Parameter*> ps{&fc1_w_, &fc1_b_};
  for (const Branch& br : branches_) {
    ps.push_back(&br.w);
    ps.push_back(&br.b);
  }
  return ps;
}

std::vector<Parameter*> AttentionHead::parameters() {
  std::vector<Parameter*> ps{&fc1_w_, &fc1_b_};
  for (Branch& br : branches_) {
    ps.push_back(&br.w);
    ps.push_back(&br.b);
  }
  return ps;
}

std::size_t AttentionHead::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.numel();
  return n;
}

void AttentionHead::zero() {
  for (Parameter* p : parameters()) {
    for (double& v : p->value.values()) v = 0.0;
  }
}

namespace {

void check_feature_map(const Tensor& x, const AttentionHead& head, const char* what) {
  if (x.rank() != 4) {
    throw ShapeError(std::string(what) + ": input must be [N, C, H, W], got " +
                     shape_to_string(x.shape()));
  }
  if (x.dim(1) != head.in_dim()) {
    throw ShapeError(std::string(what) + ": input channels (dim 1) = " + std::to_string(x.dim(1)) +
                     " but head expects " + std::to_string(head.in_dim()));
  }
  if (head.branch_count() != 1) {
    throw std::logic_error(std::string(what) + " needs a single-branch head");
  }
}

void check_sigmoid(const AttentionHead& head, const char* what) {
  if (head.activation() != HeadActivation::Sigmoid) {
    throw std::logic_error(std::string(what) + " needs a sigmoid head");
  }
}

void check_input_head(const Tensor& x, const AttentionHead& head) {
  check_feature_map(x, head, "input_attention");
  check_sigmoid(head, "input_attention");
  if (head.out_dim() != x.dim(1)) {
    throw ShapeError("input_attention: head emits " + std::to_string(head.out_dim()) +
                     " values for " + std::to_string(x.dim(1)) + " input channels");
  }
}

void check_kernel_head(const Tensor& x, const AttentionHead& head, double temperature) {
  check_feature_map(x, head, "kernel_attention");
  if (head.activation() != HeadActivation::TemperatureSoftmax) {
    throw std::logic_error("kernel_attention needs a softmax head");
  }
  if (!(temperature > 0.0)) {
    throw ValueError("kernel_attention: temperature must be positive, got " +
                     std::to_string(temperature));
  }
}

}  // namespace

Var input_attention(Tape& tape, const AttentionHead& head, Var x, const ForwardOptions& opts) {
  check_input_head(tape.value(x), head);
  return head.forward(tape, global_avg_pool(tape, x), opts);
}

Var output_attention(Tape& tape, const AttentionHead& head, Var x, const ForwardOptions& opts) {
  check_feature_map(tape.value(x), head, "output_attention");
  check_sigmoid(head, "output_attention");
  return head.forward(tape, global_avg_pool(tape, x), opts);
}

Var kernel_attention(Tape& tape, const AttentionHead& head, Var x, const ForwardOptions& opts) {
  check_kernel_head(tape.value(x), head, opts.temperature);
  return head.forward(tape, global_avg_pool(tape, x), opts);
}

Tensor input_attention(const AttentionHead& head, const Tensor& x) {
  check_input_head(x, head);
  return head.evaluate(global_avg_pool(x), 1.0);
}

Tensor output_attention(const AttentionHead& head, const Tensor& x) {
  check_feature_map(x, head, "output_attention");
  check_sigmoid(head, "output_attention");
  return head.evaluate(global_avg_pool(x), 1.0);
}

Tensor kernel_attention(const AttentionHead& head, const Tensor& x, double temperature) {
  check_kernel_head(x, head, temperature);
  return head.evaluate(global_avg_pool(x), temperature);
}

}  // namespace fmdconv
