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

#ifndef FMDCONV_ATTENTION_HPP_
#define FMDCONV_ATTENTION_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "fmdconv/rng.hpp"
#include "fmdconv/tape.hpp"
#include "fmdconv/tensor.hpp"

namespace fmdconv {

enum class HeadActivation { Sigmoid, TemperatureSoftmax };

/// Per-forward settings shared by every layer of a model.
struct ForwardOptions {
  double temperature = 1.0;
  bool training = false;
  /// Applied to head hidden activations only when training.
  double dropout = 0.0;
  /// Required when training with dropout > 0.
  Rng* rng = nullptr;
};

/// max(1, floor(reduction * in_dim)).
std::size_t hidden_dim_for(std::size_t in_dim, double reduction);

/// Squeeze head: pooled [N, in] -> FC -> ReLU -> FC -> activation.
///
/// A head has one trunk (the first FC) and one or more branches (second FC
/// plus activation). FMDConv, DynamicConv and CondConv use single-branch
/// heads; ODConv uses one trunk with four branches. Weights are Kaiming
/// uniform (fan-in), biases start at zero.
class AttentionHead {
 public:
  struct BranchSpec {
    std::size_t out_dim;
    HeadActivation activation;
  };

  AttentionHead() = default;
  AttentionHead(std::string name, std::size_t in_dim, double reduction,
                std::vector<BranchSpec> branches, Rng& rng);
  /// Single-branch convenience.
  AttentionHead(std::string name, std::size_t in_dim, std::size_t out_dim, double reduction,
                HeadActivation activation, Rng& rng);

  std::size_t in_dim() const noexcept { return in_dim_; }
  std::size_t hidden_dim() const noexcept { return hidden_dim_; }
  std::size_t branch_count() const noexcept { return branches_.size(); }
  std::size_t out_dim(std::size_t branch = 0) const { return branches_.at(branch).spec.out_dim; }
  HeadActivation activation(std::size_t branch = 0) const {
    return branches_.at(branch).spec.activation;
  }

  /// Attention values for every branch. pooled: [N, in_dim].
  std::vector<Var> forward_all(Tape& tape, Var pooled, const ForwardOptions& opts) const;
  /// Single-branch heads only.
  Var forward(Tape& tape, Var pooled, const ForwardOptions& opts) const;

  /// Evaluation path on plain tensors (no dropout).
  std::vector<Tensor> evaluate_all(const Tensor& pooled, double temperature) const;
  Tensor evaluate(const Tensor& pooled, double temperature) const;

  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> parameters();
  std::size_t parameter_count() const;

  Parameter& fc1_weight() { return fc1_w_; }
  Parameter& fc1_bias() { return fc1_b_; }
  Parameter& fc2_weight(std::size_t branch = 0) { return branches_.at(branch).w; }
  Parameter& fc2_bias(std::size_t branch = 0) { return branches_.at(branch).b; }

  /// Sets every weight and bias to zero; attention becomes 0.5 (sigmoid) or
  /// uniform (softmax) regardless of input.
  void zero();

 private:
  struct Branch {
    BranchSpec spec;
    Parameter w;
    Parameter b;
  };

  std::size_t in_dim_ = 0;
  std::size_t hidden_dim_ = 0;
  Parameter fc1_w_;
  Parameter fc1_b_;
  std::vector<Branch> branches_;
};

// Attention vectors computed directly from a feature map x: [N, C_in, H, W].
// Each pools x itself; layers that need several attentions pool once and call
// AttentionHead::forward on the shared result instead.

Var input_attention(Tape& tape, const AttentionHead& head, Var x, const ForwardOptions& opts);
Var output_attention(Tape& tape, const AttentionHead& head, Var x, const ForwardOptions& opts);
Var kernel_attention(Tape& tape, const AttentionHead& head, Var x, const ForwardOptions& opts);

Tensor input_attention(const AttentionHead& head, const Tensor& x);
Tensor output_attention(const AttentionHead& head, const Tensor& x);
Tensor kernel_attention(const AttentionHead& head, const Tensor& x, double temperature);

}  // namespace fmdconv

#endif  // FMDCONV_ATTENTION_HPP_
