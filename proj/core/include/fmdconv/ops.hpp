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

#ifndef FMDCONV_OPS_HPP_
#define FMDCONV_OPS_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "fmdconv/rng.hpp"
#include "fmdconv/tape.hpp"
#include "fmdconv/tensor.hpp"

namespace fmdconv {

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// floor((in + 2*padding - kernel) / stride) + 1. Throws if the kernel does
/// not fit in the padded extent.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding);

// ---------------------------------------------------------------------------
// Tensor-level kernels. Pure functions; fixed loop nesting so repeated calls
// are bit-identical.
// ---------------------------------------------------------------------------

/// Direct cross-correlation with zero padding, lowered to a patch matrix per
/// (sample, group). x: [N, C_in, H, W], w: [C_out, C_in/g, k, k], bias: [C_out].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, const Conv2dParams& p);

struct Conv2dGrads {
  Tensor grad_x;
  Tensor grad_w;
  Tensor grad_b;  // empty when the forward had no bias
};

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, bool has_bias,
                            const Conv2dParams& p, const Tensor& grad_out,
                            bool want_grad_x = true);

/// [N, C, H, W] -> [N, C], mean over the spatial plane.
Tensor global_avg_pool(const Tensor& x);

/// x: [N, D_in], w: [D_out, D_in], b: [D_out] (may be null). Returns x * w^T + b.
Tensor dense(const Tensor& x, const Tensor& w, const Tensor* b);

/// a: [N, K], b: [K, M] -> [N, M].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// x * a where a has x's shape, or x's shape with every axis after some
/// point replaced by 1 (e.g. [N, C, 1, 1] against [N, C, H, W]).
Tensor mul_broadcast(const Tensor& x, const Tensor& a);

/// Plain softmax over the last axis with max-subtraction.
Tensor softmax(const Tensor& z);
/// softmax(z / T) over the last axis. T must be positive.
Tensor softmax_temperature(const Tensor& z, double temperature);

/// Non-overlapping window x window average pooling. H and W must be
/// divisible by the window.
Tensor avg_pool2d(const Tensor& x, std::size_t window);

/// Per-channel mean and biased variance of x [N, C, H, W] over N, H and W.
struct ChannelStats {
  Tensor mean;  // [C]
  Tensor var;   // [C]
};
ChannelStats channel_stats(const Tensor& x);

/// gamma * (x - mean) / sqrt(var + eps) + beta per channel, fixed statistics.
Tensor batch_norm_inference(const Tensor& x, const Tensor& mean, const Tensor& var, const Tensor& gamma,
                            const Tensor& beta, double eps);

// ---------------------------------------------------------------------------
// Tape-recorded versions. Each records one node whose backward is analytic.
// ---------------------------------------------------------------------------

Var conv2d(Tape& tape, Var x, Var w, std::optional<Var> b, const Conv2dParams& p);
Var reshape(Tape& tape, Var x, Shape shape);
Var global_avg_pool(Tape& tape, Var x);
Var dense(Tape& tape, Var x, Var w, std::optional<Var> b);
Var matmul(Tape& tape, Var a, Var b);
Var relu(Tape& tape, Var x);
Var sigmoid(Tape& tape, Var x);
Var mul_broadcast(Tape& tape, Var x, Var a);
Var softmax_temperature(Tape& tape, Var z, double temperature);
Var avg_pool2d(Tape& tape, Var x, std::size_t window);
/// Batch norm with the statistics of the current batch (training mode).
/// The statistics used are copied to *stats when it is non-null.
Var batch_norm(Tape& tape, Var x, Var gamma, Var beta, double eps, ChannelStats* stats = nullptr);
/// Batch norm with fixed statistics (evaluation mode).
Var batch_norm_inference(Tape& tape, Var x, const Tensor& mean, const Tensor& var, Var gamma, Var beta,
                         double eps);
/// Sum of all elements, shape [1].
Var sum(Tape& tape, Var x);
/// Sum of x * weights for a constant weight tensor; a convenient scalar loss.
Var weighted_sum(Tape& tape, Var x, const Tensor& weights);
/// Mean softmax cross-entropy over the batch. logits: [N, classes].
Var cross_entropy(Tape& tape, Var logits, std::span<const int> labels);
/// Inverted dropout. Identity (no node recorded) when rate == 0.
Var dropout(Tape& tape, Var x, double rate, Rng& rng);

}  // namespace fmdconv

#endif  // FMDCONV_OPS_HPP_
