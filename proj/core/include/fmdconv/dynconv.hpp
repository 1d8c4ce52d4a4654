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

#ifndef FMDCONV_DYNCONV_HPP_
#define FMDCONV_DYNCONV_HPP_

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "fmdconv/attention.hpp"
#include "fmdconv/layer_config.hpp"
#include "fmdconv/ops.hpp"
#include "fmdconv/rng.hpp"
#include "fmdconv/tape.hpp"

namespace fmdconv {

/// K parallel kernels sharing one shape: weight [K, C_out, C_in/g, k, k],
/// optional bias [K, C_out]. Each kernel is Kaiming-initialized independently.
class KernelBank {
 public:
  KernelBank() = default;
  KernelBank(const std::string& name, const LayerConfig& cfg, Rng& rng);

  std::size_t kernels() const { return weight.value.dim(0); }
  bool has_bias() const { return !bias.value.empty(); }
  /// Weights of kernel i as [C_out, C_in/g, k, k].
  Tensor kernel(std::size_t i) const;
  void set_kernel(std::size_t i, const Tensor& w);

  Parameter weight;
  Parameter bias;  // empty value when the layer has no bias
};

/// Interface shared by the static baseline and every dynamic variant.
class ConvLayer {
 public:
  explicit ConvLayer(LayerConfig cfg) : cfg_(std::move(cfg)) {}
  virtual ~ConvLayer() = default;

  const LayerConfig& config() const noexcept { return cfg_; }
  ConvVariant variant() const noexcept { return cfg_.variant; }

  /// Batched forward recorded on the tape. x: [N, C_in, H, W].
  virtual Var forward(Tape& tape, Var x, const ForwardOptions& opts) const = 0;
  /// Independent per-sample reference: loops over samples, materializes each
  /// sample's effective kernel explicitly and calls plain conv2d.
  virtual Tensor naive_forward(const Tensor& x, double temperature) const = 0;

  virtual std::vector<const Parameter*> parameters() const = 0;
  std::vector<Parameter*> parameters();
  std::size_t parameter_count() const;

  /// Tape-free forward (evaluation mode).
  Tensor forward(const Tensor& x, double temperature = 1.0) const;

 protected:
  void check_input(const Tensor& x) const;
  Conv2dParams conv_params() const { return {cfg_.stride, cfg_.padding, cfg_.groups}; }

  LayerConfig cfg_;
};

class StaticConvLayer final : public ConvLayer {
 public:
  StaticConvLayer(const std::string& name, LayerConfig cfg, Rng& rng);

  using ConvLayer::forward;
  Var forward(Tape& tape, Var x, const ForwardOptions& opts) const override;
  Tensor naive_forward(const Tensor& x, double temperature) const override;
  std::vector<const Parameter*> parameters() const override;

  Parameter weight;  // [C_out, C_in/g, k, k]
  Parameter bias;    // [C_out] or empty
};

/// y = (sum_i alpha_i(x) W_i) * x with alpha from a
/// temperature softmax head.
class DynamicConvLayer final : public ConvLayer {
 public:
  struct Bypass {
    bool kernel = false;
  };

  DynamicConvLayer(const std::string& name, LayerConfig cfg, Rng& rng);

  using ConvLayer::forward;
  Var forward(Tape& tape, Var x, const ForwardOptions& opts) const override;
  Tensor naive_forward(const Tensor& x, double temperature) const override;
  std::vector<const Parameter*> parameters() const override;

  KernelBank bank;
  AttentionHead kernel_head;
  Bypass bypass;
};

/// CondConv-style routing: per-sample kernel sum_i r_i(x) W_i with
/// unnormalized sigmoid routing weights.
class CondConvLayer final : public ConvLayer {
 public:
  struct Bypass {
    bool routing = false;  // forces every r_i to 1
  };

  CondConvLayer(const std::string& name, LayerConfig cfg, Rng& rng);

  using ConvLayer::forward;
  Var forward(Tape& tape, Var x, const ForwardOptions& opts) const override;
  Tensor naive_forward(const Tensor& x, double temperature) const override;
  std::vector<const Parameter*> parameters() const override;

  KernelBank bank;
  AttentionHead routing_head;
  Bypass bypass;
};

/// Omni-dimensional form: per-sample kernel
///   sum_i alpha_w,i * (alpha_s . alpha_c . alpha_f . W_i)
/// with broadcasts against W_i [C_out, C_in/g, k, k]:
///   alpha_c -> input-channel axis (global channel index, so groups work),
///   alpha_f -> output-channel axis,
///   alpha_s -> the k x k spatial axis,
///   alpha_w,i -> scalar per kernel (temperature softmax).
/// One shared trunk feeds four branches (channel, filter, spatial, kernel);
/// channel/filter/spatial use sigmoid. The scaled kernels are materialized
/// per sample and per kernel before aggregation.
class ODConvLayer final : public ConvLayer {
 public:
  enum Branch : std::size_t { kChannel = 0, kFilter = 1, kSpatial = 2, kKernel = 3 };
  struct Bypass {
    bool channel = false;
    bool filter = false;
    bool spatial = false;
    bool kernel = false;
  };

  ODConvLayer(const std::string& name, LayerConfig cfg, Rng& rng);

  using ConvLayer::forward;
  Var forward(Tape& tape, Var x, const ForwardOptions& opts) const override;
  Tensor naive_forward(const Tensor& x, double temperature) const override;
  std::vector<const Parameter*> parameters() const override;

  KernelBank bank;
  AttentionHead head;
  Bypass bypass;
};

/// Input attention x temperature-degraded kernel attention x output attention.
///
/// Forward, for a batch of N samples:
///   1. A_in = sigmoid(head_in(GAP(x))), A_out = sigmoid(head_out(GAP(x))),
///      A_k = softmax(head_k(GAP(x)) / T); GAP(x) is computed once.
///   2. x <- x * A_in broadcast over [N, C_in, 1, 1].
///   3. W_agg[n] = sum_k A_k[n, k] W[k], b_agg[n] = sum_k A_k[n, k] b[k].
///   4. One grouped convolution over the batch folded into channels:
///      x as [1, N*C_in, H, W], W_agg as [N*C_out, C_in/g, k, k], N*g groups.
///   5. Unfold to [N, C_out, H', W'] and multiply by A_out over [N, C_out, 1, 1].
class FMDConvLayer final : public ConvLayer {
 public:
  struct Bypass {
    bool input = false;
    bool kernel = false;
    bool output = false;
  };

  FMDConvLayer(const std::string& name, LayerConfig cfg, Rng& rng);

  using ConvLayer::forward;
  Var forward(Tape& tape, Var x, const ForwardOptions& opts) const override;
  Tensor naive_forward(const Tensor& x, double temperature) const override;
  std::vector<const Parameter*> parameters() const override;

  KernelBank bank;
  AttentionHead input_head;
  AttentionHead output_head;
  AttentionHead kernel_head;
  Bypass bypass;
};

std::unique_ptr<ConvLayer> make_layer(const std::string& name, const LayerConfig& cfg, Rng& rng);

/// Exact parameter count of a layer built from cfg, without building it.
std::size_t layer_parameter_count(const LayerConfig& cfg);

/// Same as layer.naive_forward(x, temperature).
Tensor naive_forward_oracle(const ConvLayer& layer, const Tensor& x, double temperature);

}  // namespace fmdconv

#endif  // FMDCONV_DYNCONV_HPP_
