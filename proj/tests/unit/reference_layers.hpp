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

#ifndef FMDCONV_TESTS_REFERENCE_LAYERS_HPP_
#define FMDCONV_TESTS_REFERENCE_LAYERS_HPP_

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fmdconv/dynconv.hpp"
#include "test_util.hpp"

namespace fmdconv::testing {

// Gives every bias in the layer a random value so oracle checks exercise
// the bias paths.
inline void randomize_biases(ConvLayer& layer, std::mt19937_64& gen) {
  for (Parameter* p : layer.parameters())
    if (p->name.find("bias") != std::string::npos)
      p->value = random_tensor(p->value.shape(), gen, -0.5, 0.5);
}

inline Tensor sample(const Tensor& x, std::size_t n) {
  Shape s = x.shape();
  s[0] = 1;
  const std::size_t per = x.numel() / x.dim(0);
  return Tensor(s, std::vector<double>(x.data() + n * per, x.data() + (n + 1) * per));
}

inline Tensor row(const Tensor& t, std::size_t n) {
  const std::size_t w = t.dim(1);
  return Tensor(Shape{w}, std::vector<double>(t.data() + n * w, t.data() + (n + 1) * w));
}

inline Tensor pooled_row(const Tensor& x, std::size_t n) {
  const std::size_t c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor p(Shape{1, c}, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) p[ch] += x[(n * c + ch) * plane + i];
    p[ch] /= static_cast<double>(plane);
  }
  return p;
}

// Test-side reference: attention from AttentionHead::evaluate, convolution
// from the seven-loop oracle, kernels mixed with explicit loops.
inline Tensor reference_forward(const ConvLayer& layer, const Tensor& x, double temp) {
  const LayerConfig& c = layer.config();
  const std::size_t n = x.dim(0);
  std::vector<Tensor> outs;
  for (std::size_t s = 0; s < n; ++s) {
    Tensor xs = sample(x, s);
    const Tensor pooled = pooled_row(x, s);
    const KernelBank* bank = nullptr;
    Tensor mix_w, mix_b;
    std::vector<double> a_k(c.kernels, 1.0);
    Tensor a_out;
    auto mix = [&](const std::vector<double>& a, const KernelBank& b) {
      mix_w = Tensor(b.kernel(0).shape(), 0.0);
      for (std::size_t i = 0; i < c.kernels; ++i) {
        Tensor ki = b.kernel(i);
        for (std::size_t e = 0; e < ki.numel(); ++e) mix_w[e] += a[i] * ki[e];
      }
      if (b.has_bias()) {
        mix_b = Tensor(Shape{c.c_out}, 0.0);
        for (std::size_t i = 0; i < c.kernels; ++i)
          for (std::size_t o = 0; o < c.c_out; ++o) mix_b[o] += a[i] * b.bias.value[i * c.c_out + o];
      }
    };
    switch (c.variant) {
      case ConvVariant::Static: {
        auto& l = static_cast<const StaticConvLayer&>(layer);
        mix_w = l.weight.value;
        if (c.bias) mix_b = l.bias.value;
        break;
      }
      case ConvVariant::DynamicConv: {
        auto& l = static_cast<const DynamicConvLayer&>(layer);
        Tensor a = l.kernel_head.evaluate(pooled, temp);
        for (std::size_t i = 0; i < c.kernels; ++i) a_k[i] = a[i];
        bank = &l.bank;
        mix(a_k, l.bank);
        break;
      }
      case ConvVariant::CondConv: {
        auto& l = static_cast<const CondConvLayer&>(layer);
        Tensor a = l.routing_head.evaluate(pooled, 1.0);
        for (std::size_t i = 0; i < c.kernels; ++i) a_k[i] = a[i];
        bank = &l.bank;
        mix(a_k, l.bank);
        break;
      }
      case ConvVariant::FMDConv: {
        auto& l = static_cast<const FMDConvLayer&>(layer);
        Tensor a_in = l.input_head.evaluate(pooled, 1.0);
        a_out = l.output_head.evaluate(pooled, 1.0);
        Tensor a = l.kernel_head.evaluate(pooled, temp);
        for (std::size_t i = 0; i < c.kernels; ++i) a_k[i] = a[i];
        const std::size_t plane = xs.numel() / c.c_in;
        for (std::size_t ch = 0; ch < c.c_in; ++ch)
          for (std::size_t i = 0; i < plane; ++i) xs[ch * plane + i] *= a_in[ch];
        bank = &l.bank;
        mix(a_k, l.bank);
        break;
      }
      case ConvVariant::ODConv: {
        auto& l = static_cast<const ODConvLayer&>(layer);
        auto att = l.head.evaluate_all(pooled, temp);
        const Tensor& ac = att[ODConvLayer::kChannel];
        const Tensor& af = att[ODConvLayer::kFilter];
        const Tensor& as = att[ODConvLayer::kSpatial];
        const Tensor& aw = att[ODConvLayer::kKernel];
        const std::size_t cig = c.c_in / c.groups, cog = c.c_out / c.groups, kk = c.kernel_size * c.kernel_size;
        mix_w = Tensor(l.bank.kernel(0).shape(), 0.0);
        for (std::size_t i = 0; i < c.kernels; ++i) {
          Tensor ki = l.bank.kernel(i);
          for (std::size_t o = 0; o < c.c_out; ++o)
            for (std::size_t ci = 0; ci < cig; ++ci)
              for (std::size_t sp = 0; sp < kk; ++sp) {
                const std::size_t e = (o * cig + ci) * kk + sp;
                const std::size_t global_ci = (o / cog) * cig + ci;
                mix_w[e] += aw[i] * as[sp] * ac[global_ci] * af[o] * ki[e];
              }
        }
        if (l.bank.has_bias()) {
          mix_b = Tensor(Shape{c.c_out}, 0.0);
          for (std::size_t i = 0; i < c.kernels; ++i)
            for (std::size_t o = 0; o < c.c_out; ++o) mix_b[o] += aw[i] * l.bank.bias.value[i * c.c_out + o];
        }
        break;
      }
    }
    (void)bank;
    Tensor y = naive_conv2d(xs, mix_w, mix_b.empty() ? nullptr : &mix_b, c.stride, c.padding, c.groups);
    if (!a_out.empty()) {
      const std::size_t plane = y.numel() / c.c_out;
      for (std::size_t o = 0; o < c.c_out; ++o)
        for (std::size_t i = 0; i < plane; ++i) y[o * plane + i] *= a_out[o];
    }
    outs.push_back(std::move(y));
  }
  Shape s = outs[0].shape();
  s[0] = n;
  Tensor out(s);
  const std::size_t per = outs[0].numel();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < per; ++j) out[i * per + j] = outs[i][j];
  return out;
}

}  // namespace fmdconv::testing

#endif  // FMDCONV_TESTS_REFERENCE_LAYERS_HPP_
