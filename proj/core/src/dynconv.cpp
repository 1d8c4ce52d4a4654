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

#include "fmdconv/dynconv.hpp"

#include <cmath>
#include <stdexcept>

#include "fmdconv/init.hpp"

namespace fmdconv {

// ---------------------------------------------------------------------------
// KernelBank
// ---------------------------------------------------------------------------

KernelBank::KernelBank(const std::string& name, const LayerConfig& cfg, Rng& rng) {
  const std::size_t c_in_g = cfg.c_in / cfg.groups;
  const std::size_t k = cfg.kernel_size;
  weight = Parameter{name + ".bank.weight", Tensor(Shape{cfg.kernels, cfg.c_out, c_in_g, k, k})};
  const std::size_t per_kernel = cfg.kernel_elements();
  const std::size_t fan_in = c_in_g * k * k;
  for (std::size_t i = 0; i < cfg.kernels; ++i) {
    Tensor w(Shape{per_kernel});
    kaiming_uniform(w, fan_in, rng);
    std::copy(w.values().begin(), w.values().end(), weight.value.data() + i * per_kernel);
  }
  if (cfg.bias) bias = Parameter{name + ".bank.bias", Tensor(Shape{cfg.kernels, cfg.c_out}, 0.0)};
}

Tensor KernelBank::kernel(std::size_t i) const {
  const Shape& s = weight.value.shape();
  if (i >= s[0]) throw ShapeError("kernel index " + std::to_string(i) + " out of range");
  const std::size_t per = weight.value.numel() / s[0];
  std::vector<double> v(weight.value.data() + i * per, weight.value.data() + (i + 1) * per);
  return Tensor(Shape{s[1], s[2], s[3], s[4]}, std::move(v));
}

void KernelBank::set_kernel(std::size_t i, const Tensor& w) {
  const Shape& s = weight.value.shape();
  if (i >= s[0]) throw ShapeError("kernel index " + std::to_string(i) + " out of range");
  if (w.shape() != Shape{s[1], s[2], s[3], s[4]}) {
    throw ShapeError("set_kernel: shape " + shape_to_string(w.shape()) + " does not match bank");
  }
  std::copy(w.values().begin(), w.values().end(), weight.value.data() + i * w.numel());
}

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

namespace {

void check_temperature(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw ValueError("temperature must be positive, got " + std::to_string(t));
  }
}

Tensor sample_of(const Tensor& x, std::size_t n) {
  const std::size_t per = x.numel() / x.dim(0);
  std::vector<double> v(x.data() + n * per, x.data() + (n + 1) * per);
  Shape s = x.shape();
  s[0] = 1;
  return Tensor(std::move(s), std::move(v));
}

void write_sample(Tensor& out, std::size_t n, const Tensor& y) {
  std::copy(y.values().begin(), y.values().end(), out.data() + n * y.numel());
}

/// [N, K] attention times bank [K, ...] -> per-sample kernels [N, M] and
/// per-sample biases [N, C_out].
struct Aggregated {
  Var weight;
  std::optional<Var> bias;
};

Aggregated aggregate_bank(Tape& tape, Var attn, const KernelBank& bank) {
  const std::size_t k = bank.kernels();
  const std::size_t per = bank.weight.value.numel() / k;
  Aggregated agg;
  agg.weight = matmul(tape, attn, reshape(tape, tape.param(bank.weight), Shape{k, per}));
  if (bank.has_bias()) agg.bias = matmul(tape, attn, tape.param(bank.bias));
  return agg;
}

/// Grouped convolution of the folded batch: xf is [1, N*C_in, H, W], the
/// result [1, N*C_out, H', W'].
Var folded_conv_flat(Tape& tape, Var xf, const Aggregated& agg, const LayerConfig& cfg, std::size_t n) {
  const std::size_t k = cfg.kernel_size;
  Var wf = reshape(tape, agg.weight, Shape{n * cfg.c_out, cfg.c_in / cfg.groups, k, k});
  std::optional<Var> bf;
  if (agg.bias) bf = reshape(tape, *agg.bias, Shape{n * cfg.c_out});
  return conv2d(tape, xf, wf, bf, Conv2dParams{cfg.stride, cfg.padding, n * cfg.groups});
}

Shape folded_shape(const Tensor& x) { return Shape{1, x.dim(0) * x.dim(1), x.dim(2), x.dim(3)}; }

Shape unfolded_shape(const Tensor& y, std::size_t n) {
  return Shape{n, y.dim(1) / n, y.dim(2), y.dim(3)};
}

/// One grouped convolution realizing N distinct per-sample kernels.
Var folded_conv(Tape& tape, Var x, const Aggregated& agg, const LayerConfig& cfg) {
  const Tensor& xv = tape.value(x);
  const std::size_t n = xv.dim(0);
  Var y = folded_conv_flat(tape, reshape(tape, x, folded_shape(xv)), agg, cfg, n);
  return reshape(tape, y, unfolded_shape(tape.value(y), n));
}

/// x * attn with attn broadcast over trailing elements, emitted in `shape`
/// (same element order). Fuses a channel gate with a fold or unfold.
Var channel_scale_as(Tape& tape, Var x, Var attn, Shape shape) {
  const Tensor& xv = tape.value(x);
  const Tensor& av = tape.value(attn);
  const std::size_t inner = xv.numel() / av.numel();
  Tensor out(std::move(shape));
  for (std::size_t o = 0; o < av.numel(); ++o) {
    const double g = av[o];
    const double* src = xv.data() + o * inner;
    double* dst = out.data() + o * inner;
    for (std::size_t j = 0; j < inner; ++j) dst[j] = src[j] * g;
  }
  return tape.record("channel_scale_as", std::move(out), {x, attn}, [inner](const BackwardArgs& a) {
    const Tensor& xin = *a.inputs[0];
    const Tensor& at = *a.inputs[1];
    std::vector<Tensor> res(2);
    if (a.needs_grad[0]) {
      Tensor gx(xin.shape());
      for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] = a.grad_out[i] * at[i / inner];
      res[0] = std::move(gx);
    }
    if (a.needs_grad[1]) {
      Tensor ga(at.shape(), 0.0);
      for (std::size_t o = 0; o < at.numel(); ++o) {
        double acc = 0.0;
        for (std::size_t j = 0; j < inner; ++j) acc += a.grad_out[o * inner + j] * xin[o * inner + j];
        ga[o] = acc;
      }
      res[1] = std::move(ga);
    }
    return res;
  });
}

/// Per-sample kernel sum_i a[i] W_i (+ bias) for the naive oracles.
std::pair<Tensor, std::optional<Tensor>> mix_kernels(const KernelBank& bank,
                                                     std::span<const double> a) {
  const std::size_t k = bank.kernels();
  const std::size_t per = bank.weight.value.numel() / k;
  const Shape& s = bank.weight.value.shape();
  Tensor w(Shape{s[1], s[2], s[3], s[4]}, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const double* src = bank.weight.value.data() + i * per;
    for (std::size_t m = 0; m < per; ++m) w[m] += a[i] * src[m];
  }
  std::optional<Tensor> b;
  if (bank.has_bias()) {
    const std::size_t c_out = s[1];
    b = Tensor(Shape{c_out}, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t c = 0; c < c_out; ++c) (*b)[c] += a[i] * bank.bias.value[i * c_out + c];
    }
  }
  return {std::move(w), std::move(b)};
}

void scale_channels(Tensor& x, std::span<const double> a) {
  // x: [1, C, H, W]
  const std::size_t c = x.dim(1), plane = x.dim(2) * x.dim(3);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t j = 0; j < plane; ++j) x[ch * plane + j] *= a[ch];
  }
}

std::span<const double> row(const Tensor& t, std::size_t r) {
  const std::size_t cols = t.numel() / t.dim(0);
  return {t.data() + r * cols, cols};
}

void append(std::vector<const Parameter*>& out, const std::vector<const Parameter*>& more) {
  out.insert(out.end(), more.begin(), more.end());
}

void append_bank(std::vector<const Parameter*>& out, const KernelBank& bank) {
  out.push_back(&bank.weight);
  if (bank.has_bias()) out.push_back(&bank.bias);
}

// ODConv: scaled[n, i, co, ci, s] = W[i, co, ci, s] * c[n, g(co)*C_in/g + ci] * f[n, co] * sp[n, s].
// Missing factors are treated as 1.
struct OdFactors {
  std::optional<Var> channel, filter, spatial;
};

Var odconv_scale(Tape& tape, Var w, const OdFactors& f, std::size_t batch, const LayerConfig& cfg) {
  const Tensor& wv = tape.value(w);
  const std::size_t kernels = cfg.kernels, c_out = cfg.c_out, groups = cfg.groups;
  const std::size_t c_in_g = cfg.c_in / groups, c_out_g = c_out / groups;
  const std::size_t kk = cfg.kernel_size * cfg.kernel_size;
  const std::size_t per = c_out * c_in_g * kk;

  std::vector<Var> inputs{w};
  int ic = -1, ifl = -1, isp = -1;
  if (f.channel) { ic = static_cast<int>(inputs.size()); inputs.push_back(*f.channel); }
  if (f.filter) { ifl = static_cast<int>(inputs.size()); inputs.push_back(*f.filter); }
  if (f.spatial) { isp = static_cast<int>(inputs.size()); inputs.push_back(*f.spatial); }

  auto factor = [&](int idx, std::size_t n, std::size_t j, std::size_t width,
                    const std::vector<const Tensor*>& vals) {
    return idx < 0 ? 1.0 : (*vals[static_cast<std::size_t>(idx)])[n * width + j];
  };

  std::vector<const Tensor*> vals;
  for (Var v : inputs) vals.push_back(&tape.value(v));

  Tensor out(Shape{batch, kernels, per}, 0.0);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t i = 0; i < kernels; ++i) {
      const double* wi = wv.data() + i * per;
      double* dst = out.data() + (n * kernels + i) * per;
      for (std::size_t co = 0; co < c_out; ++co) {
        const double fv = factor(ifl, n, co, c_out, vals);
        const std::size_t base_ci = (co / c_out_g) * c_in_g;
        for (std::size_t ci = 0; ci < c_in_g; ++ci) {
          const double cv = factor(ic, n, base_ci + ci, cfg.c_in, vals);
          for (std::size_t s = 0; s < kk; ++s) {
            const std::size_t m = (co * c_in_g + ci) * kk + s;
            dst[m] = wi[m] * cv * fv * factor(isp, n, s, kk, vals);
          }
        }
      }
    }
  }

  return tape.record(
      "odconv_scale", std::move(out), inputs,
      [=](const BackwardArgs& a) {
        const Tensor& wt = *a.inputs[0];
        auto fac = [&](int idx, std::size_t n, std::size_t j, std::size_t width) {
          return idx < 0 ? 1.0 : (*a.inputs[static_cast<std::size_t>(idx)])[n * width + j];
        };
        std::vector<Tensor> res(a.inputs.size());
        Tensor gw(wt.shape(), 0.0);
        Tensor gc = ic >= 0 ? Tensor(a.inputs[ic]->shape(), 0.0) : Tensor();
        Tensor gf = ifl >= 0 ? Tensor(a.inputs[ifl]->shape(), 0.0) : Tensor();
        Tensor gs = isp >= 0 ? Tensor(a.inputs[isp]->shape(), 0.0) : Tensor();
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t i = 0; i < kernels; ++i) {
            const double* wi = wt.data() + i * per;
            const double* go = a.grad_out.data() + (n * kernels + i) * per;
            double* gwi = gw.data() + i * per;
            for (std::size_t co = 0; co < c_out; ++co) {
              const double fv = fac(ifl, n, co, c_out);
              const std::size_t base_ci = (co / c_out_g) * c_in_g;
              for (std::size_t ci = 0; ci < c_in_g; ++ci) {
                const double cv = fac(ic, n, base_ci + ci, cfg.c_in);
                for (std::size_t s = 0; s < kk; ++s) {
                  const std::size_t m = (co * c_in_g + ci) * kk + s;
                  const double sv = fac(isp, n, s, kk);
                  const double g = go[m];
                  gwi[m] += g * (cv * fv * sv);
                  if (ic >= 0) gc[n * cfg.c_in + base_ci + ci] += g * wi[m] * fv * sv;
                  if (ifl >= 0) gf[n * c_out + co] += g * wi[m] * cv * sv;
                  if (isp >= 0) gs[n * kk + s] += g * wi[m] * cv * fv;
                }
              }
            }
          }
        }
        res[0] = std::move(gw);
        if (ic >= 0) res[static_cast<std::size_t>(ic)] = std::move(gc);
        if (ifl >= 0) res[static_cast<std::size_t>(ifl)] = std::move(gf);
        if (isp >= 0) res[static_cast<std::size_t>(isp)] = std::move(gs);
        return res;
      });
}

// out[n, m] = sum_i a[n, i] * scaled[n, i, m]
Var kernel_mix(Tape& tape, Var attn, Var scaled) {
  const Tensor& av = tape.value(attn);
  const Tensor& sv = tape.value(scaled);
  const std::size_t batch = sv.dim(0), kernels = sv.dim(1), per = sv.dim(2);
  if (av.shape() != Shape{batch, kernels}) {
    throw ShapeError("kernel_mix: attention shape " + shape_to_string(av.shape()) +
                     " does not match scaled kernels " + shape_to_string(sv.shape()));
  }
  Tensor out(Shape{batch, per}, 0.0);
  for (std::size_t n = 0; n < batch; ++n) {
    double* dst = out.data() + n * per;
    for (std::size_t i = 0; i < kernels; ++i) {
      const double w = av[n * kernels + i];
      const double* src = sv.data() + (n * kernels + i) * per;
      for (std::size_t m = 0; m < per; ++m) dst[m] += w * src[m];
    }
  }
  return tape.record("kernel_mix", std::move(out), {attn, scaled}, [](const BackwardArgs& a) {
    const Tensor& at = *a.inputs[0];
    const Tensor& st = *a.inputs[1];
    const std::size_t b = st.dim(0), k = st.dim(1), p = st.dim(2);
    std::vector<Tensor> res(2);
    if (a.needs_grad[0]) {
      Tensor ga(at.shape(), 0.0);
      for (std::size_t n = 0; n < b; ++n) {
        const double* go = a.grad_out.data() + n * p;
        for (std::size_t i = 0; i < k; ++i) {
          const double* src = st.data() + (n * k + i) * p;
          double acc = 0.0;
          for (std::size_t m = 0; m < p; ++m) acc += go[m] * src[m];
          ga[n * k + i] = acc;
        }
      }
      res[0] = std::move(ga);
    }
    if (a.needs_grad[1]) {
      Tensor gs(st.shape(), 0.0);
      for (std::size_t n = 0; n < b; ++n) {
        const double* go = a.grad_out.data() + n * p;
        for (std::size_t i = 0; i < k; ++i) {
          const double w = at[n * k + i];
          double* dst = gs.data() + (n * k + i) * p;
          for (std::size_t m = 0; m < p; ++m) dst[m] = w * go[m];
        }
      }
      res[1] = std::move(gs);
    }
    return res;
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// ConvLayer
// ---------------------------------------------------------------------------

std::vector<Parameter*> ConvLayer::parameters() {
  std::vector<Parameter*> out;
  for (const Parameter* p : std::as_const(*this).parameters()) out.push_back(const_cast<Parameter*>(p));
  return out;
}

std::size_t ConvLayer::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.numel();
  return n;
}

Tensor ConvLayer::forward(const Tensor& x, double temperature) const {
  Tape tape;
  ForwardOptions opts;
  opts.temperature = temperature;
  return tape.value(forward(tape, tape.constant(x), opts));
}

void ConvLayer::check_input(const Tensor& x) const {
  if (x.rank() != 4) {
    throw ShapeError("conv layer input must be [N, C, H, W], got " + shape_to_string(x.shape()));
  }
  if (x.dim(1) != cfg_.c_in) {
    throw ShapeError("conv layer input channels (dim 1) = " + std::to_string(x.dim(1)) +
                     " but layer expects c_in = " + std::to_string(cfg_.c_in));
  }
  conv_output_size(x.dim(2), cfg_.kernel_size, cfg_.stride, cfg_.padding);
  conv_output_size(x.dim(3), cfg_.kernel_size, cfg_.stride, cfg_.padding);
}

// ---------------------------------------------------------------------------
// Static
// ---------------------------------------------------------------------------

StaticConvLayer::StaticConvLayer(const std::string& name, LayerConfig cfg, Rng& rng)
    : ConvLayer(std::move(cfg)) {
  cfg_.variant = ConvVariant::Static;
  cfg_.validate();
  const std::size_t c_in_g = cfg_.c_in / cfg_.groups, k = cfg_.kernel_size;
  weight = Parameter{name + ".weight", Tensor(Shape{cfg_.c_out, c_in_g, k, k})};
  kaiming_uniform(weight.value, c_in_g * k * k, rng);
  if (cfg_.bias) bias = Parameter{name + ".bias", Tensor(Shape{cfg_.c_out}, 0.0)};
}

Var StaticConvLayer::forward(Tape& tape, Var x, const ForwardOptions&) const {
  check_input(tape.value(x));
  std::optional<Var> b;
  if (cfg_.bias) b = tape.param(bias);
  return conv2d(tape, x, tape.param(weight), b, conv_params());
}

Tensor StaticConvLayer::naive_forward(const Tensor& x, double) const {
  check_input(x);
  const Tensor* b = cfg_.bias ? &bias.value : nullptr;
  Tensor out;
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    Tensor y = conv2d(sample_of(x, n), weight.value, b, conv_params());
    if (n == 0) {
      Shape s = y.shape();
      s[0] = x.dim(0);
      out = Tensor(s, 0.0);
    }
    write_sample(out, n, y);
  }
  return out;
}

std::vector<const Parameter*> StaticConvLayer::parameters() const {
  std::vector<const Parameter*> ps{&weight};
  if (cfg_.bias) ps.push_back(&bias);
  return ps;
}

// ---------------------------------------------------------------------------
// DynamicConv
// ---------------------------------------------------------------------------

DynamicConvLayer::DynamicConvLayer(const std::string& name, LayerConfig cfg, Rng& rng)
    : ConvLayer(std::move(cfg)) {
  cfg_.variant = ConvVariant::DynamicConv;
  cfg_.validate();
  bank = KernelBank(name, cfg_, rng);
  kernel_head = AttentionHead(name + ".kernel_att", cfg_.c_in, cfg_.kernels, cfg_.reduction,
                              HeadActivation::TemperatureSoftmax, rng);
}

Var DynamicConvLayer::forward(Tape& tape, Var x, const ForwardOptions& opts) const {
  const Tensor& xv = tape.value(x);
  check_input(xv);
  check_temperature(opts.temperature);
  const std::size_t n = xv.dim(0);
  Var attn = bypass.kernel ? tape.constant(Tensor(Shape{n, cfg_.kernels}, 1.0))
                           : kernel_head.forward(tape, global_avg_pool(tape, x), opts);
  return folded_conv(tape, x, aggregate_bank(tape, attn, bank), cfg_);
}

Tensor DynamicConvLayer::naive_forward(const Tensor& x, double temperature) const {
  check_input(x);
  check_temperature(temperature);
  Tensor out;
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    Tensor xn = sample_of(x, n);
    Tensor a = bypass.kernel ? Tensor(Shape{1, cfg_.kernels}, 1.0)
                             : kernel_head.evaluate(global_avg_pool(xn), temperature);
    auto [w, b] = mix_kernels(bank, a.values());
    Tensor y = conv2d(xn, w, b ? &*b : nullptr, conv_params());
    if (n == 0) out = Tensor(Shape{x.dim(0), y.dim(1), y.dim(2), y.dim(3)}, 0.0);
    write_sample(out, n, y);
  }
  return out;
}

std::vector<const Parameter*> DynamicConvLayer::parameters() const {
  std::vector<const Parameter*> ps;
  append_bank(ps, bank);
  append(ps, kernel_head.parameters());
  return ps;
}

// ---------------------------------------------------------------------------
// CondConv
// ---------------------------------------------------------------------------

CondConvLayer::CondConvLayer(const std::string& name, LayerConfig cfg, Rng& rng)
    : ConvLayer(std::move(cfg)) {
  cfg_.variant = ConvVariant::CondConv;
  cfg_.validate();
  bank = KernelBank(name, cfg_, rng);
  routing_head = AttentionHead(name + ".routing", cfg_.c_in, cfg_.kernels, cfg_.reduction,
                               HeadActivation::Sigmoid, rng);
}

Var CondConvLayer::forward(Tape& tape, Var x, const ForwardOptions& opts) const {
  const Tensor& xv = tape.value(x);
  check_input(xv);
  const std::size_t n = xv.dim(0);
  Var attn = bypass.routing ? tape.constant(Tensor(Shape{n, cfg_.kernels}, 1.0))
                            : routing_head.forward(tape, global_avg_pool(tape, x), opts);
  return folded_conv(tape, x, aggregate_bank(tape, attn, bank), cfg_);
}

Tensor CondConvLayer::naive_forward(const Tensor& x, double) const {
  check_input(x);
  Tensor out;
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    Tensor xn = sample_of(x, n);
    Tensor a = bypass.routing ? Tensor(Shape{1, cfg_.kernels}, 1.0)
                              : routing_head.evaluate(global_avg_pool(xn), 1.0);
    auto [w, b] = mix_kernels(bank, a.values());
    Tensor y = conv2d(xn, w, b ? &*b : nullptr, conv_params());
    if (n == 0) out = Tensor(Shape{x.dim(0), y.dim(1), y.dim(2), y.dim(3)}, 0.0);
    write_sample(out, n, y);
  }
  return out;
}

std::vector<const Parameter*> CondConvLayer::parameters() const {
  std::vector<const Parameter*> ps;
  append_bank(ps, bank);
  append(ps, routing_head.parameters());
  return ps;
}

// ---------------------------------------------------------------------------
// ODConv
// ---------------------------------------------------------------------------

ODConvLayer::ODConvLayer(const std::string& name, LayerConfig cfg, Rng& rng)
    : ConvLayer(std::move(cfg)) {
  cfg_.variant = ConvVariant::ODConv;
  cfg_.validate();
  bank = KernelBank(name, cfg_, rng);
  const std::size_t kk = cfg_.kernel_size * cfg_.kernel_size;
  head = AttentionHead(name + ".omni_att", cfg_.c_in, cfg_.reduction,
                       {{cfg_.c_in, HeadActivation::Sigmoid},
                        {cfg_.c_out, HeadActivation::Sigmoid},
                        {kk, HeadActivation::Sigmoid},
                        {cfg_.kernels, HeadActivation::TemperatureSoftmax}},
                       rng);
}

Var ODConvLayer::forward(Tape& tape, Var x, const ForwardOptions& opts) const {
  const Tensor& xv = tape.value(x);
  check_input(xv);
  check_temperature(opts.temperature);
  const std::size_t n = xv.dim(0);
  const bool all_bypassed = bypass.channel && bypass.filter && bypass.spatial && bypass.kernel;
  std::vector<Var> att;
  if (!all_bypassed) att = head.forward_all(tape, global_avg_pool(tape, x), opts);

  OdFactors f;
  if (!bypass.channel) f.channel = att[kChannel];
  if (!bypass.filter) f.filter = att[kFilter];
  if (!bypass.spatial) f.spatial = att[kSpatial];
  Var a_w = bypass.kernel ? tape.constant(Tensor(Shape{n, cfg_.kernels}, 1.0)) : att[kKernel];

  Var scaled = odconv_scale(tape, tape.param(bank.weight), f, n, cfg_);
  Aggregated agg;
  agg.weight = kernel_mix(tape, a_w, scaled);
  if (bank.has_bias()) agg.bias = matmul(tape, a_w, tape.param(bank.bias));
  return folded_conv(tape, x, agg, cfg_);
}

Tensor ODConvLayer::naive_forward(const Tensor& x, double temperature) const {
  check_input(x);
  check_temperature(temperature);
  const std::size_t kernels = cfg_.kernels, c_out = cfg_.c_out;
  const std::size_t c_in_g = cfg_.c_in / cfg_.groups, c_out_g = c_out / cfg_.groups;
  const std::size_t kk = cfg_.kernel_size * cfg_.kernel_size;
  const std::size_t per = c_out * c_in_g * kk;
  Tensor out;
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    Tensor xn = sample_of(x, n);
    std::vector<Tensor> att = head.evaluate_all(global_avg_pool(xn), temperature);
    auto val = [&](std::size_t branch, bool skip, std::size_t j) {
      return skip ? 1.0 : att[branch][j];
    };
    Tensor w(Shape{c_out, c_in_g, cfg_.kernel_size, cfg_.kernel_size}, 0.0);
    for (std::size_t i = 0; i < kernels; ++i) {
      const double aw = val(kKernel, bypass.kernel, i);
      for (std::size_t co = 0; co < c_out; ++co) {
        for (std::size_t ci = 0; ci < c_in_g; ++ci) {
          const std::size_t gci = (co / c_out_g) * c_in_g + ci;
          for (std::size_t s = 0; s < kk; ++s) {
            const std::size_t m = (co * c_in_g + ci) * kk + s;
            const double scaled = val(kSpatial, bypass.spatial, s) *
                                  val(kChannel, bypass.channel, gci) *
                                  val(kFilter, bypass.filter, co) *
                                  bank.weight.value[i * per + m];
            w[m] += aw * scaled;
          }
        }
      }
    }
    std::optional<Tensor> b;
    if (bank.has_bias()) {
      b = Tensor(Shape{c_out}, 0.0);
      for (std::size_t i = 0; i < kernels; ++i) {
        for (std::size_t co = 0; co < c_out; ++co) {
          (*b)[co] += val(kKernel, bypass.kernel, i) * bank.bias.value[i * c_out + co];
        }
      }
    }
    Tensor y = conv2d(xn, w, b ? &*b : nullptr, conv_params());
    if (n == 0) out = Tensor(Shape{x.dim(0), y.dim(1), y.dim(2), y.dim(3)}, 0.0);
    write_sample(out, n, y);
  }
  return out;
}

std::vector<const Parameter*> ODConvLayer::parameters() const {
  std::vector<const Parameter*> ps;
  append_bank(ps, bank);
  append(ps, head.parameters());
  return ps;
}

// ---------------------------------------------------------------------------
// FMDConv
// ---------------------------------------------------------------------------

FMDConvLayer::FMDConvLayer(const std::string& name, LayerConfig cfg, Rng& rng)
    : ConvLayer(std::move(cfg)) {
  cfg_.variant = ConvVariant::FMDConv;
  cfg_.validate();
  bank = KernelBank(name, cfg_, rng);
  input_head = AttentionHead(name + ".input_att", cfg_.c_in, cfg_.c_in, cfg_.reduction,
                             HeadActivation::Sigmoid, rng);
  output_head = AttentionHead(name + ".output_att", cfg_.c_in, cfg_.c_out, cfg_.reduction,
                              HeadActivation::Sigmoid, rng);
  kernel_head = AttentionHead(name + ".kernel_att", cfg_.c_in, cfg_.kernels, cfg_.reduction,
                              HeadActivation::TemperatureSoftmax, rng);
}

Var FMDConvLayer::forward(Tape& tape, Var x, const ForwardOptions& opts) const {
  const Tensor& xv = tape.value(x);
  check_input(xv);
  check_temperature(opts.temperature);
  const std::size_t n = xv.dim(0);
  const Shape fold = folded_shape(xv);  // xv may move once heads record nodes
  const bool any_head = !(bypass.input && bypass.kernel && bypass.output);
  Var pooled;
  if (any_head) pooled = global_avg_pool(tape, x);

  Var a_out;
  if (!bypass.output) a_out = output_head.forward(tape, pooled, opts);
  Var a_kernel = bypass.kernel ? tape.constant(Tensor(Shape{n, cfg_.kernels}, 1.0))
                               : kernel_head.forward(tape, pooled, opts);
  Var xf = bypass.input ? reshape(tape, x, fold)
                        : channel_scale_as(tape, x, input_head.forward(tape, pooled, opts), fold);
  Var y = folded_conv_flat(tape, xf, aggregate_bank(tape, a_kernel, bank), cfg_, n);
  const Shape unfold = unfolded_shape(tape.value(y), n);
  return bypass.output ? reshape(tape, y, unfold) : channel_scale_as(tape, y, a_out, unfold);
}

Tensor FMDConvLayer::naive_forward(const Tensor& x, double temperature) const {
  check_input(x);
  check_temperature(temperature);
  Tensor out;
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    Tensor xn = sample_of(x, n);
    const Tensor pooled = global_avg_pool(xn);
    Tensor a_k = bypass.kernel ? Tensor(Shape{1, cfg_.kernels}, 1.0)
                               : kernel_head.evaluate(pooled, temperature);
    if (!bypass.input) scale_channels(xn, row(input_head.evaluate(pooled, 1.0), 0));
    auto [w, b] = mix_kernels(bank, a_k.values());
    Tensor y = conv2d(xn, w, b ? &*b : nullptr, conv_params());
    if (!bypass.output) scale_channels(y, row(output_head.evaluate(pooled, 1.0), 0));
    if (n == 0) out = Tensor(Shape{x.dim(0), y.dim(1), y.dim(2), y.dim(3)}, 0.0);
    write_sample(out, n, y);
  }
  return out;
}

std::vector<const Parameter*> FMDConvLayer::parameters() const {
  std::vector<const Parameter*> ps;
  append_bank(ps, bank);
  append(ps, input_head.parameters());
  append(ps, output_head.parameters());
  append(ps, kernel_head.parameters());
  return ps;
}

// ---------------------------------------------------------------------------

std::unique_ptr<ConvLayer> make_layer(const std::string& name, const LayerConfig& cfg, Rng& rng) {
  switch (cfg.variant) {
    case ConvVariant::Static: return std::make_unique<StaticConvLayer>(name, cfg, rng);
    case ConvVariant::CondConv: return std::make_unique<CondConvLayer>(name, cfg, rng);
    case ConvVariant::DynamicConv: return std::make_unique<DynamicConvLayer>(name, cfg, rng);
    case ConvVariant::ODConv: return std::make_unique<ODConvLayer>(name, cfg, rng);
    case ConvVariant::FMDConv: return std::make_unique<FMDConvLayer>(name, cfg, rng);
  }
  throw ValueError("unknown convolution variant");
}

namespace {

std::size_t head_params(std::size_t in, double r, std::initializer_list<std::size_t> outs) {
  const std::size_t h = hidden_dim_for(in, r);
  std::size_t n = h * in + h;
  for (std::size_t o : outs) n += o * h + o;
  return n;
}

}  // namespace

std::size_t layer_parameter_count(const LayerConfig& cfg) {
  cfg.validate();
  const std::size_t bank = cfg.kernels * cfg.kernel_elements() + (cfg.bias ? cfg.kernels * cfg.c_out : 0);
  const double r = cfg.reduction;
  switch (cfg.variant) {
    case ConvVariant::Static:
      return cfg.kernel_elements() + (cfg.bias ? cfg.c_out : 0);
    case ConvVariant::CondConv:
    case ConvVariant::DynamicConv:
      return bank + head_params(cfg.c_in, r, {cfg.kernels});
    case ConvVariant::ODConv:
      return bank + head_params(cfg.c_in, r,
                                {cfg.c_in, cfg.c_out, cfg.kernel_size * cfg.kernel_size, cfg.kernels});
    case ConvVariant::FMDConv:
      return bank + head_params(cfg.c_in, r, {cfg.c_in}) + head_params(cfg.c_in, r, {cfg.c_out}) +
             head_params(cfg.c_in, r, {cfg.kernels});
  }
  return 0;
}

Tensor naive_forward_oracle(const ConvLayer& layer, const Tensor& x, double temperature) {
  return layer.naive_forward(x, temperature);
}

}  // namespace fmdconv
