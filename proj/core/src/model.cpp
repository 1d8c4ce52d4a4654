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

#include "fmdconv/model.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>

#include "fmdconv/init.hpp"
#include "fmdconv/ops.hpp"

namespace fmdconv {

Model::Model(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng(seed);
  nodes_.reserve(spec_.layers.size());
  for (const LayerSpec& l : spec_.layers) {
    if (l.side_branch) throw ValueError("model: side-branch layer '" + l.name + "' is not trainable here");
    Node n{&l, nullptr, {}, {}, {}, {}};
    switch (l.kind) {
      case LayerKind::Conv:
        n.conv = make_layer(l.name, l.conv, rng);
        break;
      case LayerKind::Dense:
        n.weight = Parameter{l.name + ".weight", Tensor(Shape{l.out_features, l.in_features})};
        kaiming_uniform(n.weight.value, l.in_features, rng);
        if (l.bias) n.bias = Parameter{l.name + ".bias", Tensor(Shape{l.out_features}, 0.0)};
        break;
      case LayerKind::BatchNorm:
        n.weight = Parameter{l.name + ".weight", Tensor(Shape{l.channels}, 1.0)};
        n.bias = Parameter{l.name + ".bias", Tensor(Shape{l.channels}, 0.0)};
        n.running_mean = Parameter{l.name + ".running_mean", Tensor(Shape{l.channels}, 0.0)};
        n.running_var = Parameter{l.name + ".running_var", Tensor(Shape{l.channels}, 1.0)};
        break;
      case LayerKind::Relu:
      case LayerKind::AvgPool:
      case LayerKind::GlobalAvgPool:
        break;
      case LayerKind::MaxPool:
        throw ValueError("model: layer '" + l.name + "' (" + std::string(to_string(l.kind)) +
                         ") is counting-only and cannot be trained");
    }
    nodes_.push_back(std::move(n));
  }
  if (spec_.layers.back().kind != LayerKind::Dense) throw ValueError("model: the last layer must be dense");
}

std::size_t Model::class_count() const { return spec_.layers.back().out_features; }

Var Model::forward(Tape& tape, Var x, const ForwardOptions& opts) const {
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 4 || xv.dim(1) != spec_.in_c || xv.dim(2) != spec_.in_h || xv.dim(3) != spec_.in_w) {
    throw ShapeError("model '" + spec_.name + "' expects [N, " + std::to_string(spec_.in_c) + ", " +
                     std::to_string(spec_.in_h) + ", " + std::to_string(spec_.in_w) + "], got " +
                     shape_to_string(xv.shape()));
  }
  Var h = x;
  for (const Node& n : nodes_) {
    switch (n.spec->kind) {
      case LayerKind::Conv: h = n.conv->forward(tape, h, opts); break;
      case LayerKind::BatchNorm: {
        if (opts.training) {
          ChannelStats st;
          h = batch_norm(tape, h, tape.param(n.weight), tape.param(n.bias), kBatchNormEps, &st);
          const Tensor& hv = tape.value(h);
          const double m = static_cast<double>(hv.dim(0) * hv.dim(2) * hv.dim(3));
          const double unbias = m > 1.0 ? m / (m - 1.0) : 1.0;
          for (std::size_t c = 0; c < st.mean.numel(); ++c) {
            double& rm = n.running_mean.value[c];
            double& rv = n.running_var.value[c];
            rm = (1.0 - kBatchNormMomentum) * rm + kBatchNormMomentum * st.mean[c];
            rv = (1.0 - kBatchNormMomentum) * rv + kBatchNormMomentum * st.var[c] * unbias;
          }
        } else {
          h = batch_norm_inference(tape, h, n.running_mean.value, n.running_var.value, tape.param(n.weight),
                                   tape.param(n.bias), kBatchNormEps);
        }
        break;
      }
      case LayerKind::Relu: h = relu(tape, h); break;
      case LayerKind::AvgPool: h = avg_pool2d(tape, h, n.spec->window); break;
      case LayerKind::GlobalAvgPool: h = global_avg_pool(tape, h); break;
      case LayerKind::Dense: {
        std::optional<Var> b;
        if (n.spec->bias) b = tape.param(n.bias);
        h = dense(tape, h, tape.param(n.weight), b);
        break;
      }
      default: throw ValueError("model: unsupported layer in forward");
    }
  }
  return h;
}

Tensor Model::logits(const Tensor& x, double temperature) const {
  Tape tape;
  ForwardOptions opts;
  opts.temperature = temperature;
  return tape.value(forward(tape, tape.constant(x), opts));
}

std::vector<const Parameter*> Model::parameters() const {
  std::vector<const Parameter*> ps;
  for (const Node& n : nodes_) {
    if (n.conv) {
      const auto more = std::as_const(*n.conv).parameters();
      ps.insert(ps.end(), more.begin(), more.end());
    } else if (n.spec->kind == LayerKind::Dense) {
      ps.push_back(&n.weight);
      if (n.spec->bias) ps.push_back(&n.bias);
    } else if (n.spec->kind == LayerKind::BatchNorm) {
      ps.push_back(&n.weight);
      ps.push_back(&n.bias);
    }
  }
  return ps;
}

std::vector<const Parameter*> Model::stored_tensors() const {
  std::vector<const Parameter*> ps = parameters();
  for (const Node& n : nodes_) {
    if (n.spec->kind == LayerKind::BatchNorm) {
      ps.push_back(&n.running_mean);
      ps.push_back(&n.running_var);
    }
  }
  return ps;
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> ps;
  for (const Parameter* p : std::as_const(*this).parameters()) ps.push_back(const_cast<Parameter*>(p));
  return ps;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.numel();
  return n;
}

std::vector<ConvLayer*> Model::conv_layers() {
  std::vector<ConvLayer*> out;
  for (Node& n : nodes_) {
    if (n.conv) out.push_back(n.conv.get());
  }
  return out;
}

namespace {

constexpr char kMagic[4] = {'F', 'M', 'D', 'W'};

void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_bytes(std::istream& is, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw std::runtime_error("weights file: unexpected end of file");
    v |= static_cast<std::uint64_t>(c) << (8 * i);
  }
  return v;
}

}  // namespace

void Model::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  const auto ps = stored_tensors();
  os.write(kMagic, 4);
  put_u32(os, static_cast<std::uint32_t>(ps.size()));
  for (const Parameter* p : ps) {
    put_u32(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_u32(os, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) put_u32(os, static_cast<std::uint32_t>(d));
    for (double v : p->value.values()) put_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw std::runtime_error("error writing '" + path.string() + "'");
}

void Model::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open weights file '" + path.string() + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kMagic, 4)) {
    throw std::runtime_error("'" + path.string() + "' is not a weights file (bad magic)");
  }
  std::vector<Parameter*> ps;
  for (const Parameter* p : stored_tensors()) ps.push_back(const_cast<Parameter*>(p));
  const std::size_t count = get_bytes(is, 4);
  if (count != ps.size()) {
    throw std::runtime_error("weights file has " + std::to_string(count) + " parameters, model has " +
                             std::to_string(ps.size()));
  }
  for (Parameter* p : ps) {
    const std::size_t len = get_bytes(is, 4);
    std::string name(len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(len))) throw std::runtime_error("weights file: truncated name");
    if (name != p->name) throw std::runtime_error("weights file: expected '" + p->name + "', found '" + name + "'");
    const std::size_t rank = get_bytes(is, 4);
    Shape s(rank);
    for (auto& d : s) d = get_bytes(is, 4);
    if (s != p->value.shape()) {
      throw std::runtime_error("weights file: shape mismatch for '" + name + "': " + shape_to_string(s) + " vs " +
                               shape_to_string(p->value.shape()));
    }
    for (std::size_t i = 0; i < p->value.numel(); ++i) p->value[i] = std::bit_cast<double>(get_bytes(is, 8));
  }
}

ModelSpec respec(const ModelSpec& spec, ConvVariant variant, std::size_t kernels, double reduction,
                 std::size_t class_count) {
  if (class_count == 0) throw ValueError("class_count must be positive");
  ModelSpec s = spec;
  for (LayerSpec& l : s.layers) {
    if (l.kind != LayerKind::Conv || l.side_branch) continue;
    l.conv.variant = variant;
    l.conv.kernels = variant == ConvVariant::Static ? 1 : kernels;
    l.conv.reduction = reduction;
  }
  for (auto it = s.layers.rbegin(); it != s.layers.rend(); ++it) {
    if (it->kind == LayerKind::Dense) {
      it->out_features = class_count;
      break;
    }
  }
  s.validate();
  return s;
}

Model build_model(const ModelSpec& spec, ConvVariant variant, std::size_t kernels, double reduction,
                  std::size_t class_count, std::uint64_t seed) {
  return Model(respec(spec, variant, kernels, reduction, class_count), seed);
}

}  // namespace fmdconv
