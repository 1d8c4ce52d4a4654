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

#include "fmdconv/catalog.hpp"

#include "fmdconv/tensor.hpp"

namespace fmdconv {

namespace {

LayerConfig conv_cfg(ConvVariant v, std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t stride,
                     std::size_t padding, const CatalogOptions& opt, bool dynamic) {
  LayerConfig c;
  c.variant = dynamic ? v : ConvVariant::Static;
  c.c_in = c_in;
  c.c_out = c_out;
  c.kernels = c.variant == ConvVariant::Static ? 1 : opt.kernels;
  c.kernel_size = k;
  c.stride = stride;
  c.padding = padding;
  c.reduction = opt.reduction;
  c.bias = dynamic ? opt.conv_bias : false;
  return c;
}

struct Builder {
  ModelSpec spec;
  FeatureShape cur;

  void main(LayerSpec l) {
    spec.layers.push_back(std::move(l));
    cur = spec.input_shapes().empty() ? cur : spec.output_shape();
  }
  void side(LayerSpec l, const FeatureShape& in) {
    l.side_branch = true;
    l.in_c = in.c;
    l.in_h = in.h;
    l.in_w = in.w;
    spec.layers.push_back(std::move(l));
  }
  void conv_bn(const std::string& name, const LayerConfig& c) {
    main(LayerSpec::make_conv(name, c));
    main(LayerSpec::make_batchnorm(name + ".bn", c.c_out));
  }
};

Builder start(std::string name, const CatalogOptions& opt) {
  if (opt.in_c == 0 || opt.in_h == 0 || opt.in_w == 0) throw ValueError("catalog: input dims must be positive");
  if (opt.classes == 0) throw ValueError("catalog: classes must be positive");
  Builder b;
  b.spec.name = std::move(name);
  b.spec.in_c = opt.in_c;
  b.spec.in_h = opt.in_h;
  b.spec.in_w = opt.in_w;
  b.cur = {opt.in_c, opt.in_h, opt.in_w, false};
  return b;
}

void resnet_stem(Builder& b, const CatalogOptions& opt) {
  if (opt.in_h <= 64 && opt.in_w <= 64) {
    b.conv_bn("stem.conv", conv_cfg(opt.variant, opt.in_c, 64, 3, 1, 1, opt, false));
    b.main(LayerSpec::make_relu("stem.relu"));
  } else {
    b.conv_bn("stem.conv", conv_cfg(opt.variant, opt.in_c, 64, 7, 2, 3, opt, false));
    b.main(LayerSpec::make_relu("stem.relu"));
    b.main(LayerSpec::make_maxpool("stem.pool", 3, 2, 1));
  }
}

void classifier(Builder& b, const CatalogOptions& opt) {
  b.main(LayerSpec::make_gap("gap"));
  b.main(LayerSpec::make_dense("fc", b.cur.c, opt.classes));
}

}  // namespace

ModelSpec tiny_cnn_spec(const CatalogOptions& opt, const std::vector<std::size_t>& widths) {
  if (widths.empty()) throw ValueError("tiny_cnn_spec: at least one block is required");
  Builder b = start("tiny", opt);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string p = "block" + std::to_string(i + 1);
    b.conv_bn(p + ".conv", conv_cfg(opt.variant, b.cur.c, widths[i], 3, 1, 1, opt, true));
    b.main(LayerSpec::make_relu(p + ".relu"));
    b.main(LayerSpec::make_avgpool(p + ".pool", 2));
  }
  classifier(b, opt);
  b.spec.validate();
  return b.spec;
}

ModelSpec resnet18_spec(const CatalogOptions& opt) {
  Builder b = start("resnet18", opt);
  resnet_stem(b, opt);
  const std::size_t widths[4] = {64, 128, 256, 512};
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t blk = 0; blk < 2; ++blk) {
      const std::string p = "layer" + std::to_string(s + 1) + "." + std::to_string(blk);
      const std::size_t stride = (s > 0 && blk == 0) ? 2 : 1;
      const FeatureShape in = b.cur;
      b.conv_bn(p + ".conv1", conv_cfg(opt.variant, in.c, widths[s], 3, stride, 1, opt, true));
      b.main(LayerSpec::make_relu(p + ".relu1"));
      b.conv_bn(p + ".conv2", conv_cfg(opt.variant, widths[s], widths[s], 3, 1, 1, opt, true));
      if (stride != 1 || in.c != widths[s]) {
        b.side(LayerSpec::make_conv(p + ".shortcut", conv_cfg(opt.variant, in.c, widths[s], 1, stride, 0, opt, false)),
               in);
        b.side(LayerSpec::make_batchnorm(p + ".shortcut.bn", widths[s]), b.cur);
      }
      b.main(LayerSpec::make_relu(p + ".relu2"));
    }
  }
  classifier(b, opt);
  b.spec.validate();
  return b.spec;
}

ModelSpec resnet50_spec(const CatalogOptions& opt) {
  Builder b = start("resnet50", opt);
  resnet_stem(b, opt);
  const std::size_t widths[4] = {64, 128, 256, 512};
  const std::size_t blocks[4] = {3, 4, 6, 3};
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t blk = 0; blk < blocks[s]; ++blk) {
      const std::string p = "layer" + std::to_string(s + 1) + "." + std::to_string(blk);
      const std::size_t stride = (s > 0 && blk == 0) ? 2 : 1;
      const std::size_t w = widths[s], out = 4 * widths[s];
      const FeatureShape in = b.cur;
      b.conv_bn(p + ".conv1", conv_cfg(opt.variant, in.c, w, 1, 1, 0, opt, false));
      b.main(LayerSpec::make_relu(p + ".relu1"));
      b.conv_bn(p + ".conv2", conv_cfg(opt.variant, w, w, 3, stride, 1, opt, true));
      b.main(LayerSpec::make_relu(p + ".relu2"));
      b.conv_bn(p + ".conv3", conv_cfg(opt.variant, w, out, 1, 1, 0, opt, false));
      if (stride != 1 || in.c != out) {
        b.side(LayerSpec::make_conv(p + ".shortcut", conv_cfg(opt.variant, in.c, out, 1, stride, 0, opt, false)), in);
        b.side(LayerSpec::make_batchnorm(p + ".shortcut.bn", out), b.cur);
      }
      b.main(LayerSpec::make_relu(p + ".relu3"));
    }
  }
  classifier(b, opt);
  b.spec.validate();
  return b.spec;
}

ModelSpec catalog_spec(std::string_view arch, const CatalogOptions& opt) {
  if (arch == "tiny") return tiny_cnn_spec(opt);
  if (arch == "resnet18") return resnet18_spec(opt);
  if (arch == "resnet50") return resnet50_spec(opt);
  throw ValueError("unknown architecture '" + std::string(arch) + "' (expected tiny, resnet18 or resnet50)");
}

std::vector<std::string_view> catalog_names() { return {"tiny", "resnet18", "resnet50"}; }

}  // namespace fmdconv
