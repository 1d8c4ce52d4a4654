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

#ifndef FMDCONV_CATALOG_HPP_
#define FMDCONV_CATALOG_HPP_

#include <string_view>
#include <vector>

#include "fmdconv/model_spec.hpp"

namespace fmdconv {

struct CatalogOptions {
  ConvVariant variant = ConvVariant::FMDConv;
  std::size_t kernels = 4;
  double reduction = 0.0625;
  std::size_t classes = 10;
  std::size_t in_c = 3;
  std::size_t in_h = 32;
  std::size_t in_w = 32;
  bool conv_bias = true;  // bias on the dynamic / tiny-CNN convolutions
};

/// Three blocks of conv3x3 -> batch norm -> ReLU -> 2x2 average pool, then GAP and a dense
/// classifier. Every convolution uses the requested variant.
ModelSpec tiny_cnn_spec(const CatalogOptions& opt, const std::vector<std::size_t>& widths = {8, 16, 32});

/// ResNet-18 layer shapes. The sixteen 3x3 convolutions inside the residual
/// blocks use the requested variant; the stem and 1x1 shortcuts are static
/// and bias-free, each followed by batch norm. Inputs up to 64x64 get a 3x3
/// stride-1 stem, larger inputs the 7x7 stride-2 stem with max pooling.
ModelSpec resnet18_spec(const CatalogOptions& opt);

/// ResNet-50 bottleneck shapes; the 3x3 convolution of each bottleneck uses
/// the requested variant, 1x1 convolutions are static.
ModelSpec resnet50_spec(const CatalogOptions& opt);

/// "tiny", "resnet18" or "resnet50"; throws ValueError otherwise.
ModelSpec catalog_spec(std::string_view arch, const CatalogOptions& opt);

std::vector<std::string_view> catalog_names();

}  // namespace fmdconv

#endif  // FMDCONV_CATALOG_HPP_
