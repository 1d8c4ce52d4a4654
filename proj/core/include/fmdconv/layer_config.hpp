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

#ifndef FMDCONV_LAYER_CONFIG_HPP_
#define FMDCONV_LAYER_CONFIG_HPP_

#include <cstddef>
#include <string>
#include <string_view>

namespace fmdconv {

enum class ConvVariant { Static, CondConv, DynamicConv, ODConv, FMDConv };

std::string_view to_string(ConvVariant v);
/// Accepts static, condconv, dynamicconv, odconv, fmdconv.
ConvVariant parse_variant(std::string_view name);

/// Shape and hyper-parameters of one convolution layer.
///
/// Serialized as a single line of space-separated key=value pairs with the
/// fixed field names
///   variant c_in c_out K k stride padding groups r bias
/// e.g. "variant=fmdconv c_in=16 c_out=32 K=4 k=3 stride=1 padding=1 groups=1 r=0.1 bias=1".
struct LayerConfig {
  ConvVariant variant = ConvVariant::FMDConv;
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  std::size_t kernels = 1;
  std::size_t kernel_size = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  std::size_t groups = 1;
  double reduction = 0.0625;
  bool bias = true;

  /// Throws ShapeError / ValueError on inconsistent fields.
  void validate() const;

  std::size_t kernel_elements() const { return c_out * (c_in / groups) * kernel_size * kernel_size; }

  std::string serialize() const;
  static LayerConfig parse(std::string_view text);

  friend bool operator==(const LayerConfig&, const LayerConfig&) = default;
};

}  // namespace fmdconv

#endif  // FMDCONV_LAYER_CONFIG_HPP_
