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

#include "fmdconv/layer_config.hpp"

#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>

#include "fmdconv/tensor.hpp"

namespace fmdconv {

std::string_view to_string(ConvVariant v) {
  switch (v) {
    case ConvVariant::Static: return "static";
    case ConvVariant::CondConv: return "condconv";
    case ConvVariant::DynamicConv: return "dynamicconv";
    case ConvVariant::ODConv: return "odconv";
    case ConvVariant::FMDConv: return "fmdconv";
  }
  return "unknown";
}

ConvVariant parse_variant(std::string_view name) {
  for (ConvVariant v : {ConvVariant::Static, ConvVariant::CondConv, ConvVariant::DynamicConv,
                        ConvVariant::ODConv, ConvVariant::FMDConv}) {
    if (name == to_string(v)) return v;
  }
  throw ValueError("unknown convolution variant '" + std::string(name) + "'");
}

void LayerConfig::validate() const {
  auto positive = [](std::size_t v, const char* field) {
    if (v == 0) throw ValueError(std::string("layer config: ") + field + " must be positive");
  };
  positive(c_in, "c_in");
  positive(c_out, "c_out");
  positive(kernels, "K");
  positive(kernel_size, "k");
  positive(stride, "stride");
  positive(groups, "groups");
  if (c_in % groups != 0) {
    throw ShapeError("layer config: c_in = " + std::to_string(c_in) +
                     " not divisible by groups = " + std::to_string(groups));
  }
  if (c_out % groups != 0) {
    throw ShapeError("layer config: c_out = " + std::to_string(c_out) +
                     " not divisible by groups = " + std::to_string(groups));
  }
  if (variant == ConvVariant::Static && kernels != 1) {
    throw ValueError("layer config: static convolution has exactly one kernel");
  }
  if (variant != ConvVariant::Static && !(reduction > 0.0 && reduction <= 1.0)) {
    throw ValueError("layer config: r must be in (0, 1]");
  }
}

std::string LayerConfig::serialize() const {
  char r_buf[32];
  std::snprintf(r_buf, sizeof r_buf, "%.17g", reduction);
  std::ostringstream os;
  os << "variant=" << to_string(variant) << " c_in=" << c_in << " c_out=" << c_out
     << " K=" << kernels << " k=" << kernel_size << " stride=" << stride
     << " padding=" << padding << " groups=" << groups << " r=" << r_buf
     << " bias=" << (bias ? 1 : 0);
  return os.str();
}

namespace {

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ValueError("layer config: field '" + key + "' is not an unsigned integer: '" + v + "'");
  }
  return out;
}

}  // namespace

LayerConfig LayerConfig::parse(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream is{std::string(text)};
  std::string token;
  while (is >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ValueError("layer config: expected key=value, got '" + token + "'");
    }
    std::string key = token.substr(0, eq);
    if (!kv.emplace(key, token.substr(eq + 1)).second) {
      throw ValueError("layer config: duplicate field '" + key + "'");
    }
  }
  LayerConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "variant") c.variant = parse_variant(value);
    else if (key == "c_in") c.c_in = parse_size(key, value);
    else if (key == "c_out") c.c_out = parse_size(key, value);
    else if (key == "K") c.kernels = parse_size(key, value);
    else if (key == "k") c.kernel_size = parse_size(key, value);
    else if (key == "stride") c.stride = parse_size(key, value);
    else if (key == "padding") c.padding = parse_size(key, value);
    else if (key == "groups") c.groups = parse_size(key, value);
    else if (key == "r") {
      try {
        std::size_t used = 0;
        c.reduction = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ValueError("layer config: field 'r' is not a number: '" + value + "'");
      }
    } else if (key == "bias") {
      if (value != "0" && value != "1") throw ValueError("layer config: bias must be 0 or 1");
      c.bias = value == "1";
    } else {
      throw ValueError("layer config: unknown field '" + key + "'");
    }
  }
  c.validate();
  return c;
}

}  // namespace fmdconv
