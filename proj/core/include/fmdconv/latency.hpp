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

#ifndef FMDCONV_LATENCY_HPP_
#define FMDCONV_LATENCY_HPP_

#include <span>
#include <vector>

#include "fmdconv/dynconv.hpp"

namespace fmdconv {

struct LatencyStats {
  std::vector<double> samples_s;  // in measurement order
  double median_s = 0.0;
  double min_s = 0.0;
};

double median(std::vector<double> v);

/// Evaluation-mode forward latency of each layer on the same input. Runs are
/// interleaved (A B C A B C ...) after `warmup` untimed rounds so slow drift
/// affects every layer alike.
std::vector<LatencyStats> measure_forward_latency(std::span<const ConvLayer* const> layers, const Tensor& x,
                                                  std::size_t repeat, std::size_t warmup = 1,
                                                  double temperature = 1.0);

}  // namespace fmdconv

#endif  // FMDCONV_LATENCY_HPP_
