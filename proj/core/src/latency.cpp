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

#include "fmdconv/latency.hpp"

#include <algorithm>

#include "fmdconv/metrics.hpp"

namespace fmdconv {

double median(std::vector<double> v) {
  if (v.empty()) throw ValueError("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<LatencyStats> measure_forward_latency(std::span<const ConvLayer* const> layers, const Tensor& x,
                                                  std::size_t repeat, std::size_t warmup, double temperature) {
  if (layers.empty()) throw ValueError("measure_forward_latency: no layers");
  if (repeat == 0) throw ValueError("measure_forward_latency: repeat must be positive");
  for (std::size_t w = 0; w < warmup; ++w) {
    for (const ConvLayer* l : layers) (void)l->forward(x, temperature);
  }
  std::vector<LatencyStats> stats(layers.size());
  for (std::size_t r = 0; r < repeat; ++r) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto [y, s] = timed_run([&] { return layers[i]->forward(x, temperature); });
      stats[i].samples_s.push_back(s);
    }
  }
  for (LatencyStats& s : stats) {
    s.median_s = median(s.samples_s);
    s.min_s = *std::min_element(s.samples_s.begin(), s.samples_s.end());
  }
  return stats;
}

}  // namespace fmdconv
