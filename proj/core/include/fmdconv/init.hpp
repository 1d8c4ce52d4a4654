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

#ifndef FMDCONV_INIT_HPP_
#define FMDCONV_INIT_HPP_

#include <cmath>
#include <cstddef>

#include "fmdconv/rng.hpp"
#include "fmdconv/tensor.hpp"

namespace fmdconv {

// Kaiming (He) uniform, fan-in mode, ReLU gain: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
inline void kaiming_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
}

}  // namespace fmdconv

#endif  // FMDCONV_INIT_HPP_
