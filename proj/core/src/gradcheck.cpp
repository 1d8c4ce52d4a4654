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

#include "fmdconv/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace fmdconv {

std::vector<Tensor> finite_diff_gradient(const LossFn& loss, std::vector<Tensor> params,
                                         double eps) {
  if (!(eps > 0.0)) throw ValueError("finite difference step must be positive");
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const Tensor& p : params) grads.emplace_back(p.shape(), 0.0);
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].numel(); ++i) {
      const double orig = params[t][i];
      params[t][i] = orig + eps;
      const double plus = loss(params);
      params[t][i] = orig - eps;
      const double minus = loss(params);
      params[t][i] = orig;
      grads[t][i] = (plus - minus) / (2.0 * eps);
    }
  }
  return grads;
}

double relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
  const double diff = max_abs_diff(analytic, numeric);
  double scale = floor;
  for (std::size_t i = 0; i < analytic.numel(); ++i) {
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return diff / scale;
}

}  // namespace fmdconv
