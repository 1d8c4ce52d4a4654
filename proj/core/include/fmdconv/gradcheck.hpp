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

#ifndef FMDCONV_GRADCHECK_HPP_
#define FMDCONV_GRADCHECK_HPP_

#include <functional>
#include <span>
#include <vector>

#include "fmdconv/tensor.hpp"

namespace fmdconv {

using LossFn = std::function<double(std::span<const Tensor>)>;

/// Central differences (f(p + eps) - f(p - eps)) / (2 eps), one coordinate
/// at a time. Independent of the tape; used as the oracle for every
/// analytic backward pass.
std::vector<Tensor> finite_diff_gradient(const LossFn& loss, std::vector<Tensor> params,
                                         double eps = 1e-5);

/// max|a - b| / max(max|a|, max|b|, floor).
double relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-8);

}  // namespace fmdconv

#endif  // FMDCONV_GRADCHECK_HPP_
