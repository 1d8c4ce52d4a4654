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

#include <gtest/gtest.h>

#include <cmath>
#include <optional>
#include <random>
#include <span>

#include "fmdconv/gradcheck.hpp"
#include "fmdconv/ops.hpp"
#include "test_util.hpp"

namespace fmdconv {
namespace {

TEST(FiniteDiff, SquareAtThree) {
  auto g = finite_diff_gradient([](std::span<const Tensor> p) { return p[0][0] * p[0][0]; },
                                {Tensor(Shape{1}, 3.0)}, 1e-5);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_NEAR(g[0][0], 6.0, 1e-9);
}

TEST(FiniteDiff, ConstantLossGivesZero) {
  auto g = finite_diff_gradient([](std::span<const Tensor>) { return 4.2; },
                                {Tensor(Shape{2, 3}, 1.0), Tensor(Shape{4}, -1.0)});
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].shape(), (Shape{2, 3}));
  EXPECT_EQ(g[1].shape(), Shape{4});
  for (const Tensor& t : g)
    for (double v : t.values()) EXPECT_EQ(v, 0.0);
}

TEST(FiniteDiff, RejectsNonPositiveStep) {
  auto f = [](std::span<const Tensor>) { return 0.0; };
  EXPECT_THROW(finite_diff_gradient(f, {Tensor(Shape{1})}, 0.0), ValueError);
  EXPECT_THROW(finite_diff_gradient(f, {Tensor(Shape{1})}, -1e-5), ValueError);
}

TEST(FiniteDiff, MultiParameterPolynomial) {
  // f(a, b) = sum_i a_i^2 b_i + b_i^3
  auto f = [](std::span<const Tensor> p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p[0].numel(); ++i) s += p[0][i] * p[0][i] * p[1][i] + std::pow(p[1][i], 3);
    return s;
  };
  Tensor a(Shape{3}, std::vector<double>{1, -2, 0.5});
  Tensor b(Shape{3}, std::vector<double>{0.3, 1.1, -0.7});
  auto g = finite_diff_gradient(f, {a, b});
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(g[0][i], 2 * a[i] * b[i], 1e-8);
    EXPECT_NEAR(g[1][i], a[i] * a[i] + 3 * b[i] * b[i], 1e-8);
  }
}

TEST(FiniteDiff, AgreesWithTestOracle) {
  std::mt19937_64 gen(1);
  Tensor x = testing::random_tensor(Shape{1, 2, 4, 4}, gen);
  Tensor w = testing::random_tensor(Shape{3, 2, 3, 3}, gen);
  auto loss = [](std::span<const Tensor> p) {
    Tensor y = conv2d(p[0], p[1], nullptr, {1, 1, 1});
    double s = 0.0;
    for (double v : y.values()) s += v * v;
    return s;
  };
  auto g = finite_diff_gradient(loss, {x, w});
  Tensor wc = w;
  Tensor oracle = testing::numeric_gradient(
      [&] {
        Tensor y = testing::naive_conv2d(x, wc, nullptr, 1, 1, 1);
        double s = 0.0;
        for (double v : y.values()) s += v * v;
        return s;
      },
      &wc);
  EXPECT_LE(relative_error(g[1], oracle), 1e-8);
}

TEST(RelativeError, Definition) {
  Tensor a(Shape{2}, std::vector<double>{1.0, 2.0});
  Tensor b(Shape{2}, std::vector<double>{1.0, 2.2});
  EXPECT_NEAR(relative_error(a, b), 0.2 / 2.2, 1e-15);
  EXPECT_EQ(relative_error(Tensor(Shape{2}, 0.0), Tensor(Shape{2}, 0.0)), 0.0);
  EXPECT_NEAR(relative_error(Tensor(Shape{1}, 0.0), Tensor(Shape{1}, 1e-9), 1e-8), 0.1, 1e-12);
}

}  // namespace
}  // namespace fmdconv
