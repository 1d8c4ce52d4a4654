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

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "fmdconv/attention.hpp"
#include "fmdconv/ops.hpp"
#include "fmdconv/rng.hpp"
#include "test_util.hpp"

namespace fmdconv {
namespace {

using testing::numeric_gradient;
using testing::random_tensor;
using testing::rel_error;

// Step-by-step head evaluation with plain loops.
Tensor oracle_head(const AttentionHead& head_const, const Tensor& x, double temperature, bool sigmoid_act) {
  auto& head = const_cast<AttentionHead&>(head_const);
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  const std::size_t hd = head.hidden_dim(), od = head.out_dim();
  const Tensor& w1 = head.fc1_weight().value;
  const Tensor& b1 = head.fc1_bias().value;
  const Tensor& w2 = head.fc2_weight().value;
  const Tensor& b2 = head.fc2_bias().value;
  Tensor out(Shape{n, od});
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> pooled(c, 0.0), hidden(hd, 0.0), z(od, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < plane; ++i) pooled[ch] += x[(s * c + ch) * plane + i];
      pooled[ch] /= static_cast<double>(plane);
    }
    for (std::size_t j = 0; j < hd; ++j) {
      double a = b1[j];
      for (std::size_t ch = 0; ch < c; ++ch) a += w1.at({j, ch}) * pooled[ch];
      hidden[j] = std::max(a, 0.0);
    }
    for (std::size_t o = 0; o < od; ++o) {
      double a = b2[o];
      for (std::size_t j = 0; j < hd; ++j) a += w2.at({o, j}) * hidden[j];
      z[o] = a;
    }
    if (sigmoid_act) {
      for (std::size_t o = 0; o < od; ++o) out.at({s, o}) = 1.0 / (1.0 + std::exp(-z[o]));
    } else {
      double m = *std::max_element(z.begin(), z.end()), total = 0.0;
      for (double v : z) total += std::exp((v - m) / temperature);
      for (std::size_t o = 0; o < od; ++o) out.at({s, o}) = std::exp((z[o] - m) / temperature) / total;
    }
  }
  return out;
}

void randomize_biases(AttentionHead& head, std::mt19937_64& gen) {
  for (Parameter* p : head.parameters())
    if (p->value.rank() == 1) p->value = random_tensor(p->value.shape(), gen, -0.5, 0.5);
}

TEST(HiddenDim, FloorWithClamp) {
  EXPECT_EQ(hidden_dim_for(8, 0.0625), 1u);
  EXPECT_EQ(hidden_dim_for(64, 0.0625), 4u);
  EXPECT_EQ(hidden_dim_for(30, 0.1), 3u);
  EXPECT_EQ(hidden_dim_for(10, 1.0), 10u);
  EXPECT_EQ(hidden_dim_for(1, 0.01), 1u);
  EXPECT_THROW(hidden_dim_for(8, 0.0), ValueError);
  EXPECT_THROW(hidden_dim_for(8, 1.5), ValueError);
  EXPECT_THROW(hidden_dim_for(8, -0.1), ValueError);
}

TEST(AttentionHead, ShapesAndInitialization) {
  Rng rng(1);
  AttentionHead h("h", 16, 6, 0.25, HeadActivation::Sigmoid, rng);
  EXPECT_EQ(h.in_dim(), 16u);
  EXPECT_EQ(h.hidden_dim(), 4u);
  EXPECT_EQ(h.out_dim(), 6u);
  EXPECT_EQ(h.fc1_weight().value.shape(), (Shape{4, 16}));
  EXPECT_EQ(h.fc2_weight().value.shape(), (Shape{6, 4}));
  EXPECT_EQ(h.parameter_count(), 4u * 16 + 4 + 6 * 4 + 6);
  for (double v : h.fc1_bias().value.values()) EXPECT_EQ(v, 0.0);
  for (double v : h.fc2_bias().value.values()) EXPECT_EQ(v, 0.0);
  const double bound = std::sqrt(6.0 / 16.0);
  bool nonzero = false;
  for (double v : h.fc1_weight().value.values()) {
    EXPECT_LE(std::abs(v), bound);
    nonzero = nonzero || v != 0.0;
  }
  EXPECT_TRUE(nonzero);
  EXPECT_EQ(h.fc1_weight().name, "h.fc1.weight");
  EXPECT_EQ(h.fc2_bias().name, "h.fc2.bias");
}

TEST(AttentionHead, MultiBranchNaming) {
  Rng rng(2);
  AttentionHead h("od", 8, 0.5,
                  {{8, HeadActivation::Sigmoid}, {4, HeadActivation::Sigmoid}, {9, HeadActivation::Sigmoid},
                   {3, HeadActivation::TemperatureSoftmax}},
                  rng);
  EXPECT_EQ(h.branch_count(), 4u);
  EXPECT_EQ(h.fc2_weight(3).name, "od.fc2_3.weight");
  EXPECT_EQ(h.out_dim(2), 9u);
  Tape t;
  EXPECT_THROW(h.forward(t, t.input(Tensor(Shape{1, 8})), {}), std::logic_error);
  auto outs = h.evaluate_all(Tensor(Shape{2, 8}, 0.3), 1.0);
  ASSERT_EQ(outs.size(), 4u);
  EXPECT_EQ(outs[3].shape(), (Shape{2, 3}));
}

TEST(AttentionHead, ConstructorRejectsBadDims) {
  Rng rng(3);
  EXPECT_THROW(AttentionHead("h", 0, 2, 0.5, HeadActivation::Sigmoid, rng), ShapeError);
  EXPECT_THROW(AttentionHead("h", 4, 0, 0.5, HeadActivation::Sigmoid, rng), ShapeError);
  EXPECT_THROW(AttentionHead("h", 4, 2, 0.0, HeadActivation::Sigmoid, rng), ValueError);
}

TEST(InputAttention, ZeroHeadGivesHalf) {
  Rng rng(4);
  AttentionHead h("in", 5, 5, 0.5, HeadActivation::Sigmoid, rng);
  h.zero();
  std::mt19937_64 gen(4);
  Tensor a = input_attention(h, random_tensor(Shape{3, 5, 4, 4}, gen, -10, 10));
  EXPECT_EQ(a.shape(), (Shape{3, 5}));
  for (double v : a.values()) EXPECT_EQ(v, 0.5);
}

TEST(InputAttention, IdenticalSamplesIdenticalRows) {
  Rng rng(5);
  AttentionHead h("in", 3, 3, 1.0, HeadActivation::Sigmoid, rng);
  std::mt19937_64 gen(5);
  Tensor one = random_tensor(Shape{1, 3, 4, 4}, gen);
  Tensor x(Shape{2, 3, 4, 4});
  for (std::size_t i = 0; i < one.numel(); ++i) x[i] = x[i + one.numel()] = one[i];
  Tensor a = input_attention(h, x);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(a.at({0, c}), a.at({1, c}));
}

TEST(InputAttention, MatchesCompositionalOracle) {
  Rng rng(6);
  AttentionHead h("in", 6, 6, 0.5, HeadActivation::Sigmoid, rng);
  std::mt19937_64 gen(6);
  randomize_biases(h, gen);
  Tensor x = random_tensor(Shape{3, 6, 5, 5}, gen);
  Tensor a = input_attention(h, x);
  EXPECT_LE(max_abs_diff(a, oracle_head(h, x, 1.0, true)), 1e-12);
  for (double v : a.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(InputAttention, ChecksChannelsAndActivation) {
  Rng rng(7);
  AttentionHead h("in", 4, 4, 0.5, HeadActivation::Sigmoid, rng);
  EXPECT_THROW(input_attention(h, Tensor(Shape{1, 3, 2, 2})), ShapeError);
  EXPECT_THROW(input_attention(h, Tensor(Shape{1, 4})), ShapeError);
  AttentionHead wrong_out("in", 4, 5, 0.5, HeadActivation::Sigmoid, rng);
  EXPECT_THROW(input_attention(wrong_out, Tensor(Shape{1, 4, 2, 2})), ShapeError);
  AttentionHead soft("in", 4, 4, 0.5, HeadActivation::TemperatureSoftmax, rng);
  EXPECT_THROW(input_attention(soft, Tensor(Shape{1, 4, 2, 2})), std::logic_error);
}

TEST(OutputAttention, ZeroHeadAndOracle) {
  Rng rng(8);
  AttentionHead h("out", 4, 7, 0.5, HeadActivation::Sigmoid, rng);
  std::mt19937_64 gen(8);
  Tensor x = random_tensor(Shape{2, 4, 3, 3}, gen);
  randomize_biases(h, gen);
  Tensor a = output_attention(h, x);
  EXPECT_EQ(a.shape(), (Shape{2, 7}));
  EXPECT_LE(max_abs_diff(a, oracle_head(h, x, 1.0, true)), 1e-12);
  Tensor scaled = x;
  EXPECT_EQ(output_attention(h, scaled), a);
  h.zero();
  for (const Tensor tmp = output_attention(h, x); double v : tmp.values()) EXPECT_EQ(v, 0.5);
  EXPECT_THROW(output_attention(h, Tensor(Shape{1, 5, 2, 2})), ShapeError);
}

TEST(KernelAttention, ZeroHeadIsUniformForAnyTemperature) {
  Rng rng(9);
  AttentionHead h("k", 4, 5, 0.5, HeadActivation::TemperatureSoftmax, rng);
  h.zero();
  std::mt19937_64 gen(9);
  Tensor x = random_tensor(Shape{3, 4, 3, 3}, gen);
  for (double temp : {1.0, 2.0, 40.0}) {
    for (const Tensor tmp = kernel_attention(h, x, temp); double v : tmp.values()) EXPECT_NEAR(v, 0.2, 1e-15);
  }
}

TEST(KernelAttention, HugeTemperatureApproachesUniform) {
  Rng rng(10);
  AttentionHead h("k", 4, 4, 1.0, HeadActivation::TemperatureSoftmax, rng);
  std::mt19937_64 gen(10);
  Tensor x = random_tensor(Shape{2, 4, 3, 3}, gen);
  for (const Tensor tmp = kernel_attention(h, x, 1e6); double v : tmp.values()) EXPECT_NEAR(v, 0.25, 1e-6);
}

TEST(KernelAttention, TwoLogitsAtForty) {
  // One input channel, hidden 1: fc1 = 1 passes the pooled value through
  // relu, fc2 maps it to logits [1, 0] for a pooled value of 1.
  Rng rng(11);
  AttentionHead h("k", 1, 2, 1.0, HeadActivation::TemperatureSoftmax, rng);
  h.zero();
  h.fc1_weight().value[0] = 1.0;
  h.fc2_weight().value[0] = 1.0;
  Tensor a = kernel_attention(h, Tensor(Shape{1, 1, 2, 2}, 1.0), 40.0);
  EXPECT_NEAR(a[0], 0.50625, 5e-6);
  EXPECT_NEAR(a[1], 0.49375, 5e-6);
}

TEST(KernelAttention, MatchesOracleAndRowsSumToOne) {
  Rng rng(12);
  AttentionHead h("k", 8, 4, 0.5, HeadActivation::TemperatureSoftmax, rng);
  std::mt19937_64 gen(12);
  randomize_biases(h, gen);
  Tensor x = random_tensor(Shape{4, 8, 3, 3}, gen);
  for (double temp : {1.0, 5.0, 40.0}) {
    Tensor a = kernel_attention(h, x, temp);
    EXPECT_LE(max_abs_diff(a, oracle_head(h, x, temp, false)), 1e-12);
    for (std::size_t n = 0; n < 4; ++n) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a.at({n, k});
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(KernelAttention, RejectsBadTemperatureAndSigmoidHead) {
  Rng rng(13);
  AttentionHead h("k", 2, 2, 1.0, HeadActivation::TemperatureSoftmax, rng);
  Tensor x(Shape{1, 2, 2, 2}, 1.0);
  EXPECT_THROW(kernel_attention(h, x, 0.0), ValueError);
  EXPECT_THROW(kernel_attention(h, x, -3.0), ValueError);
  AttentionHead sig("k", 2, 2, 1.0, HeadActivation::Sigmoid, rng);
  EXPECT_THROW(kernel_attention(sig, x, 1.0), std::logic_error);
}

TEST(KernelAttention, FortyDegreeUniformityBound) {
  std::mt19937_64 gen(14);
  for (std::size_t k : {2u, 4u, 8u}) {
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
      Tensor z = random_tensor(Shape{1, k}, gen, -1.0, 1.0);
      Tensor p = softmax_temperature(z, 40.0);
      for (double v : p.values()) worst = std::max(worst, std::abs(v - 1.0 / static_cast<double>(k)));
    }
    EXPECT_LT(worst, 0.013) << "K=" << k;
  }
}

TEST(KernelAttention, SharpensAsTemperatureFalls) {
  Rng rng(15);
  AttentionHead h("k", 4, 4, 1.0, HeadActivation::TemperatureSoftmax, rng);
  std::mt19937_64 gen(15);
  randomize_biases(h, gen);
  Tensor x = random_tensor(Shape{3, 4, 3, 3}, gen);
  for (std::size_t n = 0; n < 3; ++n) {
    double prev = 0.0;
    for (double temp = 40.0; temp >= 1.0; temp -= 3.0) {
      Tensor a = kernel_attention(h, x, temp);
      double mx = 0.0;
      for (std::size_t k = 0; k < 4; ++k) mx = std::max(mx, a.at({n, k}));
      EXPECT_GE(mx, prev - 1e-15);
      prev = mx;
    }
  }
}

TEST(Attention, BatchPermutationPermutesRows) {
  Rng rng(16);
  AttentionHead h("k", 3, 4, 1.0, HeadActivation::TemperatureSoftmax, rng);
  std::mt19937_64 gen(16);
  Tensor x = random_tensor(Shape{3, 3, 2, 2}, gen);
  const std::vector<std::size_t> perm{2, 0, 1};
  Tensor xp(x.shape());
  const std::size_t per = 12;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < per; ++j) xp[i * per + j] = x[perm[i] * per + j];
  Tensor a = kernel_attention(h, x, 3.0), ap = kernel_attention(h, xp, 3.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(ap.at({i, k}), a.at({perm[i], k}));
}

TEST(Attention, TapeMatchesEvaluationPath) {
  Rng rng(17);
  AttentionHead in("in", 4, 4, 0.5, HeadActivation::Sigmoid, rng);
  AttentionHead ker("k", 4, 3, 0.5, HeadActivation::TemperatureSoftmax, rng);
  std::mt19937_64 gen(17);
  Tensor x = random_tensor(Shape{2, 4, 3, 3}, gen);
  Tape t;
  Var xv = t.input(x);
  ForwardOptions o;
  o.temperature = 7.0;
  EXPECT_EQ(t.value(input_attention(t, in, xv, o)), input_attention(in, x));
  EXPECT_EQ(t.value(kernel_attention(t, ker, xv, o)), kernel_attention(ker, x, 7.0));
}

// Gradient of sum(weights * attention) with respect to every head parameter
// and the input, against central differences.
void check_head_gradients(AttentionHead& head, int kind, double temp, std::mt19937_64& gen) {
  Tensor x = random_tensor(Shape{2, head.in_dim(), 3, 3}, gen);
  randomize_biases(head, gen);
  Tensor weights = random_tensor(Shape{2, head.out_dim()}, gen);
  auto eval = [&](Tape& t, Var xv) {
    ForwardOptions o;
    o.temperature = temp;
    Var a = kind == 0 ? input_attention(t, head, xv, o)
                      : kind == 1 ? output_attention(t, head, xv, o) : kernel_attention(t, head, xv, o);
    return weighted_sum(t, a, weights);
  };
  Tape t;
  Var xv = t.input(x);
  t.backward(eval(t, xv));
  auto loss = [&] {
    Tape t2;
    return t2.value(eval(t2, t2.input(x)))[0];
  };
  EXPECT_LE(rel_error(t.grad(xv), numeric_gradient(loss, &x)), 1e-6);
  for (Parameter* p : head.parameters()) {
    Tensor analytic = t.gradient_of(*p);
    EXPECT_LE(rel_error(analytic, numeric_gradient(loss, &p->value)), 1e-6) << p->name;
  }
}

TEST(Attention, AllHeadsDifferentiable) {
  std::mt19937_64 gen(18);
  Rng rng(18);
  AttentionHead in("in", 4, 4, 0.5, HeadActivation::Sigmoid, rng);
  AttentionHead out("out", 4, 6, 0.5, HeadActivation::Sigmoid, rng);
  AttentionHead ker("k", 4, 3, 0.5, HeadActivation::TemperatureSoftmax, rng);
  check_head_gradients(in, 0, 1.0, gen);
  check_head_gradients(out, 1, 1.0, gen);
  check_head_gradients(ker, 2, 1.0, gen);
  check_head_gradients(ker, 2, 40.0, gen);
}

TEST(Attention, DropoutOnlyInTraining) {
  Rng rng(19);
  AttentionHead h("in", 8, 8, 1.0, HeadActivation::Sigmoid, rng);
  std::mt19937_64 gen(19);
  Tensor x = random_tensor(Shape{2, 8, 2, 2}, gen);
  Tape t;
  Var xv = t.input(x);
  ForwardOptions eval;
  eval.dropout = 0.5;
  EXPECT_EQ(t.value(input_attention(t, h, xv, eval)), input_attention(h, x));
  ForwardOptions train = eval;
  train.training = true;
  EXPECT_THROW(input_attention(t, h, xv, train), std::logic_error);
  Rng drop(1);
  train.rng = &drop;
  EXPECT_NE(t.value(input_attention(t, h, xv, train)), input_attention(h, x));
}

}  // namespace
}  // namespace fmdconv
