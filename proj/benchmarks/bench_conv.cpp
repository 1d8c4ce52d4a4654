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

#include <benchmark/benchmark.h>

#include <cstdint>
#include <memory>

#include "fmdconv/dynconv.hpp"
#include "fmdconv/ops.hpp"
#include "fmdconv/rng.hpp"

namespace fmdconv {
namespace {

Tensor random_input(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x(std::move(shape));
  for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
  return x;
}

// args: batch, channels, spatial size
void BM_Conv2d(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto hw = static_cast<std::size_t>(state.range(2));
  Tensor x = random_input(Shape{n, c, hw, hw}, 1);
  Tensor w = random_input(Shape{c, c, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, nullptr, {1, 1, 1}));
  state.counters["flops"] = benchmark::Counter(2.0 * static_cast<double>(n * c * c * 9 * hw * hw),
                                               benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Conv2d)->Args({8, 16, 16})->Args({32, 64, 32})->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto hw = static_cast<std::size_t>(state.range(2));
  Tensor x = random_input(Shape{n, c, hw, hw}, 1);
  Tensor w = random_input(Shape{c, c, 3, 3}, 2);
  Tensor g = random_input(Shape{n, c, hw, hw}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(x, w, false, {1, 1, 1}, g));
}
BENCHMARK(BM_Conv2dBackward)->Args({8, 16, 16})->Unit(benchmark::kMillisecond);

// args: variant index, batch, channels, spatial size, kernels
void BM_LayerForward(benchmark::State& state) {
  constexpr ConvVariant kVariants[] = {ConvVariant::Static, ConvVariant::CondConv, ConvVariant::DynamicConv,
                                       ConvVariant::ODConv, ConvVariant::FMDConv};
  LayerConfig cfg;
  cfg.variant = kVariants[state.range(0)];
  cfg.c_in = cfg.c_out = static_cast<std::size_t>(state.range(2));
  cfg.kernels = cfg.variant == ConvVariant::Static ? 1 : static_cast<std::size_t>(state.range(4));
  cfg.reduction = 0.0625;
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto hw = static_cast<std::size_t>(state.range(3));
  Rng rng(7);
  auto layer = make_layer("bench", cfg, rng);
  Tensor x = random_input(Shape{n, cfg.c_in, hw, hw}, 4);
  state.SetLabel(std::string(to_string(cfg.variant)));
  for (auto _ : state) benchmark::DoNotOptimize(layer->forward(x, 1.0));
}
BENCHMARK(BM_LayerForward)
    ->ArgsProduct({{0, 1, 2, 3, 4}, {8}, {32}, {16}, {4}})
    ->ArgsProduct({{0, 3, 4}, {32}, {64}, {32}, {4}})
    ->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace fmdconv
