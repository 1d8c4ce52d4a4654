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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>

#include <unistd.h>

#include "fmdconv/catalog.hpp"
#include "fmdconv/model.hpp"
#include "fmdconv/tensor.hpp"
#include "test_util.hpp"

namespace fmdconv {
namespace {

using testing::random_tensor;

CatalogOptions small_options(ConvVariant v, std::size_t K) {
  CatalogOptions o;
  o.variant = v;
  o.kernels = K;
  o.reduction = 0.1;
  o.classes = 4;
  o.in_c = 1;
  o.in_h = 16;
  o.in_w = 16;
  return o;
}

std::filesystem::path temp_path(const std::string& tag) {
  return std::filesystem::temp_directory_path() /
         ("fmdconv_model_" + tag + "_" + std::to_string(::getpid()) + ".bin");
}

constexpr ConvVariant kAll[] = {ConvVariant::Static, ConvVariant::CondConv, ConvVariant::DynamicConv,
                                ConvVariant::ODConv, ConvVariant::FMDConv};

TEST(Model, ParameterCountMatchesSpecCount) {
  for (ConvVariant v : kAll) {
    for (std::size_t K : {1u, 2u, 4u}) {
      if (v == ConvVariant::Static && K != 1) continue;
      const ModelSpec spec = tiny_cnn_spec(small_options(v, K));
      const Model m(spec, 3);
      EXPECT_EQ(m.parameter_count(), count_params(spec)) << to_string(v) << " K=" << K;
    }
  }
}

TEST(Model, LogitShape) {
  std::mt19937_64 gen(1);
  for (ConvVariant v : kAll) {
    const Model m(tiny_cnn_spec(small_options(v, 2)), 5);
    EXPECT_EQ(m.class_count(), 4u);
    const Tensor out = m.logits(random_tensor({3, 1, 16, 16}, gen, -1.0, 1.0));
    EXPECT_EQ(out.shape(), (Shape{3, 4}));
    EXPECT_TRUE(out.all_finite());
  }
}

TEST(Model, RejectsWrongInputShape) {
  const Model m(tiny_cnn_spec(small_options(ConvVariant::FMDConv, 2)), 1);
  EXPECT_THROW(m.logits(Tensor(Shape{2, 1, 8, 8})), ShapeError);
  EXPECT_THROW(m.logits(Tensor(Shape{2, 3, 16, 16})), ShapeError);
  EXPECT_THROW(m.logits(Tensor(Shape{1, 16, 16})), ShapeError);
}

TEST(Model, KernelDeltaFromOneToFour) {
  const ModelSpec base = tiny_cnn_spec(small_options(ConvVariant::FMDConv, 4));
  const Model m1 = build_model(base, ConvVariant::FMDConv, 1, 0.1, 4, 0);
  const Model m4 = build_model(base, ConvVariant::FMDConv, 4, 0.1, 4, 0);
  std::size_t expected = 0;
  for (const LayerSpec& l : base.layers) {
    if (l.kind != LayerKind::Conv) continue;
    const LayerConfig& c = l.conv;
    const std::size_t kw = c.c_out * (c.c_in / c.groups) * c.kernel_size * c.kernel_size;
    const std::size_t h = hidden_dim_for(c.c_in, 0.1);
    expected += 3 * (kw + c.c_out + h + 1);
  }
  EXPECT_EQ(m4.parameter_count() - m1.parameter_count(), expected);
}

TEST(Model, BuildModelStaticForcesSingleKernel) {
  const ModelSpec base = tiny_cnn_spec(small_options(ConvVariant::FMDConv, 4));
  const ModelSpec s = respec(base, ConvVariant::Static, 8, 0.25, 7);
  for (const LayerSpec& l : s.layers) {
    if (l.kind == LayerKind::Conv) {
      EXPECT_EQ(l.conv.variant, ConvVariant::Static);
      EXPECT_EQ(l.conv.kernels, 1u);
    }
  }
  EXPECT_EQ(s.layers.back().out_features, 7u);
  EXPECT_EQ(build_model(base, ConvVariant::Static, 8, 0.25, 7, 0).class_count(), 7u);
  EXPECT_THROW(respec(base, ConvVariant::FMDConv, 4, 0.1, 0), ValueError);
}

TEST(Model, SameSeedSameWeights) {
  const ModelSpec spec = tiny_cnn_spec(small_options(ConvVariant::ODConv, 2));
  const Model a(spec, 11), b(spec, 11), c(spec, 12);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    EXPECT_TRUE(pa[i]->value == pb[i]->value) << pa[i]->name;
    if (!(pa[i]->value == pc[i]->value)) any_diff = true;
  }
  EXPECT_TRUE(any_diff);
}

TEST(Model, ParameterNamesUnique) {
  const Model m(tiny_cnn_spec(small_options(ConvVariant::FMDConv, 4)), 0);
  std::set<std::string> names;
  for (const Parameter* p : m.parameters()) EXPECT_TRUE(names.insert(p->name).second) << p->name;
}

TEST(Model, RejectsUnsupportedSpecs) {
  ModelSpec with_pool = tiny_cnn_spec(small_options(ConvVariant::Static, 1));
  with_pool.layers[3] = LayerSpec::make_maxpool("pool", 2, 2, 0);
  EXPECT_THROW(Model(with_pool, 0), ValueError);

  CatalogOptions ro;
  ro.variant = ConvVariant::Static;
  ro.kernels = 1;
  ro.classes = 4;
  EXPECT_THROW(Model(resnet18_spec(ro), 0), ValueError);

  ModelSpec no_dense = tiny_cnn_spec(small_options(ConvVariant::Static, 1));
  no_dense.layers.pop_back();
  EXPECT_THROW(Model(no_dense, 0), ValueError);
}

TEST(Model, BatchNormRunningStatsOnlyUpdateInTraining) {
  Model m(tiny_cnn_spec(small_options(ConvVariant::FMDConv, 2)), 4);
  std::mt19937_64 gen(9);
  const Tensor x = random_tensor({4, 1, 16, 16}, gen, 0.0, 2.0);
  const std::filesystem::path p0 = temp_path("bn0");
  m.save(p0);
  const Tensor before = m.logits(x);
  const Tensor again = m.logits(x);
  EXPECT_TRUE(before == again);

  ForwardOptions opts;
  opts.training = true;
  Tape tape;
  m.forward(tape, tape.constant(x), opts);
  const Tensor after = m.logits(x);
  EXPECT_FALSE(before == after);

  Model fresh(tiny_cnn_spec(small_options(ConvVariant::FMDConv, 2)), 4);
  fresh.load(p0);
  EXPECT_TRUE(fresh.logits(x) == before);
  std::filesystem::remove(p0);
}

TEST(Model, TrainingBatchNormNormalizesFirstLayer) {
  // Reconstruct the first block by hand: conv, then per-channel standardization.
  const ModelSpec spec = tiny_cnn_spec(small_options(ConvVariant::Static, 1));
  ModelSpec head = spec;
  head.layers.resize(2);  // conv, batch norm
  head.layers.push_back(LayerSpec::make_gap("gap"));
  head.layers.push_back(LayerSpec::make_dense("fc", spec.layers[0].conv.c_out, 2));
  const Model m(head, 2);
  std::mt19937_64 gen(4);
  const Tensor x = random_tensor({5, 1, 16, 16}, gen, -1.0, 1.0);
  ForwardOptions opts;
  opts.training = true;
  Tape tape;
  const Var out = m.forward(tape, tape.constant(x), opts);
  // With unit scale and zero shift every channel has zero batch mean, so
  // the batch mean of GAP features is zero and the logits mean equals the bias (zero).
  const Tensor& lv = tape.value(out);
  for (std::size_t j = 0; j < 2; ++j) {
    double s = 0.0;
    for (std::size_t n = 0; n < 5; ++n) s += lv.at({n, j});
    EXPECT_NEAR(s / 5.0, 0.0, 1e-10);
  }
}

TEST(Model, SaveLoadRoundTrip) {
  const ModelSpec spec = tiny_cnn_spec(small_options(ConvVariant::FMDConv, 4));
  const Model a(spec, 21);
  Model b(spec, 22);
  std::mt19937_64 gen(2);
  const Tensor x = random_tensor({2, 1, 16, 16}, gen, -1.0, 1.0);
  EXPECT_FALSE(a.logits(x, 5.0) == b.logits(x, 5.0));
  const std::filesystem::path p = temp_path("rt");
  a.save(p);
  b.load(p);
  EXPECT_TRUE(a.logits(x, 5.0) == b.logits(x, 5.0));
  const auto pa = a.parameters();
  const auto pb = std::as_const(b).parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(pa[i]->value == pb[i]->value);

  std::ifstream is(p, std::ios::binary);
  char magic[4];
  is.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "FMDW");
  std::filesystem::remove(p);
}

TEST(Model, LoadRejectsMismatches) {
  const std::filesystem::path p = temp_path("mm");
  Model(tiny_cnn_spec(small_options(ConvVariant::FMDConv, 4)), 0).save(p);

  Model other_k(tiny_cnn_spec(small_options(ConvVariant::FMDConv, 2)), 0);
  EXPECT_THROW(other_k.load(p), std::runtime_error);
  Model other_variant(tiny_cnn_spec(small_options(ConvVariant::Static, 1)), 0);
  EXPECT_THROW(other_variant.load(p), std::runtime_error);

  {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os << "NOPE0000";
  }
  Model m(tiny_cnn_spec(small_options(ConvVariant::FMDConv, 4)), 0);
  EXPECT_THROW(m.load(p), std::runtime_error);
  std::filesystem::remove(p);
  EXPECT_THROW(m.load(p), std::runtime_error);
}

TEST(Model, LoadRejectsTruncatedFile) {
  const std::filesystem::path p = temp_path("tr");
  Model(tiny_cnn_spec(small_options(ConvVariant::DynamicConv, 2)), 0).save(p);
  const auto size = std::filesystem::file_size(p);
  std::filesystem::resize_file(p, size / 2);
  Model m(tiny_cnn_spec(small_options(ConvVariant::DynamicConv, 2)), 0);
  EXPECT_THROW(m.load(p), std::runtime_error);
  std::filesystem::remove(p);
}

TEST(Model, ConvLayersInOrder) {
  Model m(tiny_cnn_spec(small_options(ConvVariant::ODConv, 2)), 0);
  const auto layers = m.conv_layers();
  ASSERT_EQ(layers.size(), 3u);
  EXPECT_EQ(layers[0]->config().c_out, 8u);
  EXPECT_EQ(layers[1]->config().c_out, 16u);
  EXPECT_EQ(layers[2]->config().c_out, 32u);
}

TEST(Model, TemperatureHasNoEffectOnStatic) {
  const Model m(tiny_cnn_spec(small_options(ConvVariant::Static, 1)), 0);
  std::mt19937_64 gen(3);
  const Tensor x = random_tensor({2, 1, 16, 16}, gen, -1.0, 1.0);
  EXPECT_TRUE(m.logits(x, 1.0) == m.logits(x, 30.0));
}

}  // namespace
}  // namespace fmdconv
