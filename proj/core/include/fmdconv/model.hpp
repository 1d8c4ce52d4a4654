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

#ifndef FMDCONV_MODEL_HPP_
#define FMDCONV_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "fmdconv/dynconv.hpp"
#include "fmdconv/model_spec.hpp"

namespace fmdconv {

/// Trainable network built from a ModelSpec. Supports conv, batch norm, ReLU,
/// average pooling, GAP and dense layers on a single path. Batch norm uses
/// batch statistics when training and running statistics otherwise.
class Model {
 public:
  Model(const ModelSpec& spec, std::uint64_t seed);

  Var forward(Tape& tape, Var x, const ForwardOptions& opts) const;
  /// Evaluation-mode logits [N, classes].
  Tensor logits(const Tensor& x, double temperature = 1.0) const;

  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> parameters();
  std::size_t parameter_count() const;

  const ModelSpec& spec() const { return spec_; }
  std::size_t class_count() const;
  std::vector<ConvLayer*> conv_layers();

  static constexpr double kBatchNormEps = 1e-5;
  static constexpr double kBatchNormMomentum = 0.1;

  /// Weights dump, little-endian:
  ///   char[4] "FMDW", uint32 count, then per parameter:
  ///   uint32 name length, name bytes, uint32 rank, uint32 dims[rank], float64 values.
  /// Batch-norm running statistics follow the parameters in the same format.
  void save(const std::filesystem::path& path) const;
  /// Loads a dump written by save(); names and shapes must match exactly.
  void load(const std::filesystem::path& path);

 private:
  struct Node {
    const LayerSpec* spec;
    std::unique_ptr<ConvLayer> conv;
    Parameter weight;  // dense weight or batch-norm scale
    Parameter bias;    // dense bias or batch-norm shift
    mutable Parameter running_mean;
    mutable Parameter running_var;
  };
  std::vector<const Parameter*> stored_tensors() const;
  ModelSpec spec_;
  std::vector<Node> nodes_;
};

/// Copies spec, switches every convolution to variant / K / r (static forces
/// K = 1), sets the classifier width to class_count and builds the model.
Model build_model(const ModelSpec& spec, ConvVariant variant, std::size_t kernels, double reduction,
                  std::size_t class_count, std::uint64_t seed);

/// Spec after the same substitutions build_model applies.
ModelSpec respec(const ModelSpec& spec, ConvVariant variant, std::size_t kernels, double reduction,
                 std::size_t class_count);

}  // namespace fmdconv

#endif  // FMDCONV_MODEL_HPP_
