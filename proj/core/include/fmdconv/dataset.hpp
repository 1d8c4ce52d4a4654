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

#ifndef FMDCONV_DATASET_HPP_
#define FMDCONV_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fmdconv/tensor.hpp"

namespace fmdconv {

struct Dataset {
  Tensor images;           // [M, C, H, W]
  std::vector<int> labels; // length M, each in [0, class_count)
  std::size_t class_count = 0;
  std::string split = "train";

  std::size_t size() const { return labels.size(); }
  /// Throws ShapeError / ValueError if images and labels disagree.
  void validate() const;
  /// Stacks the listed samples into [n, C, H, W] plus their labels.
  std::pair<Tensor, std::vector<int>> batch(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> histogram() const;
};

/// Procedural images: one oriented bar per image, angle pi * c / classes plus
/// a small jitter, random offset and Gaussian pixel noise. Sample i has label
/// i % classes, so every class gets exactly per_class samples. Bit-identical
/// for equal arguments.
Dataset make_synthetic_dataset(std::uint64_t seed, std::size_t classes, std::size_t per_class, std::size_t c,
                               std::size_t h, std::size_t w);

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

/// Train and test sets drawn from independent streams derived from seed.
DatasetSplit make_synthetic_split(std::uint64_t seed, std::size_t classes, std::size_t train_per_class,
                                  std::size_t test_per_class, std::size_t c, std::size_t h, std::size_t w);

// Binary layout, little-endian throughout:
//   char[4]  magic "FMDS"
//   uint32   M, C, H, W, class_count
//   uint8    labels[M]
//   float32  pixels[M * C * H * W]   (sample-major, then channel, row, column)
void write_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path, const std::string& split = "train");

}  // namespace fmdconv

#endif  // FMDCONV_DATASET_HPP_
