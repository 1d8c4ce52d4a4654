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

#include "fmdconv/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "fmdconv/rng.hpp"

namespace fmdconv {

void Dataset::validate() const {
  if (images.rank() != 4) throw ShapeError("dataset images must be [M, C, H, W], got " + shape_to_string(images.shape()));
  if (images.dim(0) != labels.size()) {
    throw ShapeError("dataset has " + std::to_string(images.dim(0)) + " images but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (class_count == 0) throw ValueError("dataset class_count must be positive");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
      throw ValueError("dataset label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                       " outside [0, " + std::to_string(class_count) + ")");
    }
  }
}

std::pair<Tensor, std::vector<int>> Dataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ValueError("empty batch");
  const std::size_t per = images.numel() / images.dim(0);
  Tensor x(Shape{indices.size(), images.dim(1), images.dim(2), images.dim(3)});
  std::vector<int> y;
  y.reserve(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t i = indices[b];
    if (i >= size()) throw ShapeError("batch index " + std::to_string(i) + " out of range");
    std::memcpy(x.data() + b * per, images.data() + i * per, per * sizeof(double));
    y.push_back(labels[i]);
  }
  return {std::move(x), std::move(y)};
}

std::vector<std::size_t> Dataset::histogram() const {
  std::vector<std::size_t> h(class_count, 0);
  for (int l : labels) ++h.at(static_cast<std::size_t>(l));
  return h;
}

Dataset make_synthetic_dataset(std::uint64_t seed, std::size_t classes, std::size_t per_class, std::size_t c,
                               std::size_t h, std::size_t w) {
  if (classes == 0 || per_class == 0 || c == 0 || h == 0 || w == 0) {
    throw ValueError("make_synthetic_dataset: all sizes must be positive");
  }
  const std::size_t m = classes * per_class;
  Rng rng(seed);
  Dataset d;
  d.class_count = classes;
  d.images = Tensor(Shape{m, c, h, w}, 0.0);
  d.labels.resize(m);
  const double pi = std::numbers::pi;
  const double jitter = pi / (4.0 * static_cast<double>(classes));
  const double sigma = 0.12 * static_cast<double>(std::min(h, w));
  const double shift = static_cast<double>(std::min(h, w)) / 8.0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t label = i % classes;
    d.labels[i] = static_cast<int>(label);
    const double theta = pi * static_cast<double>(label) / static_cast<double>(classes) + rng.uniform(-jitter, jitter);
    const double cy = 0.5 * static_cast<double>(h - 1) + rng.uniform(-shift, shift);
    const double cx = 0.5 * static_cast<double>(w - 1) + rng.uniform(-shift, shift);
    const double nx = -std::sin(theta), ny = std::cos(theta);  // unit normal of the bar
    double* img = d.images.data() + i * c * h * w;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double gain = 1.0 - 0.2 * static_cast<double>(ch) / static_cast<double>(c);
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double dist = (static_cast<double>(x) - cx) * nx + (static_cast<double>(y) - cy) * ny;
          const double bar = std::exp(-dist * dist / (2.0 * sigma * sigma));
          img[(ch * h + y) * w + x] = gain * bar + 0.3 * rng.normal();
        }
      }
    }
  }
  return d;
}

DatasetSplit make_synthetic_split(std::uint64_t seed, std::size_t classes, std::size_t train_per_class,
                                  std::size_t test_per_class, std::size_t c, std::size_t h, std::size_t w) {
  DatasetSplit s;
  s.train = make_synthetic_dataset(seed * 2 + 1, classes, train_per_class, c, h, w);
  s.test = make_synthetic_dataset(seed * 2 + 2, classes, test_per_class, c, h, w);
  s.train.split = "train";
  s.test.split = "test";
  return s;
}

namespace {

constexpr char kMagic[4] = {'F', 'M', 'D', 'S'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error(std::string("dataset file: truncated ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint32_t narrow(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw ValueError(std::string("dataset ") + what + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  d.validate();
  if (d.class_count > 256) throw ValueError("dataset file stores labels as bytes; class_count must be <= 256");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os.write(kMagic, 4);
  put_u32(os, narrow(d.images.dim(0), "M"));
  put_u32(os, narrow(d.images.dim(1), "C"));
  put_u32(os, narrow(d.images.dim(2), "H"));
  put_u32(os, narrow(d.images.dim(3), "W"));
  put_u32(os, narrow(d.class_count, "class_count"));
  for (int l : d.labels) os.put(static_cast<char>(static_cast<unsigned char>(l)));
  for (double v : d.images.values()) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!os) throw std::runtime_error("error writing '" + path.string() + "'");
}

Dataset read_dataset(const std::filesystem::path& path, const std::string& split) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset file '" + path.string() + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("'" + path.string() + "' is not a dataset file (bad magic)");
  }
  const std::size_t m = get_u32(is, "M"), c = get_u32(is, "C"), h = get_u32(is, "H"), w = get_u32(is, "W");
  const std::size_t classes = get_u32(is, "class_count");
  if (m == 0 || c == 0 || h == 0 || w == 0 || classes == 0) {
    throw std::runtime_error("dataset file '" + path.string() + "': zero-sized header field");
  }
  Dataset d;
  d.class_count = classes;
  d.split = split;
  d.labels.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const int ch = is.get();
    if (ch == std::char_traits<char>::eof()) throw std::runtime_error("dataset file: truncated labels");
    d.labels[i] = ch;
  }
  d.images = Tensor(Shape{m, c, h, w});
  for (std::size_t i = 0; i < d.images.numel(); ++i) {
    d.images[i] = static_cast<double>(std::bit_cast<float>(get_u32(is, "pixels")));
  }
  d.validate();
  return d;
}

}  // namespace fmdconv
