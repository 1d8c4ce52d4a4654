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

#ifndef FMDCONV_TRAIN_HPP_
#define FMDCONV_TRAIN_HPP_

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fmdconv/dataset.hpp"
#include "fmdconv/metrics.hpp"
#include "fmdconv/model.hpp"
#include "fmdconv/schedule.hpp"

namespace fmdconv {

struct TopK {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

/// Counts rows whose label is among the k largest logits. Equal logits rank
/// the lower class index first. Requires 1 <= k <= classes.
TopK topk_from_logits(const Tensor& logits, std::span<const int> labels, std::size_t k);

TopK evaluate_topk(const Model& model, const Dataset& data, std::size_t k, double temperature = 1.0,
                   std::size_t batch_size = 128);

/// p <- p - lr * (g + weight_decay * p) for every parameter with a gradient.
void sgd_step(std::span<Parameter* const> params, const Tape& tape, double lr, double weight_decay);

class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(std::size_t epoch, const std::string& what)
      : std::runtime_error("training aborted at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

struct EpochSummary {
  EpochRecord record;
  double train_loss = 0.0;
  double temperature = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> records;
  std::vector<EpochSummary> epochs;
  TopK final_top1;
  TopK final_top5;
  double final_temperature = 1.0;
};

using EpochCallback = std::function<void(const EpochSummary&)>;

/// Minibatch SGD following the schedules in config. Epoch wall time covers
/// the training pass only; test top-1 is evaluated after it at the epoch's
/// temperature. Throws TrainingAborted on a non-finite loss.
TrainResult train(Model& model, const Dataset& train_set, const Dataset& test_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace fmdconv

#endif  // FMDCONV_TRAIN_HPP_
