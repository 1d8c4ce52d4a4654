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

#include "fmdconv/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fmdconv {

TopK topk_from_logits(const Tensor& logits, std::span<const int> labels, std::size_t k) {
  if (logits.rank() != 2) throw ShapeError("topk: logits must be [N, classes], got " + shape_to_string(logits.shape()));
  const std::size_t n = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != n) throw ShapeError("topk: label count does not match logits rows");
  if (k == 0 || k > classes) {
    throw ValueError("topk: k = " + std::to_string(k) + " outside [1, " + std::to_string(classes) + "]");
  }
  TopK r;
  r.total = n;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw ValueError("topk: label out of range");
    const double* row = logits.data() + i * classes;
    const double target = row[y];
    // Rank of the label: classes strictly ahead in the tie-broken order.
    std::size_t ahead = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      if (row[c] > target || (row[c] == target && c < static_cast<std::size_t>(y))) ++ahead;
    }
    if (ahead < k) ++r.correct;
  }
  return r;
}

TopK evaluate_topk(const Model& model, const Dataset& data, std::size_t k, double temperature,
                   std::size_t batch_size) {
  if (batch_size == 0) throw ValueError("evaluate_topk: batch_size must be positive");
  TopK total;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.resize(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    auto [x, y] = data.batch(idx);
    const TopK part = topk_from_logits(model.logits(x, temperature), y, k);
    total.correct += part.correct;
    total.total += part.total;
  }
  return total;
}

void sgd_step(std::span<Parameter* const> params, const Tape& tape, double lr, double weight_decay) {
  for (Parameter* p : params) {
    const Tensor g = tape.gradient_of(*p);
    double* v = p->value.data();
    for (std::size_t i = 0; i < p->value.numel(); ++i) v[i] -= lr * (g[i] + weight_decay * v[i]);
  }
}

TrainResult train(Model& model, const Dataset& train_set, const Dataset& test_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  train_set.validate();
  test_set.validate();
  if (train_set.class_count != model.class_count() || test_set.class_count != model.class_count()) {
    throw ValueError("train: dataset class count does not match the model classifier");
  }
  Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  Rng dropout_rng(config.seed ^ 0xd1b54a32d192ed03ull);
  const auto params = model.parameters();

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto e = static_cast<long long>(epoch);
    EpochSummary s;
    s.temperature = temperature_at(config.temperature, e);
    s.lr = lr_at(config, e);
    ForwardOptions opts;
    opts.temperature = s.temperature;
    opts.training = true;
    opts.dropout = config.dropout;
    opts.rng = &dropout_rng;

    double loss_sum = 0.0;
    std::size_t batches = 0;
    const double seconds = timed_run([&] {
      shuffle_rng.shuffle(std::span<std::size_t>(order));
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t n = std::min(config.batch_size, order.size() - start);
        auto [x, y] = train_set.batch(std::span<const std::size_t>(order).subspan(start, n));
        Tape tape;
        Var loss = cross_entropy(tape, model.forward(tape, tape.constant(x), opts), y);
        const double lv = tape.value(loss)[0];
        if (!std::isfinite(lv)) throw TrainingAborted(epoch, "non-finite training loss");
        tape.backward(loss);
        sgd_step(params, tape, s.lr, config.weight_decay);
        loss_sum += lv;
        ++batches;
      }
    });
    s.train_loss = loss_sum / static_cast<double>(batches);
    const TopK top1 = evaluate_topk(model, test_set, 1, s.temperature);
    s.record = EpochRecord{epoch, std::max(seconds, 1e-9), top1.correct, top1.total};
    result.records.push_back(s.record);
    result.epochs.push_back(s);
    result.final_top1 = top1;
    result.final_temperature = s.temperature;
    if (on_epoch) on_epoch(s);
  }
  if (config.epochs > 0) {
    const std::size_t k5 = std::min<std::size_t>(5, model.class_count());
    result.final_top5 = evaluate_topk(model, test_set, k5, result.final_temperature);
  }
  return result;
}

}  // namespace fmdconv
