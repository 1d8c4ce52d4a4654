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

#ifndef FMDCONV_SCHEDULE_HPP_
#define FMDCONV_SCHEDULE_HPP_

#include <cstddef>
#include <cstdint>

namespace fmdconv {

struct TemperatureSchedule {
  double t0 = 40.0;
  double decrement = 3.0;  // per epoch
  double floor = 1.0;

  void validate() const;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr0 = 0.1;
  double lr_decay_factor = 20.0;
  std::size_t lr_decay_every = 30;
  double weight_decay = 1e-4;
  double reduction = 0.0625;
  std::uint64_t seed = 0;
  double dropout = 0.1;  // inside the attention heads, training only
  TemperatureSchedule temperature;

  void validate() const;
};

/// max(floor, t0 - decrement * epoch). Throws ValueError for epoch < 0.
double temperature_at(const TemperatureSchedule& s, long long epoch);

/// lr0 / factor^floor(epoch / every). Throws ValueError for epoch < 0.
double lr_at(const TrainConfig& c, long long epoch);

}  // namespace fmdconv

#endif  // FMDCONV_SCHEDULE_HPP_
