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

#include "fmdconv/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fmdconv/tensor.hpp"

namespace fmdconv {

void TemperatureSchedule::validate() const {
  if (!(floor >= 1.0)) throw ValueError("temperature floor must be >= 1");
  if (!(t0 >= floor)) throw ValueError("temperature t0 must be >= floor");
  if (!(decrement >= 0.0)) throw ValueError("temperature decrement must be >= 0");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ValueError("batch_size must be positive");
  if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw ValueError("lr0 must be a non-negative number");
  if (!(lr_decay_factor > 1.0)) throw ValueError("lr_decay_factor must be > 1");
  if (lr_decay_every == 0) throw ValueError("lr_decay_every must be positive");
  if (!(weight_decay >= 0.0)) throw ValueError("weight_decay must be >= 0");
  if (!(reduction > 0.0 && reduction <= 1.0)) throw ValueError("reduction must be in (0, 1]");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValueError("dropout must be in [0, 1)");
  temperature.validate();
}

double temperature_at(const TemperatureSchedule& s, long long epoch) {
  if (epoch < 0) throw ValueError("temperature_at: negative epoch " + std::to_string(epoch));
  return std::max(s.floor, s.t0 - s.decrement * static_cast<double>(epoch));
}

double lr_at(const TrainConfig& c, long long epoch) {
  if (epoch < 0) throw ValueError("lr_at: negative epoch " + std::to_string(epoch));
  if (c.lr_decay_every == 0) throw ValueError("lr_at: lr_decay_every must be positive");
  const long long steps = epoch / static_cast<long long>(c.lr_decay_every);
  double lr = c.lr0;
  for (long long i = 0; i < steps; ++i) lr /= c.lr_decay_factor;
  return lr;
}

}  // namespace fmdconv
