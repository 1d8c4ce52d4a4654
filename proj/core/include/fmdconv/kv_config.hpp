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

#ifndef FMDCONV_KV_CONFIG_HPP_
#define FMDCONV_KV_CONFIG_HPP_

#include <set>
#include <string>
#include <string_view>

#include "fmdconv/schedule.hpp"

namespace fmdconv {

/// Flat `key = value` text, one pair per line; '#' starts a comment.
/// Keys: epochs batch_size lr0 lr_decay_factor lr_decay_every weight_decay
/// reduction seed dropout t0 t_decrement t_floor.
/// Unknown keys, duplicates and malformed values throw ValueError naming the
/// line. Returns the keys that were set.
std::set<std::string> apply_kv_config(std::string_view text, TrainConfig& cfg);

std::set<std::string> load_kv_config(const std::string& path, TrainConfig& cfg);

}  // namespace fmdconv

#endif  // FMDCONV_KV_CONFIG_HPP_
