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

#ifndef FMDCONV_ABLATION_HPP_
#define FMDCONV_ABLATION_HPP_

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fmdconv/dataset.hpp"
#include "fmdconv/model_spec.hpp"
#include "fmdconv/schedule.hpp"

namespace fmdconv {

enum class AblationKind { Temperature, Kernels, Lr };

std::string_view to_string(AblationKind k);
/// Accepts temperature, kernels, lr.
AblationKind parse_ablation_kind(std::string_view s);
/// CSV column naming the swept setting: t0, kernels or lr0.
std::string_view setting_column(AblationKind k);

struct AblationSetup {
  ModelSpec spec;
  ConvVariant variant = ConvVariant::FMDConv;
  std::size_t kernels = 4;
  TrainConfig config;
  const Dataset* train = nullptr;
  const Dataset* test = nullptr;
};

struct AblationRow {
  double setting = 0.0;
  std::size_t params = 0;
  double top1 = 0.0;
  double top5 = 0.0;
  double time_per_epoch_s = 0.0;
  std::string status = "ok";  // "ok" or "aborted: <reason>"
};

/// One train/evaluate per grid value with the shared seed. A row whose
/// training aborts keeps its params and status and the sweep continues.
std::vector<AblationRow> run_ablation(AblationKind kind, std::span<const double> grid, const AblationSetup& setup);

std::string ablation_to_csv(AblationKind kind, std::span<const AblationRow> rows);

struct AblationTable {
  AblationKind kind;
  std::vector<AblationRow> rows;
};
/// Inverse of ablation_to_csv; throws CsvError with the offending line.
AblationTable parse_ablation_csv(std::string_view text);

}  // namespace fmdconv

#endif  // FMDCONV_ABLATION_HPP_
