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

#ifndef FMDCONV_METRICS_HPP_
#define FMDCONV_METRICS_HPP_

#include <chrono>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

namespace fmdconv {

/// FLOP convention stated in every machine-readable report.
inline constexpr std::string_view kFlopConvention =
    "2 FLOPs per multiply-accumulate; bias adds not counted";

/// Image counts used when recomputing published rate-correct scores.
inline constexpr std::size_t kCifarImagesPerEpoch = 60000;
inline constexpr std::size_t kImageNetImagesPerEpoch = 1281167;

struct EpochRecord {
  std::size_t epoch = 0;
  double wall_time_s = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
  /// Throws ValueError if correct > total, total == 0 or wall_time_s is not positive.
  void validate() const;
  bool operator==(const EpochRecord&) const = default;
};

struct TradeoffReport {
  double ies = 0.0;
  double rcs = 0.0;
  double mean_epoch_time_s = 0.0;
  double accuracy = 0.0;
  std::size_t images_per_epoch = 0;
  std::size_t epochs = 0;
  std::string flop_convention{kFlopConvention};

  std::string to_json() const;
  static TradeoffReport from_json(std::string_view text);
};

/// Inverse efficiency score: mean epoch time over accuracy.
double ies(double mean_epoch_time_s, double accuracy);

/// Rate-correct score: accuracy * images_per_epoch * epochs / total time.
double rcs(double accuracy, std::size_t images_per_epoch, std::size_t epochs, double total_time_s);

/// Uses the accuracy of the last record and the wall times of all records.
double rcs(std::span<const EpochRecord> records, std::size_t images_per_epoch);

/// IES, RCS and their inputs. Throws ValueError on an empty record list.
/// IES is left at +inf when the final accuracy is zero.
TradeoffReport make_report(std::span<const EpochRecord> records, std::size_t images_per_epoch);

inline constexpr std::string_view kEpochCsvHeader = "epoch,wall_time_s,correct,total";

std::string records_to_csv(std::span<const EpochRecord> records);

/// Thrown by the CSV readers; carries the 1-based offending line.
class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

std::vector<EpochRecord> parse_records_csv(std::string_view text);

/// Runs fn under a monotonic clock. Returns {result, seconds}, or just the
/// seconds when fn returns void.
template <typename Fn>
auto timed_run(Fn&& fn) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  if constexpr (std::is_void_v<std::invoke_result_t<Fn>>) {
    std::forward<Fn>(fn)();
    return std::chrono::duration<double>(Clock::now() - start).count();
  } else {
    auto result = std::forward<Fn>(fn)();
    const double s = std::chrono::duration<double>(Clock::now() - start).count();
    return std::pair<decltype(result), double>(std::move(result), s);
  }
}

/// One published (time, accuracy, IES, RCS) quadruple.
struct ReferenceRow {
  std::string table;  // dataset/backbone tag
  std::string model;
  double epoch_time_s;
  double accuracy;  // fraction
  double ies;
  double rcs;
  std::size_t images_per_epoch;
};

std::span<const ReferenceRow> reference_rows();

struct ReferenceCheck {
  ReferenceRow row;
  double ies;
  double rcs;
  double ies_rel_dev;  // (computed - printed) / printed
  double rcs_rel_dev;
};

std::vector<ReferenceCheck> check_reference_rows();

}  // namespace fmdconv

#endif  // FMDCONV_METRICS_HPP_
