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

#include "fmdconv/metrics.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "fmdconv/tensor.hpp"
#include "json.hpp"

namespace fmdconv {

void EpochRecord::validate() const {
  if (total == 0) throw ValueError("epoch record " + std::to_string(epoch) + ": total is zero");
  if (correct > total) {
    throw ValueError("epoch record " + std::to_string(epoch) + ": correct " + std::to_string(correct) +
                     " exceeds total " + std::to_string(total));
  }
  if (!(wall_time_s > 0.0) || !std::isfinite(wall_time_s)) {
    throw ValueError("epoch record " + std::to_string(epoch) + ": wall time must be positive");
  }
}

double ies(double mean_epoch_time_s, double accuracy) {
  if (!(accuracy > 0.0) || accuracy > 1.0) {
    throw ValueError("ies: accuracy must be in (0, 1], got " + std::to_string(accuracy));
  }
  if (!(mean_epoch_time_s > 0.0)) throw ValueError("ies: mean epoch time must be positive");
  return mean_epoch_time_s / accuracy;
}

double rcs(double accuracy, std::size_t images_per_epoch, std::size_t epochs, double total_time_s) {
  if (accuracy < 0.0 || accuracy > 1.0) throw ValueError("rcs: accuracy must be in [0, 1]");
  if (images_per_epoch == 0) throw ValueError("rcs: images_per_epoch must be positive");
  if (epochs == 0) throw ValueError("rcs: no epochs");
  if (!(total_time_s > 0.0)) throw ValueError("rcs: total time must be positive");
  return accuracy * static_cast<double>(images_per_epoch) * static_cast<double>(epochs) / total_time_s;
}

namespace {

double total_time(std::span<const EpochRecord> records) {
  double t = 0.0;
  for (const EpochRecord& r : records) t += r.wall_time_s;
  return t;
}

}  // namespace

double rcs(std::span<const EpochRecord> records, std::size_t images_per_epoch) {
  if (records.empty()) throw ValueError("rcs: empty record list");
  return rcs(records.back().accuracy(), images_per_epoch, records.size(), total_time(records));
}

TradeoffReport make_report(std::span<const EpochRecord> records, std::size_t images_per_epoch) {
  if (records.empty()) throw ValueError("make_report: empty record list");
  for (const EpochRecord& r : records) r.validate();
  TradeoffReport rep;
  rep.epochs = records.size();
  rep.images_per_epoch = images_per_epoch;
  rep.accuracy = records.back().accuracy();
  rep.mean_epoch_time_s = total_time(records) / static_cast<double>(records.size());
  rep.ies = rep.accuracy > 0.0 ? ies(rep.mean_epoch_time_s, rep.accuracy)
                               : std::numeric_limits<double>::infinity();
  rep.rcs = rcs(records, images_per_epoch);
  return rep;
}

std::string TradeoffReport::to_json() const {
  nlohmann::ordered_json j;
  if (std::isfinite(ies)) {
    j["ies"] = ies;
  } else {
    j["ies"] = nullptr;
  }
  j["rcs"] = rcs;
  j["mean_epoch_time_s"] = mean_epoch_time_s;
  j["accuracy"] = accuracy;
  j["images_per_epoch"] = images_per_epoch;
  j["epochs"] = epochs;
  j["flop_convention"] = flop_convention;
  return j.dump(2);
}

TradeoffReport TradeoffReport::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValueError(std::string("report JSON: ") + e.what());
  }
  TradeoffReport r;
  try {
    r.ies = j.at("ies").is_null() ? std::numeric_limits<double>::infinity() : j.at("ies").get<double>();
    r.rcs = j.at("rcs").get<double>();
    r.mean_epoch_time_s = j.at("mean_epoch_time_s").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    r.images_per_epoch = j.at("images_per_epoch").get<std::size_t>();
    r.epochs = j.value("epochs", std::size_t{0});
    r.flop_convention = j.at("flop_convention").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValueError(std::string("report JSON: ") + e.what());
  }
  return r;
}

std::string records_to_csv(std::span<const EpochRecord> records) {
  std::ostringstream os;
  os.precision(17);
  os << kEpochCsvHeader << '\n';
  for (const EpochRecord& r : records) {
    os << r.epoch << ',' << r.wall_time_s << ',' << r.correct << ',' << r.total << '\n';
  }
  return os.str();
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_field(std::string_view s, std::size_t line, const char* name) {
  T v{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) {
    throw CsvError(line, std::string("cannot parse ") + name + " from '" + std::string(s) + "'");
  }
  return v;
}

std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<EpochRecord> parse_records_csv(std::string_view text) {
  std::vector<EpochRecord> out;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = strip_cr(text.substr(start, nl - start));
    start = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kEpochCsvHeader) {
        throw CsvError(line_no, "expected header '" + std::string(kEpochCsvHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 4) throw CsvError(line_no, "expected 4 fields, got " + std::to_string(f.size()));
    EpochRecord r;
    r.epoch = parse_field<std::size_t>(f[0], line_no, "epoch");
    r.wall_time_s = parse_field<double>(f[1], line_no, "wall_time_s");
    r.correct = parse_field<std::size_t>(f[2], line_no, "correct");
    r.total = parse_field<std::size_t>(f[3], line_no, "total");
    try {
      r.validate();
    } catch (const ValueError& e) {
      throw CsvError(line_no, e.what());
    }
    out.push_back(r);
  }
  if (!header_seen) throw CsvError(line_no == 0 ? 1 : line_no, "missing header");
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kC = kCifarImagesPerEpoch;
constexpr std::size_t kI = kImageNetImagesPerEpoch;

const std::vector<ReferenceRow>& rows() {
  static const std::vector<ReferenceRow> r = {
      {"cifar10-resnet18-attention", "channel", 59.54, 0.9083, 65.65, 915.32, kC},
      {"cifar10-resnet18-attention", "kernel-x2", 144.72, 0.9015, 160.53, 373.76, kC},
      {"cifar10-resnet18-attention", "kernel-x4", 205.54, 0.9060, 226.87, 264.47, kC},
      {"cifar10-resnet18-attention", "spatial", 112.63, 0.9041, 124.58, 481.63, kC},
      {"cifar10-resnet18-attention", "filter", 60.01, 0.9082, 66.08, 908.05, kC},

      {"cifar10-resnet18", "condconv", 100.50, 0.8119, 123.78, 484.72, kC},
      {"cifar10-resnet18", "dynamicconv", 104.05, 0.8519, 122.14, 491.24, kC},
      {"cifar10-resnet18", "odconv", 223.61, 0.9382, 238.34, 251.74, kC},
      {"cifar10-resnet18", "fmdconv", 114.7, 0.9421, 121.75, 492.82, kC},

      {"cifar100-resnet18", "condconv", 108.50, 0.6680, 162.42, 369.40, kC},
      {"cifar100-resnet18", "dynamicconv", 105.98, 0.6721, 157.68, 380.50, kC},
      {"cifar100-resnet18", "odconv", 222.1, 0.7263, 305.79, 196.21, kC},
      {"cifar100-resnet18", "fmdconv", 115.16, 0.7499, 153.57, 390.71, kC},

      {"imagenet-resnet18", "condconv-x8", 625.68, 0.7199, 869.12, 1474.10, kI},
      {"imagenet-resnet18", "dynamicconv-x4", 618.45, 0.7276, 849.98, 1507.28, kI},
      {"imagenet-resnet18", "odconv-x4", 1236.14, 0.7309, 1691.26, 757.52, kI},
      {"imagenet-resnet18", "fmdconv-x4", 620.34, 0.7321, 847.34, 1511.98, kI},

      {"imagenet-resnet50", "condconv-x8", 990.12, 0.7520, 1316.65, 973.05, kI},
      {"imagenet-resnet50", "dynamicconv-x4", 1008.54, 0.7582, 1330.18, 963.16, kI},
      {"imagenet-resnet50", "odconv-x4", 1780.35, 0.7832, 2273.17, 563.60, kI},
      {"imagenet-resnet50", "fmdconv-x4", 1028.57, 0.7834, 1099.25, 975.79, kI},

      {"imagenet-mobilenetv2x0.5", "condconv-x8", 83.27, 0.6641, 125.39, 10217.64, kI},
      {"imagenet-mobilenetv2x0.5", "dynamicconv-x4", 85.62, 0.6875, 124.54, 10287.34, kI},
      {"imagenet-mobilenetv2x0.5", "odconv-x4", 119.21, 0.7021, 169.79, 7545.57, kI},
      {"imagenet-mobilenetv2x0.5", "fmdconv-x4", 87.37, 0.7023, 124.41, 10298.31, kI},
  };
  return r;
}

}  // namespace

std::span<const ReferenceRow> reference_rows() { return rows(); }

std::vector<ReferenceCheck> check_reference_rows() {
  std::vector<ReferenceCheck> out;
  for (const ReferenceRow& r : rows()) {
    ReferenceCheck c{r, 0, 0, 0, 0};
    c.ies = ies(r.epoch_time_s, r.accuracy);
    c.rcs = rcs(r.accuracy, r.images_per_epoch, 1, r.epoch_time_s);
    c.ies_rel_dev = (c.ies - r.ies) / r.ies;
    c.rcs_rel_dev = (c.rcs - r.rcs) / r.rcs;
    out.push_back(c);
  }
  return out;
}

}  // namespace fmdconv
