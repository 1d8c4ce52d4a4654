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

#include "fmdconv/ablation.hpp"

#include <charconv>
#include <sstream>

#include "fmdconv/metrics.hpp"
#include "fmdconv/model.hpp"
#include "fmdconv/train.hpp"

namespace fmdconv {

std::string_view to_string(AblationKind k) {
  switch (k) {
    case AblationKind::Temperature: return "temperature";
    case AblationKind::Kernels: return "kernels";
    case AblationKind::Lr: return "lr";
  }
  return "?";
}

AblationKind parse_ablation_kind(std::string_view s) {
  if (s == "temperature") return AblationKind::Temperature;
  if (s == "kernels") return AblationKind::Kernels;
  if (s == "lr") return AblationKind::Lr;
  throw ValueError("unknown ablation kind '" + std::string(s) + "' (expected temperature, kernels or lr)");
}

std::string_view setting_column(AblationKind k) {
  switch (k) {
    case AblationKind::Temperature: return "t0";
    case AblationKind::Kernels: return "kernels";
    case AblationKind::Lr: return "lr0";
  }
  return "?";
}

std::vector<AblationRow> run_ablation(AblationKind kind, std::span<const double> grid, const AblationSetup& setup) {
  if (grid.empty()) throw ValueError("run_ablation: empty grid");
  if (setup.train == nullptr || setup.test == nullptr) throw ValueError("run_ablation: datasets not set");
  std::vector<AblationRow> rows;
  for (double v : grid) {
    TrainConfig cfg = setup.config;
    std::size_t kernels = setup.kernels;
    switch (kind) {
      case AblationKind::Temperature:
        cfg.temperature.t0 = v;
        break;
      case AblationKind::Kernels:
        if (!(v >= 1.0) || v != static_cast<double>(static_cast<std::size_t>(v))) {
          throw ValueError("run_ablation: kernel count must be a positive integer, got " + std::to_string(v));
        }
        kernels = static_cast<std::size_t>(v);
        break;
      case AblationKind::Lr:
        cfg.lr0 = v;
        break;
    }
    AblationRow row;
    row.setting = v;
    Model model = build_model(setup.spec, setup.variant, kernels, cfg.reduction, setup.train->class_count, cfg.seed);
    row.params = model.parameter_count();
    try {
      cfg.validate();
      const TrainResult r = train(model, *setup.train, *setup.test, cfg);
      if (!r.records.empty()) {
        row.top1 = r.final_top1.accuracy();
        row.top5 = r.final_top5.accuracy();
        double t = 0.0;
        for (const EpochRecord& e : r.records) t += e.wall_time_s;
        row.time_per_epoch_s = t / static_cast<double>(r.records.size());
      }
    } catch (const TrainingAborted& e) {
      row.status = "aborted at epoch " + std::to_string(e.epoch());
    } catch (const ValueError& e) {
      row.status = std::string("invalid: ") + e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string clean_status(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return out;
}

}  // namespace

std::string ablation_to_csv(AblationKind kind, std::span<const AblationRow> rows) {
  std::ostringstream os;
  os.precision(17);
  os << setting_column(kind) << ",params,top1,top5,time_per_epoch_s,status\n";
  for (const AblationRow& r : rows) {
    os << r.setting << ',' << r.params << ',' << r.top1 << ',' << r.top5 << ',' << r.time_per_epoch_s << ','
       << clean_status(r.status) << '\n';
  }
  return os.str();
}

namespace {

template <typename T>
T field(std::string_view s, std::size_t line, const char* name) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    throw CsvError(line, std::string("cannot parse ") + name + " from '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

AblationTable parse_ablation_csv(std::string_view text) {
  AblationTable t{AblationKind::Temperature, {}};
  bool header = false;
  std::size_t line_no = 0, start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    start = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::size_t s = 0;
    while (true) {
      const std::size_t c = line.find(',', s);
      f.push_back(line.substr(s, c == std::string_view::npos ? std::string_view::npos : c - s));
      if (c == std::string_view::npos) break;
      s = c + 1;
    }
    if (f.size() != 6) throw CsvError(line_no, "expected 6 fields, got " + std::to_string(f.size()));
    if (!header) {
      bool known = false;
      for (AblationKind k : {AblationKind::Temperature, AblationKind::Kernels, AblationKind::Lr}) {
        if (f[0] == setting_column(k)) {
          t.kind = k;
          known = true;
        }
      }
      if (!known || f[1] != "params" || f[2] != "top1" || f[3] != "top5" || f[4] != "time_per_epoch_s" ||
          f[5] != "status") {
        throw CsvError(line_no, "unrecognized ablation header");
      }
      header = true;
      continue;
    }
    AblationRow r;
    r.setting = field<double>(f[0], line_no, "setting");
    r.params = field<std::size_t>(f[1], line_no, "params");
    r.top1 = field<double>(f[2], line_no, "top1");
    r.top5 = field<double>(f[3], line_no, "top5");
    r.time_per_epoch_s = field<double>(f[4], line_no, "time_per_epoch_s");
    r.status = std::string(f[5]);
    t.rows.push_back(std::move(r));
  }
  if (!header) throw CsvError(line_no == 0 ? 1 : line_no, "missing header");
  return t;
}

}  // namespace fmdconv
