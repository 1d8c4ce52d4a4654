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

#include "fmdconv/kv_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fmdconv/tensor.hpp"

namespace fmdconv {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const std::size_t b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

template <typename T>
T number(std::string_view v, std::size_t line, std::string_view key) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) {
    throw ValueError("config line " + std::to_string(line) + ": bad value '" + std::string(v) + "' for " +
                     std::string(key));
  }
  return out;
}

}  // namespace

std::set<std::string> apply_kv_config(std::string_view text, TrainConfig& cfg) {
  using Setter = std::function<void(std::string_view, std::size_t, std::string_view)>;
  const auto sz = [](std::size_t TrainConfig::*m, TrainConfig& c) {
    return [m, &c](std::string_view v, std::size_t l, std::string_view k) { c.*m = number<std::size_t>(v, l, k); };
  };
  const auto dbl = [](double& ref) {
    return [&ref](std::string_view v, std::size_t l, std::string_view k) { ref = number<double>(v, l, k); };
  };
  const std::map<std::string, Setter, std::less<>> setters = {
      {"epochs", sz(&TrainConfig::epochs, cfg)},
      {"batch_size", sz(&TrainConfig::batch_size, cfg)},
      {"lr0", dbl(cfg.lr0)},
      {"lr_decay_factor", dbl(cfg.lr_decay_factor)},
      {"lr_decay_every", sz(&TrainConfig::lr_decay_every, cfg)},
      {"weight_decay", dbl(cfg.weight_decay)},
      {"reduction", dbl(cfg.reduction)},
      {"seed", [&cfg](std::string_view v, std::size_t l, std::string_view k) { cfg.seed = number<std::uint64_t>(v, l, k); }},
      {"dropout", dbl(cfg.dropout)},
      {"t0", dbl(cfg.temperature.t0)},
      {"t_decrement", dbl(cfg.temperature.decrement)},
      {"t_floor", dbl(cfg.temperature.floor)},
  };

  std::set<std::string> seen;
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) {
      if (nl == text.size()) break;
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValueError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw ValueError("config line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    }
    if (!seen.insert(std::string(key)).second) {
      throw ValueError("config line " + std::to_string(line_no) + ": duplicate key '" + std::string(key) + "'");
    }
    it->second(value, line_no, key);
    if (nl == text.size()) break;
  }
  return seen;
}

std::set<std::string> load_kv_config(const std::string& path, TrainConfig& cfg) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return apply_kv_config(ss.str(), cfg);
}

}  // namespace fmdconv
