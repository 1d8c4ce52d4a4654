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

#include "cli.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fmdconv/ablation.hpp"
#include "fmdconv/catalog.hpp"
#include "fmdconv/dataset.hpp"
#include "fmdconv/kv_config.hpp"
#include "fmdconv/latency.hpp"
#include "fmdconv/metrics.hpp"
#include "fmdconv/model.hpp"
#include "fmdconv/train.hpp"
#include "json.hpp"

namespace fmdconv::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::vector<std::string> kVariants = {"static", "condconv", "dynamicconv", "odconv", "fmdconv"};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
  os << text;
  if (!os) throw std::runtime_error("error writing '" + p.string() + "'");
}

fs::path out_dir(const std::string& flag) {
  std::string dir = flag;
  if (dir.empty()) {
    const char* env = std::getenv("FMDCONV_OUT_DIR");
    dir = (env != nullptr && *env != '\0') ? env : ".";
  }
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string() : cur.substr(b, e - b + 1));
  }
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    throw UsageError("invalid " + what + " '" + s + "'");
  }
  return v;
}

std::vector<std::size_t> parse_dims(const std::string& s, std::size_t count, const std::string& what) {
  const auto parts = split_list(s, 'x');
  if (parts.size() != count) throw UsageError("invalid " + what + " '" + s + "'");
  std::vector<std::size_t> dims;
  for (const std::string& p : parts) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), v);
    if (p.empty() || ec != std::errc() || ptr != p.data() + p.size() || v == 0) {
      throw UsageError("invalid " + what + " '" + s + "'");
    }
    dims.push_back(v);
  }
  return dims;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Training flags shared by train and ablate
// ---------------------------------------------------------------------------

struct TrainFlags {
  std::string variant = "fmdconv";
  std::size_t kernels = 4;
  TrainConfig cfg;
  std::string data = "synthetic";
  std::string test_data;
  std::size_t classes = 4;
  std::size_t per_class = 100;
  std::size_t test_per_class = 100;
  std::size_t image_size = 16;
  std::size_t channels = 1;
  std::size_t images_per_epoch = 0;
  std::string out;
  std::string config;
  bool quiet = false;

  std::vector<std::pair<CLI::Option*, std::function<void(TrainConfig&)>>> overrides;

  template <typename T>
  void bind(CLI::App* app, const std::string& name, T& slot, const std::string& help,
            std::function<void(TrainConfig&, const T&)> apply) {
    CLI::Option* o = app->add_option(name, slot, help)->capture_default_str();
    overrides.emplace_back(o, [&slot, apply](TrainConfig& c) { apply(c, slot); });
  }

  // Flag storage separate from cfg so that explicit flags override --config.
  TrainConfig flag_values;

  void add_to(CLI::App* app) {
    app->add_option("--variant", variant, "Convolution variant")
        ->check(CLI::IsMember(kVariants))
        ->capture_default_str();
    app->add_option("--kernels,-K", kernels, "Kernels per dynamic layer")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    TrainConfig& f = flag_values;
    bind<double>(app, "--reduction,-r", f.reduction, "Attention reduction rate r",
                 [](TrainConfig& c, const double& v) { c.reduction = v; });
    bind<double>(app, "--t0", f.temperature.t0, "Initial kernel-attention temperature",
                 [](TrainConfig& c, const double& v) { c.temperature.t0 = v; });
    bind<double>(app, "--t-decrement", f.temperature.decrement, "Temperature decrement per epoch",
                 [](TrainConfig& c, const double& v) { c.temperature.decrement = v; });
    bind<double>(app, "--t-floor", f.temperature.floor, "Temperature floor",
                 [](TrainConfig& c, const double& v) { c.temperature.floor = v; });
    bind<std::size_t>(app, "--epochs", f.epochs, "Training epochs",
                      [](TrainConfig& c, const std::size_t& v) { c.epochs = v; });
    bind<std::size_t>(app, "--batch-size", f.batch_size, "Minibatch size",
                      [](TrainConfig& c, const std::size_t& v) { c.batch_size = v; });
    bind<double>(app, "--lr0", f.lr0, "Initial learning rate",
                 [](TrainConfig& c, const double& v) { c.lr0 = v; });
    bind<double>(app, "--lr-decay-factor", f.lr_decay_factor, "Learning-rate decay factor",
                 [](TrainConfig& c, const double& v) { c.lr_decay_factor = v; });
    bind<std::size_t>(app, "--lr-decay-every", f.lr_decay_every, "Epochs between learning-rate decays",
                      [](TrainConfig& c, const std::size_t& v) { c.lr_decay_every = v; });
    bind<double>(app, "--weight-decay", f.weight_decay, "SGD weight decay",
                 [](TrainConfig& c, const double& v) { c.weight_decay = v; });
    bind<double>(app, "--dropout", f.dropout, "Dropout inside attention heads (training only)",
                 [](TrainConfig& c, const double& v) { c.dropout = v; });
    bind<std::uint64_t>(app, "--seed", f.seed, "Seed for data, initialization and shuffling",
                        [](TrainConfig& c, const std::uint64_t& v) { c.seed = v; });
    app->add_option("--data", data, "'synthetic' or a dataset file for training")->capture_default_str();
    app->add_option("--test-data", test_data, "Dataset file for evaluation (with --data <file>)");
    app->add_option("--classes", classes, "Synthetic classes")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--per-class", per_class, "Synthetic training images per class")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--test-per-class", test_per_class, "Synthetic test images per class")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--image-size", image_size, "Synthetic image height and width")
        ->check(CLI::Range(std::size_t{8}, std::size_t{4096}))
        ->capture_default_str();
    app->add_option("--channels", channels, "Synthetic image channels")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--images-per-epoch", images_per_epoch, "RCS image constant (default: training-set size)");
    app->add_option("--out", out, "Output directory (default: $FMDCONV_OUT_DIR or .)");
    app->add_option("--config", config, "key = value file with training settings")->check(CLI::ExistingFile);
    app->add_flag("--quiet,-q", quiet, "Only print the final line");
  }

  TrainConfig resolve() const {
    TrainConfig c;
    if (!config.empty()) load_kv_config(config, c);
    for (const auto& [opt, apply] : overrides) {
      if (opt->count() > 0) apply(c);
    }
    c.validate();
    return c;
  }

  DatasetSplit load_data(const TrainConfig& c) const {
    if (data == "synthetic") {
      if (!test_data.empty()) throw UsageError("--test-data only applies to --data <file>");
      return make_synthetic_split(c.seed, classes, per_class, test_per_class, channels, image_size, image_size);
    }
    if (test_data.empty()) throw UsageError("--data <file> requires --test-data <file>");
    DatasetSplit s;
    s.train = read_dataset(data, "train");
    s.test = read_dataset(test_data, "test");
    if (s.train.images.dim(1) != s.test.images.dim(1) || s.train.images.dim(2) != s.test.images.dim(2) ||
        s.train.images.dim(3) != s.test.images.dim(3) || s.train.class_count != s.test.class_count) {
      throw UsageError("training and test datasets have different shapes or class counts");
    }
    return s;
  }
};

ModelSpec tiny_for(const Dataset& d, const std::string& variant, std::size_t kernels, double r) {
  CatalogOptions o;
  o.variant = parse_variant(variant);
  o.kernels = o.variant == ConvVariant::Static ? 1 : kernels;
  o.reduction = r;
  o.classes = d.class_count;
  o.in_c = d.images.dim(1);
  o.in_h = d.images.dim(2);
  o.in_w = d.images.dim(3);
  return tiny_cnn_spec(o);
}

// ---------------------------------------------------------------------------
// Verbs
// ---------------------------------------------------------------------------

int cmd_train(const TrainFlags& f, std::ostream& out) {
  const TrainConfig cfg = f.resolve();
  const DatasetSplit data = f.load_data(cfg);
  const ModelSpec spec = tiny_for(data.train, f.variant, f.kernels, cfg.reduction);
  Model model(spec, cfg.seed);
  const fs::path dir = out_dir(f.out);
  if (!f.quiet) {
    out << "variant=" << f.variant << " K=" << spec.layers.front().conv.kernels << " r=" << cfg.reduction
        << " params=" << model.parameter_count() << " train=" << data.train.size() << " test=" << data.test.size()
        << "\n";
  }
  const TrainResult r = train(model, data.train, data.test, cfg, [&](const EpochSummary& s) {
    if (f.quiet) return;
    out << "epoch " << s.record.epoch << ": loss=" << fixed(s.train_loss, 4) << " top1=" << fixed(s.record.accuracy(), 4)
        << " T=" << s.temperature << " lr=" << s.lr << " time=" << fixed(s.record.wall_time_s, 3) << "s\n";
  });
  write_text(dir / "epochs.csv", records_to_csv(r.records));
  model.save(dir / "model.bin");
  if (r.records.empty()) {
    throw UsageError("no epochs were run (--epochs 0); report.json not written");
  }
  const std::size_t m = f.images_per_epoch > 0 ? f.images_per_epoch : data.train.size();
  const TradeoffReport rep = make_report(r.records, m);
  write_text(dir / "report.json", rep.to_json() + "\n");
  out << "final top1=" << fixed(r.final_top1.accuracy(), 4) << " top5=" << fixed(r.final_top5.accuracy(), 4)
      << " ies=" << fixed(rep.ies, 6) << " rcs=" << fixed(rep.rcs, 3) << "\n";
  return kExitOk;
}

int cmd_ablate(const TrainFlags& f, const std::string& kind_name, const std::string& grid_text, std::ostream& out) {
  const AblationKind kind = parse_ablation_kind(kind_name);
  std::vector<double> grid;
  for (const std::string& s : split_list(grid_text, ',')) {
    if (!s.empty()) grid.push_back(parse_double(s, "grid value"));
  }
  if (grid.empty()) throw UsageError("--grid must list at least one value");
  if (kind == AblationKind::Kernels) {
    for (double v : grid) {
      if (!(v >= 1.0) || v != static_cast<double>(static_cast<std::size_t>(v))) {
        throw UsageError("kernel grid values must be positive integers");
      }
    }
  }
  const TrainConfig cfg = f.resolve();
  const DatasetSplit data = f.load_data(cfg);
  AblationSetup setup;
  setup.spec = tiny_for(data.train, f.variant, f.kernels, cfg.reduction);
  setup.variant = parse_variant(f.variant);
  setup.kernels = f.kernels;
  setup.config = cfg;
  setup.train = &data.train;
  setup.test = &data.test;
  const auto rows = run_ablation(kind, grid, setup);
  const std::string csv = ablation_to_csv(kind, rows);
  const fs::path path = out_dir(f.out) / ("ablate_" + std::string(to_string(kind)) + ".csv");
  write_text(path, csv);
  out << csv;
  if (!f.quiet) out << "wrote " << path.string() << "\n";
  return kExitOk;
}

struct CountFlags {
  std::string arch = "resnet18";
  std::string variant = "fmdconv";
  std::size_t kernels = 4;
  double reduction = 0.0625;
  std::string input;
  std::size_t classes = 0;
  std::size_t in_channels = 0;
  bool per_layer = false;
  bool json_only = false;
  bool no_conv_bias = false;

  void add_to(CLI::App* app) {
    app->add_option("--arch", arch, "Architecture catalog")
        ->check(CLI::IsMember({"tiny", "resnet18", "resnet50"}))
        ->capture_default_str();
    app->add_option("--variant", variant, "Variant for the dynamic layers")
        ->check(CLI::IsMember(kVariants))
        ->capture_default_str();
    app->add_option("--kernels,-K", kernels, "Kernels per dynamic layer")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--reduction,-r", reduction, "Attention reduction rate r")
        ->check(CLI::Range(1e-12, 1.0))
        ->capture_default_str();
    app->add_option("--input", input, "Input size HxW (default 32x32; tiny: 16x16)");
    app->add_option("--classes", classes, "Classifier width (default 1000; tiny: 4)");
    app->add_option("--in-channels", in_channels, "Input channels (default 3; tiny: 1)");
    app->add_flag("--no-conv-bias", no_conv_bias, "Drop the bias of the block convolutions");
    app->add_flag("--per-layer", per_layer, "Include a per-layer breakdown");
    app->add_flag("--json", json_only, "Print only the JSON object");
  }
};

int cmd_count(const CountFlags& f, std::ostream& out) {
  const bool tiny = f.arch == "tiny";
  CatalogOptions o;
  o.variant = parse_variant(f.variant);
  o.kernels = o.variant == ConvVariant::Static ? 1 : f.kernels;
  o.reduction = f.reduction;
  o.conv_bias = !f.no_conv_bias;
  o.classes = f.classes > 0 ? f.classes : (tiny ? 4 : 1000);
  o.in_c = f.in_channels > 0 ? f.in_channels : (tiny ? 1 : 3);
  const auto hw = parse_dims(f.input.empty() ? (tiny ? "16x16" : "32x32") : f.input, 2, "--input");
  o.in_h = hw[0];
  o.in_w = hw[1];
  const ModelSpec spec = catalog_spec(f.arch, o);
  const std::size_t params = count_params(spec);
  const FlopReport fl = count_flops(spec);

  ordered_json j;
  j["arch"] = f.arch;
  j["variant"] = f.variant;
  j["kernels"] = o.kernels;
  j["reduction"] = o.reduction;
  j["input"] = {o.in_c, o.in_h, o.in_w};
  j["classes"] = o.classes;
  j["params"] = params;
  j["flops"] = fl.total;
  j["dynamic_overhead_flops"] = fl.overhead;
  j["flop_convention"] = std::string(kFlopConvention);
  const bool per_layer = f.per_layer;
  if (per_layer) {
    ordered_json layers = ordered_json::array();
    for (const LayerFlops& l : fl.layers) {
      layers.push_back({{"name", l.name},
                        {"kind", std::string(to_string(l.kind))},
                        {"input", {l.input.c, l.input.h, l.input.w}},
                        {"flops", l.flops},
                        {"overhead", l.overhead}});
    }
    j["layers"] = layers;
  }
  if (!f.json_only) {
    out << "# FLOP convention: " << kFlopConvention << "; counts are per sample\n";
    out << f.arch << " " << f.variant << " K=" << o.kernels << " r=" << o.reduction << " input=" << o.in_c << "x"
        << o.in_h << "x" << o.in_w << " classes=" << o.classes << "\n";
    out << "params: " << params << " (" << fixed(static_cast<double>(params) / 1e6, 3) << "M)\n";
    out << "flops: " << fl.total << " (" << fixed(static_cast<double>(fl.total) / 1e9, 4) << " GFLOPs), dynamic overhead "
        << fl.overhead << "\n";
    if (per_layer) {
      for (const LayerFlops& l : fl.layers) {
        if (l.flops == 0) continue;
        out << "  " << std::left << std::setw(26) << l.name << std::right << std::setw(14) << l.flops << "  overhead "
            << l.overhead << "\n";
      }
    }
  }
  out << j.dump(2) << "\n";
  return kExitOk;
}

struct BenchFlags {
  std::vector<std::string> variants;
  std::string shape = "32x64x32x32";
  std::size_t kernels = 4;
  double reduction = 0.0625;
  std::size_t repeat = 20;
  std::size_t warmup = 1;
  std::uint64_t seed = 0;
  std::string json_out;
  bool json_only = false;

  void add_to(CLI::App* app) {
    app->add_option("--variant", variants, "Variants to time (repeatable or comma separated; default all)")
        ->delimiter(',')
        ->check(CLI::IsMember(kVariants));
    app->add_option("--shapes,--shape", shape, "Input NxCxHxW; C_out = C_in, 3x3 kernel, padding 1")
        ->capture_default_str();
    app->add_option("--kernels,-K", kernels, "Kernels per dynamic layer")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--reduction,-r", reduction, "Attention reduction rate r")
        ->check(CLI::Range(1e-12, 1.0))
        ->capture_default_str();
    app->add_option("--repeat", repeat, "Timed runs per variant (at least 3)")->capture_default_str();
    app->add_option("--warmup", warmup, "Untimed rounds before measuring")->capture_default_str();
    app->add_option("--seed", seed, "Seed for weights and input")->capture_default_str();
    app->add_option("--json-out", json_out, "Also write the JSON result to this file");
    app->add_flag("--json", json_only, "Print only the JSON object");
  }
};

int cmd_bench(const BenchFlags& f, std::ostream& out) {
  if (f.repeat < 3) throw UsageError("--repeat must be at least 3");
  const auto dims = parse_dims(f.shape, 4, "--shapes");
  const std::vector<std::string> variants = f.variants.empty() ? kVariants : f.variants;
  Rng rng(f.seed);
  std::vector<std::unique_ptr<ConvLayer>> layers;
  std::vector<const ConvLayer*> ptrs;
  for (const std::string& v : variants) {
    LayerConfig c;
    c.variant = parse_variant(v);
    c.c_in = dims[1];
    c.c_out = dims[1];
    c.kernels = c.variant == ConvVariant::Static ? 1 : f.kernels;
    c.reduction = f.reduction;
    layers.push_back(make_layer(v, c, rng));
    ptrs.push_back(layers.back().get());
  }
  Tensor x(Shape{dims[0], dims[1], dims[2], dims[3]});
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.normal();
  const auto stats = measure_forward_latency(ptrs, x, f.repeat, f.warmup);

  ordered_json j;
  j["shape"] = dims;
  j["kernels"] = f.kernels;
  j["reduction"] = f.reduction;
  j["repeat"] = f.repeat;
  j["results"] = ordered_json::array();
  for (std::size_t i = 0; i < variants.size(); ++i) {
    j["results"].push_back({{"variant", variants[i]},
                            {"median_s", stats[i].median_s},
                            {"min_s", stats[i].min_s},
                            {"samples_s", stats[i].samples_s}});
  }
  if (!f.json_only) {
    out << std::left << std::setw(14) << "variant" << std::right << std::setw(14) << "median_ms" << std::setw(14)
        << "min_ms" << "\n";
    for (std::size_t i = 0; i < variants.size(); ++i) {
      out << std::left << std::setw(14) << variants[i] << std::right << std::setw(14)
          << fixed(stats[i].median_s * 1e3, 3) << std::setw(14) << fixed(stats[i].min_s * 1e3, 3) << "\n";
    }
  }
  out << j.dump(2) << "\n";
  if (!f.json_out.empty()) write_text(f.json_out, j.dump(2) + "\n");
  return kExitOk;
}

struct ReportFlags {
  std::string in;
  std::size_t images_per_epoch = 0;
  std::string out;
  bool reference_check = false;
};

int cmd_report(const ReportFlags& f, std::ostream& out) {
  if (f.reference_check) {
    const auto checks = check_reference_rows();
    double worst_ies = 0.0, worst_rcs = 0.0;
    std::string worst_ies_row, worst_rcs_row;
    std::size_t within = 0;
    out << std::left << std::setw(28) << "table" << std::setw(16) << "model" << std::right << std::setw(11) << "IES"
        << std::setw(11) << "printed" << std::setw(9) << "dev%" << std::setw(11) << "RCS" << std::setw(11) << "printed"
        << std::setw(9) << "dev%" << "\n";
    ordered_json rows = ordered_json::array();
    for (const ReferenceCheck& c : checks) {
      out << std::left << std::setw(28) << c.row.table << std::setw(16) << c.row.model << std::right << std::setw(11)
          << fixed(c.ies, 2) << std::setw(11) << fixed(c.row.ies, 2) << std::setw(9) << fixed(100 * c.ies_rel_dev, 3)
          << std::setw(11) << fixed(c.rcs, 2) << std::setw(11) << fixed(c.row.rcs, 2) << std::setw(9)
          << fixed(100 * c.rcs_rel_dev, 3) << "\n";
      const std::string tag = c.row.table + "/" + c.row.model;
      if (std::abs(c.ies_rel_dev) > std::abs(worst_ies)) {
        worst_ies = c.ies_rel_dev;
        worst_ies_row = tag;
      }
      if (std::abs(c.rcs_rel_dev) > std::abs(worst_rcs)) {
        worst_rcs = c.rcs_rel_dev;
        worst_rcs_row = tag;
      }
      if (std::abs(c.ies_rel_dev) <= 0.005 && std::abs(c.rcs_rel_dev) <= 0.005) ++within;
      rows.push_back({{"table", c.row.table},
                      {"model", c.row.model},
                      {"ies", c.ies},
                      {"ies_printed", c.row.ies},
                      {"ies_rel_dev", c.ies_rel_dev},
                      {"rcs", c.rcs},
                      {"rcs_printed", c.row.rcs},
                      {"rcs_rel_dev", c.rcs_rel_dev}});
    }
    out << "max |dev| IES " << fixed(100 * std::abs(worst_ies), 3) << "% (" << worst_ies_row << "), RCS "
        << fixed(100 * std::abs(worst_rcs), 3) << "% (" << worst_rcs_row << ")\n";
    out << within << "/" << checks.size() << " rows within 0.5%\n";
    if (!f.out.empty()) {
      ordered_json j;
      j["rows"] = rows;
      j["max_abs_ies_rel_dev"] = std::abs(worst_ies);
      j["max_abs_rcs_rel_dev"] = std::abs(worst_rcs);
      write_text(f.out, j.dump(2) + "\n");
    }
    return kExitOk;
  }

  if (f.in.empty()) throw UsageError("report needs --in <csv> or --reference-check");
  const std::string text = slurp(f.in);
  const bool epochs_csv = text.rfind(std::string(kEpochCsvHeader), 0) == 0;
  std::string json;
  if (epochs_csv) {
    if (f.images_per_epoch == 0) throw UsageError("--images-per-epoch is required for an epochs CSV");
    const auto records = parse_records_csv(text);
    if (records.empty()) throw UsageError("'" + f.in + "' has no epoch rows");
    json = make_report(records, f.images_per_epoch).to_json();
  } else {
    const AblationTable t = parse_ablation_csv(text);
    ordered_json j;
    j["kind"] = std::string(to_string(t.kind));
    j["setting"] = std::string(setting_column(t.kind));
    j["rows"] = ordered_json::array();
    for (const AblationRow& r : t.rows) {
      j["rows"].push_back({{"setting", r.setting},
                           {"params", r.params},
                           {"top1", r.top1},
                           {"top5", r.top5},
                           {"time_per_epoch_s", r.time_per_epoch_s},
                           {"status", r.status}});
    }
    json = j.dump(2);
  }
  out << json << "\n";
  if (!f.out.empty()) write_text(f.out, json + "\n");
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"fmdconv: dynamic-convolution engine and speed/accuracy harness", "fmdconv"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", "fmdconv 0.1.0");

  TrainFlags train_flags;
  CLI::App* train_cmd = app.add_subcommand("train", "Train the tiny CNN and write epochs.csv, report.json, model.bin");
  train_flags.add_to(train_cmd);

  TrainFlags ablate_flags;
  std::string kind, grid;
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "Sweep t0, K or lr0 and write ablate_<kind>.csv");
  ablate_flags.add_to(ablate_cmd);
  ablate_cmd->add_option("--kind", kind, "temperature, kernels or lr")
      ->required()
      ->check(CLI::IsMember({"temperature", "kernels", "lr"}));
  ablate_cmd->add_option("--grid", grid, "Comma-separated values, e.g. 1,10,40")->required();

  CountFlags flops_flags, params_flags;
  CLI::App* flops_cmd = app.add_subcommand("flops", "Count FLOPs (and parameters) of a catalog network");
  flops_flags.add_to(flops_cmd);
  CLI::App* params_cmd = app.add_subcommand("params", "Count parameters (and FLOPs) of a catalog network");
  params_flags.add_to(params_cmd);

  BenchFlags bench_flags;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Forward-latency micro-benchmark across variants");
  bench_flags.add_to(bench_cmd);

  ReportFlags report_flags;
  CLI::App* report_cmd = app.add_subcommand("report", "IES/RCS from an epochs CSV, or re-ingest an ablation CSV");
  report_cmd->add_option("--in", report_flags.in, "epochs.csv or ablate_<kind>.csv")->check(CLI::ExistingFile);
  report_cmd->add_option("--images-per-epoch,-M", report_flags.images_per_epoch, "RCS image constant");
  report_cmd->add_option("--out", report_flags.out, "Also write the JSON to this file");
  report_cmd->add_flag("--paper-check,--reference-check", report_flags.reference_check,
                       "Recompute the built-in published IES/RCS rows and report deviations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags, out);
    if (*ablate_cmd) return cmd_ablate(ablate_flags, kind, grid, out);
    if (*flops_cmd) return cmd_count(flops_flags, out);
    if (*params_cmd) return cmd_count(params_flags, out);
    if (*bench_cmd) return cmd_bench(bench_flags, out);
    if (*report_cmd) return cmd_report(report_flags, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CsvError& e) {
    err << "error: malformed CSV, " << e.what() << "\n";
    return kExitUsage;
  } catch (const TrainingAborted& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace fmdconv::cli
