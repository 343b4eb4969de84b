// SPDX-License-Identifier: Apache-2.0
#include "pipeline.hpp"

#include "plot.hpp"
#include "rmies/bench.hpp"
#include "rmies/io.hpp"
#include "rmies/uncertainty.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <memory>
#include <sstream>

namespace rmies::cli {

using json = nlohmann::json;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

synth::Range range_from(const KeyValueConfig& cfg, const std::string& key, synth::Range fallback) {
  const auto v = cfg.get_list("synth", key, {fallback.lo, fallback.hi});
  if (v.size() == 1) return {v[0], v[0]};
  if (v.size() != 2 || v[0] > v[1]) throw ConfigError("synth." + key + " must be 'lo hi' with lo <= hi");
  return {v[0], v[1]};
}

std::string range_text(const synth::Range& r) { return num(r.lo) + " " + num(r.hi); }

std::string list_text(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : " ") + num(x);
  return out;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw ConfigError(what + " not found: " + p.string());
}

void ensure_out(const Common& c) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (!fs::is_directory(c.out)) throw FormatError("cannot create output directory " + c.out.string());
}

SpectralCube load_cube_on(const fs::path& p, const Settings& s, bool grid_flag) {
  SpectralCube cube = io::load_cube(p);
  if (grid_flag && !(cube.grid() == *s.grid)) {
    throw DimensionError("cube " + p.string() + " is not on the --grid wavenumber axis");
  }
  return cube;
}

Spectrum reference_for(const std::optional<fs::path>& path, const SpectralCube& cube, const Settings& s) {
  if (!path) return synth::mean_reference(s.templates, cube.grid_ptr());
  Spectrum ref = io::load_spectrum_csv(*path);
  if (!(ref.grid() == cube.grid())) throw DimensionError("reference is not on the cube's wavenumber grid");
  return Spectrum(cube.grid_ptr(), ref.absorbance());
}

void export_spectra(const SpectraMatrix& data, const GridPtr& grid, const std::vector<Index>& which,
                    const std::string& stem, const Common& c, Manifest& m) {
  for (Index i : which) {
    if (i < 0 || i >= data.cols()) throw RangeError("export index " + std::to_string(i) + " out of range");
    char name[64];
    std::snprintf(name, sizeof name, "%s_%04lld.csv", stem.c_str(), static_cast<long long>(i));
    const fs::path p = c.out / name;
    io::save_spectrum_csv(Spectrum(grid, data.col(i)), p);
    m.output(p);
  }
}

void save_matrix_cube(const SpectralCube& like, const SpectraMatrix& data, const fs::path& p, Manifest& m) {
  io::save_cube(SpectralCube(like.width(), like.height(), like.grid_ptr(), data), p);
  m.output(p);
}

void save_text(const fs::path& p, const std::string& text, Manifest& m) {
  io::write_text_file(p, text);
  m.output(p);
}

// Minimal numeric CSV: header line, then rows of numbers.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  Index column(const std::string& name, const fs::path& origin) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<Index>(i);
    }
    throw ParseError(origin.string() + ": missing column '" + name + "'");
  }
  Vector values(Index col) const {
    Vector v(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) v[static_cast<Index>(r)] = rows[r][static_cast<std::size_t>(col)];
    return v;
  }
};

Table read_table(const fs::path& p) {
  std::istringstream in(io::read_text_file(p));
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(p.string() + ": empty file");
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) t.header.push_back(cell);
  for (int n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream rs(line);
    for (std::string cell; std::getline(rs, cell, ',');) {
      row.push_back(parse_number(cell, p.string() + ":" + std::to_string(n)));
    }
    if (row.size() != t.header.size()) throw ParseError(p.string() + ":" + std::to_string(n) + ": wrong column count");
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw ParseError(p.string() + ": no data rows");
  return t;
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

WavenumberGrid parse_grid_flag(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  for (std::string cell; std::getline(ss, cell, ':');) v.push_back(parse_number(cell, "--grid"));
  if (v.size() != 3) throw GridError("--grid must be first:last:step");
  return WavenumberGrid::uniform(v[0], v[1], v[2]);
}

Settings load_settings(const Common& common) {
  KeyValueConfig cfg;
  if (common.config) {
    require_file(*common.config, "config file");
    cfg = KeyValueConfig::load(*common.config);
  }
  Settings s;
  if (common.grid) {
    s.grid = make_grid(parse_grid_flag(*common.grid));
  } else if (cfg.section("grid")) {
    s.grid = make_grid(WavenumberGrid::uniform(cfg.get_double("grid", "first", 950.0),
                                               cfg.get_double("grid", "last", 1800.0),
                                               cfg.get_double("grid", "step", 2.0)));
  } else {
    s.grid = make_grid(WavenumberGrid::default_grid());
  }

  bool has_classes = false;
  for (const auto& sec : cfg.sections()) has_classes |= sec.name.rfind("class", 0) == 0;
  s.templates = has_classes ? synth::templates_from_config(cfg) : synth::default_templates();
  for (const auto& t : s.templates) t.validate(*s.grid);

  auto& d = s.sampler;
  d.radius_um = range_from(cfg, "radius_um", d.radius_um);
  d.n_avg = range_from(cfg, "n_avg", d.n_avg);
  d.scatter_weight = range_from(cfg, "scatter_weight", d.scatter_weight);
  d.baseline_offset = range_from(cfg, "baseline_offset", d.baseline_offset);
  d.baseline_slope = range_from(cfg, "baseline_slope", d.baseline_slope);
  d.multiplicative = range_from(cfg, "multiplicative", d.multiplicative);
  d.noise_sigma = cfg.get_double("synth", "noise_sigma", d.noise_sigma);
  if (!(d.noise_sigma >= 0.0)) throw ConfigError("synth.noise_sigma must be >= 0");
  s.per_class = static_cast<Index>(cfg.get_int("synth", "per_class", s.per_class));
  s.synth_seed = static_cast<std::uint64_t>(cfg.get_int("synth", "seed", static_cast<long long>(s.synth_seed)));

  auto& o = s.oracle;
  o.iterations = static_cast<int>(cfg.get_int("oracle", "iterations", o.iterations));
  o.h_floor = cfg.get_double("oracle", "h_floor", o.h_floor);
  o.reference_blend = cfg.get_double("oracle", "reference_blend", o.reference_blend);
  o.curves.resonant = cfg.get_bool("oracle", "resonant", o.curves.resonant);
  o.curves.kk_scale = cfg.get_double("oracle", "kk_scale", o.curves.kk_scale);
  o.curves.n_components = static_cast<Index>(cfg.get_int("oracle", "components", o.curves.n_components));
  o.curves.radius_um = cfg.get_list("oracle", "radius_um", o.curves.radius_um);
  o.curves.index = cfg.get_list("oracle", "index", o.curves.index);
  o.validate(s.grid->size());

  s.network = nn::NetworkConfig::from_config(cfg);

  s.mc_passes = static_cast<int>(cfg.get_int("uncertainty", "passes", s.mc_passes));
  s.mc_p = cfg.get_double("uncertainty", "p", s.mc_p);
  s.mc_z = cfg.get_double("uncertainty", "z", s.mc_z);
  s.mc_seed = static_cast<std::uint64_t>(cfg.get_int("uncertainty", "seed", static_cast<long long>(s.mc_seed)));
  s.bench_runs = static_cast<int>(cfg.get_int("bench", "runs", s.bench_runs));
  s.window.lo = cfg.get_double("eval", "window_lo", s.window.lo);
  s.window.hi = cfg.get_double("eval", "window_hi", s.window.hi);

  if (common.seed) {
    s.synth_seed = *common.seed;
    s.network.seed = *common.seed;
    s.mc_seed = *common.seed;
  }
  if (common.threads < 1) throw ConfigError("--threads must be >= 1");
  return s;
}

KeyValueConfig settings_to_config(const Settings& s) {
  KeyValueConfig cfg = synth::templates_to_config(s.templates);
  cfg.set("grid", "first", num(s.grid->front()));
  cfg.set("grid", "last", num(s.grid->back()));
  cfg.set("grid", "step", s.grid->is_uniform() ? num(s.grid->step()) : "non-uniform");
  cfg.set("synth", "per_class", std::to_string(s.per_class));
  cfg.set("synth", "seed", std::to_string(s.synth_seed));
  cfg.set("synth", "noise_sigma", num(s.sampler.noise_sigma));
  cfg.set("synth", "radius_um", range_text(s.sampler.radius_um));
  cfg.set("synth", "n_avg", range_text(s.sampler.n_avg));
  cfg.set("synth", "scatter_weight", range_text(s.sampler.scatter_weight));
  cfg.set("synth", "baseline_offset", range_text(s.sampler.baseline_offset));
  cfg.set("synth", "baseline_slope", range_text(s.sampler.baseline_slope));
  cfg.set("synth", "multiplicative", range_text(s.sampler.multiplicative));
  cfg.set("oracle", "iterations", std::to_string(s.oracle.iterations));
  cfg.set("oracle", "h_floor", num(s.oracle.h_floor));
  cfg.set("oracle", "reference_blend", num(s.oracle.reference_blend));
  cfg.set("oracle", "resonant", s.oracle.curves.resonant ? "true" : "false");
  cfg.set("oracle", "kk_scale", num(s.oracle.curves.kk_scale));
  cfg.set("oracle", "components", std::to_string(s.oracle.curves.n_components));
  cfg.set("oracle", "radius_um", list_text(s.oracle.curves.radius_um));
  cfg.set("oracle", "index", list_text(s.oracle.curves.index));
  s.network.to_config(cfg);
  cfg.set("uncertainty", "passes", std::to_string(s.mc_passes));
  cfg.set("uncertainty", "p", num(s.mc_p));
  cfg.set("uncertainty", "z", num(s.mc_z));
  cfg.set("uncertainty", "seed", std::to_string(s.mc_seed));
  cfg.set("bench", "runs", std::to_string(s.bench_runs));
  cfg.set("eval", "window_lo", num(s.window.lo));
  cfg.set("eval", "window_hi", num(s.window.hi));
  return cfg;
}

Manifest::Manifest(std::string command, const Common& common, const Settings& settings)
    : command_(std::move(command)),
      out_(common.out),
      argv_(common.argv),
      config_(settings_to_config(settings).dump()),
      started_(utc_now()),
      t0_(std::chrono::steady_clock::now()) {}

void Manifest::seed(const std::string& name, std::uint64_t value) { seeds_.emplace_back(name, value); }
void Manifest::input(const fs::path& p) { inputs_.push_back(p.string()); }
void Manifest::output(const fs::path& p) { outputs_.push_back(p.string()); }

void Manifest::write() const {
  json j;
  j["command"] = command_;
  j["tool_version"] = kVersion;
  j["argv"] = argv_;
  j["config"] = config_;
  j["seeds"] = json::object();
  for (const auto& [k, v] : seeds_) j["seeds"][k] = v;
  j["inputs"] = inputs_;
  j["outputs"] = outputs_;
  j["started_utc"] = started_;
  j["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  io::write_text_file(out_ / "manifest.json", j.dump(1));
}

// ---- commands -------------------------------------------------------------------

void cmd_synth(const Common& c, const SynthArgs& a) {
  Settings s = load_settings(c);
  if (a.per_class) s.per_class = *a.per_class;
  if (a.noise) s.sampler.noise_sigma = *a.noise;
  if (a.classes) {
    if (*a.classes < 1 || *a.classes > static_cast<int>(s.templates.size())) {
      throw ConfigError("--classes must lie in [1, " + std::to_string(s.templates.size()) + "]");
    }
    s.templates.resize(static_cast<std::size_t>(*a.classes));
  }
  if (s.per_class < 1) throw ConfigError("--per-class must be >= 1");
  if (a.width.has_value() != a.height.has_value()) throw ConfigError("--width and --height go together");
  if (a.width && (*a.width < 1 || *a.height < 1)) throw ConfigError("--width and --height must be >= 1");
  synth::DistortionSampler sampler = s.sampler;
  if (a.no_distortion) {
    const double noise = sampler.noise_sigma;
    sampler = synth::DistortionSampler::none();
    sampler.noise_sigma = a.noise ? noise : 0.0;
  }
  ensure_out(c);
  Manifest m("synth", c, s);
  m.seed("synth", s.synth_seed);

  const auto k = static_cast<Index>(s.templates.size());
  Index n = s.per_class * k;
  Index per_class = s.per_class;
  if (a.width) {
    n = *a.width * *a.height;
    per_class = (n + k - 1) / k;
  }
  LabeledDataset ds = synth::generate_dataset(s.templates, per_class, sampler, s.grid, s.synth_seed, c.threads);
  const Index w = a.width ? *a.width : n;
  const Index h = a.height ? *a.height : 1;
  const SpectralCube like(w, h, s.grid, SpectraMatrix::Zero(s.grid->size(), n));
  save_matrix_cube(like, ds.raw.leftCols(n), c.out / "raw.cube", m);
  save_matrix_cube(like, ds.pure->leftCols(n), c.out / "pure.cube", m);
  std::vector<int> labels(ds.labels.begin(), ds.labels.begin() + n);
  io::save_labels_csv(labels, c.out / "labels.csv");
  m.output(c.out / "labels.csv");
  io::save_spectrum_csv(synth::mean_reference(s.templates, s.grid), c.out / "reference.csv");
  m.output(c.out / "reference.csv");
  save_text(c.out / "templates.cfg", synth::templates_to_config(s.templates).dump(), m);
  export_spectra(ds.raw, s.grid, a.exports, "raw", c, m);
  m.write();
  std::cout << "synth: " << n << " spectra (" << k << " classes) on " << s.grid->size() << " bands -> "
            << c.out.string() << "\n";
}

void cmd_correct(const Common& c, const CorrectArgs& a) {
  require_file(a.input, "input cube");
  if (a.reference) require_file(*a.reference, "reference spectrum");
  if (a.method != "oracle" && a.method != "surrogate") throw ConfigError("--method must be oracle or surrogate");
  if (a.method == "surrogate") {
    if (!a.model) throw ConfigError("--method surrogate needs --model");
    require_file(*a.model, "model");
  }
  Settings s = load_settings(c);
  if (a.iterations) s.oracle.iterations = *a.iterations;
  s.oracle.validate(s.grid->size());
  const SpectralCube cube = load_cube_on(a.input, s, c.grid.has_value());
  ensure_out(c);
  Manifest m("correct", c, s);
  m.input(a.input);

  SpectraMatrix out;
  if (a.method == "oracle") {
    if (a.reference) m.input(*a.reference);
    const Spectrum ref = reference_for(a.reference, cube, s);
    const CubeCorrection r = correct_cube(cube, ref, s.oracle, c.threads);
    out = r.cube.data();
    json j;
    j["method"] = "oracle";
    j["iterations"] = s.oracle.iterations;
    j["pixels"] = cube.pixels();
    j["clamped_pixels"] = r.clamped_pixels;
    j["failures"] = json::array();
    for (const auto& f : r.failures) j["failures"].push_back({{"pixel", f.pixel}, {"message", f.message}});
    std::vector<double> mean_res(static_cast<std::size_t>(s.oracle.iterations), 0.0);
    Index ok = 0;
    for (const auto& res : r.residuals) {
      if (res.size() != mean_res.size()) continue;
      for (std::size_t k = 0; k < res.size(); ++k) mean_res[k] += res[k];
      ++ok;
    }
    for (double& v : mean_res) v = ok ? v / static_cast<double>(ok) : 0.0;
    j["mean_residual_per_iteration"] = mean_res;
    save_text(c.out / "correction.json", j.dump(1), m);
    if (!r.failures.empty()) std::cerr << "correct: " << r.failures.size() << " pixel(s) failed, raw values kept\n";
  } else {
    m.input(*a.model);
    const auto model = nn::load_model(*a.model);
    out = bench::surrogate_correct(model, cube.data(), c.threads);
  }
  save_matrix_cube(cube, out, c.out / "corrected.cube", m);
  export_spectra(out, cube.grid_ptr(), a.exports, "corrected", c, m);
  m.write();
  std::cout << "correct: " << cube.pixels() << " spectra (" << a.method << ") -> " << c.out.string() << "\n";
}

void cmd_train(const Common& c, const TrainArgs& a) {
  require_file(a.raw, "raw cube");
  require_file(a.corrected, "corrected cube");
  if (a.pretrain_raw) require_file(*a.pretrain_raw, "pretraining cube");
  const Settings s = load_settings(c);
  const SpectralCube raw = load_cube_on(a.raw, s, c.grid.has_value());
  const SpectralCube corr = load_cube_on(a.corrected, s, c.grid.has_value());
  if (!(raw.grid() == corr.grid()) || raw.pixels() != corr.pixels()) {
    throw DimensionError("raw and corrected cubes do not pair up");
  }
  nn::NetworkConfig net = s.network;
  net.layer_sizes.front() = raw.bands();
  net.layer_sizes.back() = raw.bands();
  net.validate();
  ensure_out(c);
  Manifest m("train", c, s);
  m.seed("network", net.seed);
  m.input(a.raw);
  m.input(a.corrected);

  std::optional<SpectralCube> pre;
  if (a.pretrain_raw) {
    pre = load_cube_on(*a.pretrain_raw, s, c.grid.has_value());
    if (!(pre->grid() == raw.grid())) throw DimensionError("pretraining cube is on a different grid");
    m.input(*a.pretrain_raw);
  }
  LabeledDataset train;
  train.grid = raw.grid_ptr();
  train.raw = raw.data();
  train.corrected = corr.data();
  std::vector<std::vector<double>> pre_traces;
  const nn::RawSpectra pretrain_set(pre ? pre->data() : raw.data());
  nn::ModelParameters model = nn::stack_pretrain(pretrain_set, net, &pre_traces);
  std::vector<double> ft_trace;
  model = nn::finetune_regression(model, train, net, &ft_trace);
  nn::save_model(model, c.out / "model.json");
  m.output(c.out / "model.json");

  const auto fit = eval::rmse_dataset(model, corr.data(), raw.data(), c.threads);
  json j;
  j["pretrain_loss"] = pre_traces;
  j["finetune_loss"] = ft_trace;
  j["train_rmse_mean"] = fit.mean;
  j["n_train"] = raw.pixels();
  save_text(c.out / "training.json", j.dump(1), m);
  m.write();
  std::cout << "train: " << raw.pixels() << " pairs, train RMSE " << fit.mean << " AU -> " << c.out.string() << "\n";
}

void cmd_infer(const Common& c, const InferArgs& a) {
  require_file(a.model, "model");
  require_file(a.input, "input cube");
  const Settings s = load_settings(c);
  const SpectralCube cube = load_cube_on(a.input, s, c.grid.has_value());
  const auto model = nn::load_model(a.model);
  ensure_out(c);
  Manifest m("infer", c, s);
  m.input(a.model);
  m.input(a.input);
  const SpectraMatrix out = bench::surrogate_correct(model, cube.data(), c.threads);
  save_matrix_cube(cube, out, c.out / "surrogate.cube", m);
  export_spectra(out, cube.grid_ptr(), a.exports, "surrogate", c, m);
  m.write();
  std::cout << "infer: " << cube.pixels() << " spectra -> " << c.out.string() << "\n";
}

void cmd_uncertainty(const Common& c, const UncertaintyArgs& a) {
  require_file(a.model, "model");
  require_file(a.input, "input cube");
  if (a.oracle) require_file(*a.oracle, "oracle cube");
  Settings s = load_settings(c);
  if (a.passes) s.mc_passes = *a.passes;
  if (a.p) s.mc_p = *a.p;
  if (a.z) s.mc_z = *a.z;
  const SpectralCube cube = load_cube_on(a.input, s, c.grid.has_value());
  const auto model = nn::load_model(a.model);
  std::optional<SpectralCube> oracle;
  if (a.oracle) {
    oracle = load_cube_on(*a.oracle, s, c.grid.has_value());
    if (!(oracle->grid() == cube.grid()) || oracle->pixels() != cube.pixels()) {
      throw DimensionError("oracle cube does not pair up with the input cube");
    }
  }
  for (Index i : a.exports) {
    if (i < 0 || i >= cube.pixels()) throw RangeError("export index " + std::to_string(i) + " out of range");
  }
  ensure_out(c);
  Manifest m("uncertainty", c, s);
  m.seed("dropout", s.mc_seed);
  m.input(a.model);
  m.input(a.input);
  if (a.oracle) m.input(*a.oracle);

  const auto results = unc::mc_dropout_dataset(model, cube.grid_ptr(), cube.data(), s.mc_passes, s.mc_p, s.mc_z,
                                              s.mc_seed, c.threads);
  for (Index i : a.exports) {
    char name[64];
    std::snprintf(name, sizeof name, "uncertainty_%04lld.csv", static_cast<long long>(i));
    save_text(c.out / name, unc::uncertainty_csv(results[static_cast<std::size_t>(i)]), m);
  }
  Vector mean_std = Vector::Zero(cube.bands());
  for (const auto& r : results) mean_std += r.std_dev();
  mean_std /= static_cast<double>(results.size());

  json j;
  j["passes"] = s.mc_passes;
  j["dropout_p"] = s.mc_p;
  j["z"] = s.mc_z;
  j["n_spectra"] = cube.pixels();
  Index widest = 0;
  mean_std.maxCoeff(&widest);
  j["widest_mean_std_wavenumber"] = cube.grid()[widest];
  std::string pooled = oracle ? "wavenumber,mean_std,mean_abs_error\n" : "wavenumber,mean_std\n";
  Vector mae;
  if (oracle) {
    std::vector<Spectrum> target;
    target.reserve(static_cast<std::size_t>(cube.pixels()));
    for (Index i = 0; i < cube.pixels(); ++i) target.push_back(oracle->pixel(i));
    const auto al = unc::uncertainty_error_alignment(results, target);
    j["spearman_std_vs_abs_error"] = al.correlation;
    mae = al.mean_abs_error;
  }
  char buf[96];
  for (Index i = 0; i < cube.bands(); ++i) {
    if (oracle) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", cube.grid()[i], mean_std[i], mae[i]);
    } else {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", cube.grid()[i], mean_std[i]);
    }
    pooled += buf;
  }
  save_text(c.out / "pooled_std.csv", pooled, m);
  save_text(c.out / "uncertainty.json", j.dump(1), m);
  m.write();
  std::cout << "uncertainty: " << cube.pixels() << " spectra x " << s.mc_passes << " passes";
  if (j.contains("spearman_std_vs_abs_error")) std::cout << ", Spearman " << j["spearman_std_vs_abs_error"].get<double>();
  std::cout << " -> " << c.out.string() << "\n";
}

void cmd_eval(const Common& c, const EvalArgs& a) {
  require_file(a.oracle, "oracle cube");
  require_file(a.surrogate, "surrogate cube");
  if (a.labels) require_file(*a.labels, "labels");
  if (a.train_oracle.has_value() != a.train_labels.has_value()) {
    throw ConfigError("--train-oracle and --train-labels go together");
  }
  if (a.train_oracle) {
    require_file(*a.train_oracle, "training oracle cube");
    require_file(*a.train_labels, "training labels");
  }
  const Settings s = load_settings(c);
  const SpectralCube oracle = load_cube_on(a.oracle, s, c.grid.has_value());
  const SpectralCube surrogate = load_cube_on(a.surrogate, s, c.grid.has_value());
  if (!(oracle.grid() == surrogate.grid()) || oracle.pixels() != surrogate.pixels()) {
    throw DimensionError("oracle and surrogate cubes do not pair up");
  }
  ensure_out(c);
  Manifest m("eval", c, s);
  m.input(a.oracle);
  m.input(a.surrogate);

  const auto rmse = eval::rmse_pairs(oracle.data(), surrogate.data());
  save_text(c.out / "rmse.json", eval::rmse_report_json(rmse), m);

  json summary;
  summary["rmse_mean"] = rmse.mean;
  summary["rmse_median"] = rmse.median;
  summary["rmse_p95"] = rmse.p95;
  summary["paper_style_sum"] = rmse.paper_style_sum;

  std::optional<eval::CentroidClassifier> clf;
  if (a.train_oracle) {
    m.input(*a.train_oracle);
    m.input(*a.train_labels);
    const SpectralCube train = load_cube_on(*a.train_oracle, s, c.grid.has_value());
    if (!(train.grid() == oracle.grid())) throw DimensionError("training cube is on a different grid");
    clf = eval::train_downstream(train.grid_ptr(), train.data(), io::load_labels_csv(*a.train_labels));
    summary["classifier_training"] = "held-out";
  } else if (a.labels) {
    m.input(*a.labels);
    clf = eval::train_downstream(oracle.grid_ptr(), oracle.data(), io::load_labels_csv(*a.labels));
    summary["classifier_training"] = "in-sample";
  }
  if (clf) {
    const auto ag = eval::downstream_agreement(*clf, oracle.data(), surrogate.data(), c.threads);
    save_text(c.out / "agreement.json", eval::agreement_report_json(ag), m);
    save_text(c.out / "confusion.csv", eval::confusion_csv(ag), m);
    summary["agreement_accuracy"] = ag.accuracy;
    eval::write_class_map_ppm(clf->classify_all(oracle.data(), c.threads), oracle.width(), oracle.height(),
                              c.out / "classmap_oracle.ppm");
    m.output(c.out / "classmap_oracle.ppm");
    eval::write_class_map_ppm(clf->classify_all(surrogate.data(), c.threads), oracle.width(), oracle.height(),
                              c.out / "classmap_surrogate.ppm");
    m.output(c.out / "classmap_surrogate.ppm");
    save_text(c.out / "classmap_legend.csv", eval::class_legend_csv(clf->class_ids()), m);
    if (a.labels) {
      const auto truth = io::load_labels_csv(*a.labels);
      if (static_cast<Index>(truth.size()) == oracle.pixels()) {
        const auto pred = clf->classify_all(oracle.data(), c.threads);
        Index hit = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) hit += pred[i] == truth[i];
        summary["oracle_label_accuracy"] = static_cast<double>(hit) / static_cast<double>(truth.size());
      }
    }
  }

  std::string shifts = "index,shift_cm\n";
  double sum = 0.0, sum_abs = 0.0;
  Index valid = 0, skipped = 0;
  char buf[64];
  for (Index i = 0; i < oracle.pixels(); ++i) {
    try {
      const double d = eval::band_shift(oracle.pixel(i), surrogate.pixel(i), s.window);
      std::snprintf(buf, sizeof buf, "%lld,%.17g\n", static_cast<long long>(i), d);
      shifts += buf;
      sum += d;
      sum_abs += std::abs(d);
      ++valid;
    } catch (const PeakOnBoundary&) {
      ++skipped;
    }
  }
  save_text(c.out / "band_shift.csv", shifts, m);
  summary["band_shift_window"] = {s.window.lo, s.window.hi};
  summary["band_shift_mean"] = valid ? sum / static_cast<double>(valid) : 0.0;
  summary["band_shift_mean_abs"] = valid ? sum_abs / static_cast<double>(valid) : 0.0;
  summary["band_shift_valid"] = valid;
  summary["band_shift_peak_on_boundary"] = skipped;
  save_text(c.out / "eval.json", summary.dump(1), m);
  m.write();
  std::cout << "eval: RMSE mean " << rmse.mean << " AU";
  if (summary.contains("agreement_accuracy")) std::cout << ", agreement " << summary["agreement_accuracy"].get<double>();
  std::cout << " -> " << c.out.string() << "\n";
}

void cmd_bench(const Common& c, const BenchArgs& a) {
  require_file(a.input, "input cube");
  require_file(a.model, "model");
  if (a.reference) require_file(*a.reference, "reference spectrum");
  Settings s = load_settings(c);
  if (a.runs) s.bench_runs = *a.runs;
  if (a.iterations) s.oracle.iterations = *a.iterations;
  s.oracle.validate(s.grid->size());
  if (s.bench_runs < 1) throw ConfigError("--runs must be >= 1");
  const SpectralCube cube = load_cube_on(a.input, s, c.grid.has_value());
  auto model = std::make_shared<const nn::ModelParameters>(nn::load_model(a.model));
  const Spectrum ref = reference_for(a.reference, cube, s);
  ensure_out(c);
  Manifest m("bench", c, s);
  m.input(a.input);
  m.input(a.model);
  if (a.reference) m.input(*a.reference);

  std::vector<bench::BenchReport> reports;
  reports.push_back(bench::run_bench(bench::OracleCorrector(ref, s.oracle, 1), cube, s.bench_runs));
  reports.push_back(bench::run_bench(bench::SurrogateCorrector(model, 1), cube, s.bench_runs));
  if (a.parallel && c.threads > 1) {
    reports.push_back(bench::run_bench(bench::OracleCorrector(ref, s.oracle, c.threads), cube, s.bench_runs));
    reports.push_back(bench::run_bench(bench::SurrogateCorrector(model, c.threads), cube, s.bench_runs));
  }
  const auto speedups = bench::compare(reports);
  save_text(c.out / "bench.json", bench::report_json(reports, speedups), m);
  const std::string table = bench::report_table(reports, speedups);
  save_text(c.out / "bench.txt", table, m);
  m.write();
  std::cout << table;
}

void cmd_plot(const Common& c, const PlotArgs& a) {
  if (a.inputs.empty()) throw ConfigError("plot needs at least one --input");
  for (const auto& p : a.inputs) require_file(p, "plot input");
  if (!a.labels.empty() && a.labels.size() != a.inputs.size()) throw ConfigError("--label count must match --input");
  if (a.kind != "spectra" && a.kind != "shift" && a.kind != "ci") throw ConfigError("--kind must be spectra, shift or ci");
  const Settings s = load_settings(c);
  auto label_of = [&](std::size_t i) { return a.labels.empty() ? a.inputs[i].stem().string() : a.labels[i]; };

  PlotSpec spec;
  std::vector<Series> series;
  std::vector<BandSeries> bands;
  json summary;
  summary["kind"] = a.kind;
  if (a.kind == "ci") {
    spec.title = "Mean prediction with confidence band";
    summary["series"] = json::array();
    for (std::size_t i = 0; i < a.inputs.size(); ++i) {
      const Table t = read_table(a.inputs[i]);
      const Vector x = t.values(t.column("wavenumber", a.inputs[i]));
      const Vector mean = t.values(t.column("mean", a.inputs[i]));
      const Vector lo = t.values(t.column("ci_low", a.inputs[i]));
      const Vector hi = t.values(t.column("ci_high", a.inputs[i]));
      bands.push_back({label_of(i) + " band", x, lo, hi});
      series.push_back({label_of(i), x, mean});
      Index widest = 0;
      (hi - lo).maxCoeff(&widest);
      summary["series"].push_back(
          {{"label", label_of(i)}, {"widest_band_wavenumber", x[widest]}, {"widest_band_width", hi[widest] - lo[widest]}});
    }
  } else {
    spec.title = a.kind == "shift" ? "Band position near amide I" : "Spectra";
    if (a.kind == "shift") spec.x_range = std::make_pair(s.window.lo, s.window.hi);
    summary["series"] = json::array();
    for (std::size_t i = 0; i < a.inputs.size(); ++i) {
      const Spectrum sp = io::load_spectrum_csv(a.inputs[i]);
      series.push_back({label_of(i), sp.grid().values(), sp.absorbance()});
      json entry{{"label", label_of(i)}};
      if (a.kind == "shift") {
        const double peak = eval::peak_position(sp, s.window);
        spec.markers.push_back(peak);
        entry["peak_position"] = peak;
      }
      summary["series"].push_back(std::move(entry));
    }
  }
  ensure_out(c);
  Manifest m("plot", c, s);
  for (const auto& p : a.inputs) m.input(p);
  save_text(c.out / (a.name + ".svg"), render_svg(spec, series, bands), m);
  save_text(c.out / (a.name + ".csv"), plot_csv(spec, series, bands), m);
  save_text(c.out / (a.name + ".json"), summary.dump(1), m);
  m.write();
  std::cout << "plot: " << a.kind << " -> " << (c.out / (a.name + ".svg")).string() << "\n";
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const CLI::Error*>(&e)) return 1;
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  return 2;
}

}  // namespace rmies::cli
