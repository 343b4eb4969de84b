// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rmies/config.hpp"
#include "rmies/evalkit.hpp"
#include "rmies/network.hpp"
#include "rmies/oracle.hpp"
#include "rmies/synth.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rmies::cli {

namespace fs = std::filesystem;

/// Flags shared by every command.
struct Common {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> grid;  // "first:last:step"
  fs::path out = ".";
  int threads = 1;
  std::vector<std::string> argv;    // echoed into the manifest
};

/// Everything a command may need from the configuration file. Flags in
/// `Common` win over the file.
struct Settings {
  GridPtr grid;
  std::vector<synth::ClassTemplate> templates;
  synth::DistortionSampler sampler;
  Index per_class = 200;
  std::uint64_t synth_seed = 1;
  RmiesConfig oracle;
  nn::NetworkConfig network;
  int mc_passes = 100;
  double mc_p = 0.5;
  double mc_z = 1.96;
  std::uint64_t mc_seed = 1;
  int bench_runs = 10;
  eval::Window window;
};

/// Schema (all sections optional):
///   [grid] first, last, step
///   [synth] per_class, seed, noise_sigma, radius_um, n_avg, scatter_weight,
///           baseline_offset, baseline_slope, multiplicative (each "lo hi")
///   [class N] template bands, see synth::templates_from_config
///   [oracle] iterations, h_floor, reference_blend, resonant, kk_scale,
///            components, radius_um, index (lists)
///   [network] see nn::NetworkConfig::from_config
///   [uncertainty] passes, p, z, seed
///   [bench] runs
///   [eval] window_lo, window_hi
Settings load_settings(const Common& common);
KeyValueConfig settings_to_config(const Settings& s);

/// GridError unless `text` is "first:last:step".
WavenumberGrid parse_grid_flag(const std::string& text);

/// One JSON reproducibility record per command run.
class Manifest {
 public:
  Manifest(std::string command, const Common& common, const Settings& settings);
  void seed(const std::string& name, std::uint64_t value);
  void input(const fs::path& p);
  void output(const fs::path& p);
  /// Writes <out>/manifest.json.
  void write() const;

 private:
  std::string command_;
  fs::path out_;
  std::vector<std::string> argv_;
  std::string config_;
  std::vector<std::pair<std::string, std::uint64_t>> seeds_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
  std::string started_;
  std::chrono::steady_clock::time_point t0_;
};

struct SynthArgs {
  std::optional<int> classes;
  std::optional<Index> per_class;
  std::optional<Index> width;   // raster cube instead of an n x 1 strip
  std::optional<Index> height;
  bool no_distortion = false;
  std::optional<double> noise;
  std::vector<Index> exports;
};

struct CorrectArgs {
  fs::path input;
  std::string method = "oracle";  // oracle | surrogate
  std::optional<int> iterations;
  std::optional<fs::path> reference;
  std::optional<fs::path> model;
  std::vector<Index> exports;
};

struct TrainArgs {
  fs::path raw;
  fs::path corrected;
  std::optional<fs::path> pretrain_raw;
};

struct InferArgs {
  fs::path model;
  fs::path input;
  std::vector<Index> exports;
};

struct UncertaintyArgs {
  fs::path model;
  fs::path input;
  std::optional<fs::path> oracle;
  std::optional<int> passes;
  std::optional<double> p;
  std::optional<double> z;
  std::vector<Index> exports{0};
};

struct EvalArgs {
  fs::path oracle;
  fs::path surrogate;
  std::optional<fs::path> labels;
  std::optional<fs::path> train_oracle;
  std::optional<fs::path> train_labels;
};

struct BenchArgs {
  fs::path input;
  fs::path model;
  std::optional<int> runs;
  std::optional<int> iterations;
  std::optional<fs::path> reference;
  bool parallel = false;  // extra reports at --threads
};

struct PlotArgs {
  std::string kind = "spectra";  // spectra | shift | ci
  std::vector<fs::path> inputs;
  std::vector<std::string> labels;
  std::string name = "plot";
};

void cmd_synth(const Common& c, const SynthArgs& a);
void cmd_correct(const Common& c, const CorrectArgs& a);
void cmd_train(const Common& c, const TrainArgs& a);
void cmd_infer(const Common& c, const InferArgs& a);
void cmd_uncertainty(const Common& c, const UncertaintyArgs& a);
void cmd_eval(const Common& c, const EvalArgs& a);
void cmd_bench(const Common& c, const BenchArgs& a);
void cmd_plot(const Common& c, const PlotArgs& a);

/// Exit status for an exception: 1 usage/configuration, 2 data or format,
/// 3 numerical failure.
int exit_code_for(const std::exception& e);

}  // namespace rmies::cli
