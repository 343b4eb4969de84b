// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rmies/io.hpp"
#include "rmies/network.hpp"
#include "rmies/oracle.hpp"
#include "rmies/synth.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>
#include <thread>

namespace rmies::testing {

inline int worker_threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

/// Default templates, default distortions, oracle targets at the default
/// configuration and a surrogate trained with the default network settings.
struct DefaultExperiment {
  GridPtr grid;
  Spectrum reference;
  LabeledDataset train;
  LabeledDataset val;
  nn::ModelParameters model;
  double oracle_seconds = 0.0;
  double train_seconds = 0.0;
};

inline SpectraMatrix oracle_targets(const LabeledDataset& ds, const Spectrum& ref, int threads) {
  const auto r = correct_cube(io::as_strip_cube(ds.grid, ds.raw), ref, RmiesConfig{}, threads);
  if (!r.failures.empty()) throw std::runtime_error("oracle failed on " + std::to_string(r.failures.size()) + " spectra");
  return r.cube.data();
}

/// 1000 training and 200 validation spectra per class (5000 / 1000).
inline DefaultExperiment run_default_experiment(int threads = worker_threads()) {
  using clock = std::chrono::steady_clock;
  const auto templates = synth::default_templates();
  const GridPtr grid = make_grid(WavenumberGrid::default_grid());
  DefaultExperiment e{grid, synth::mean_reference(templates, grid), {}, {}, {}};
  e.train = synth::generate_dataset(templates, 1000, synth::DistortionSampler{}, e.grid, 101, threads);
  e.val = synth::generate_dataset(templates, 200, synth::DistortionSampler{}, e.grid, 202, threads);

  auto t0 = clock::now();
  e.train.corrected = oracle_targets(e.train, e.reference, threads);
  e.val.corrected = oracle_targets(e.val, e.reference, threads);
  e.oracle_seconds = std::chrono::duration<double>(clock::now() - t0).count();

  t0 = clock::now();
  const nn::NetworkConfig cfg;
  const auto pre = nn::stack_pretrain(nn::RawSpectra::of(e.train), cfg);
  e.model = nn::finetune_regression(pre, e.train, cfg);
  e.train_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return e;
}

}  // namespace rmies::testing
