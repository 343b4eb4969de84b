// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rmies/network.hpp"
#include "rmies/oracle.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace rmies::bench {

/// Something that maps a cube of raw spectra to corrected spectra.
class Corrector {
 public:
  virtual ~Corrector() = default;
  virtual std::string id() const = 0;
  virtual int threads() const = 0;
  /// bands x pixels output. Errors propagate and abort the benchmark.
  virtual SpectraMatrix correct(const SpectralCube& cube) const = 0;
};

/// Iterative resonant correction of every pixel. A failed pixel raises
/// NumericalError naming it.
class OracleCorrector final : public Corrector {
 public:
  OracleCorrector(Spectrum reference, RmiesConfig cfg, int threads = 1);
  std::string id() const override;
  int threads() const override { return threads_; }
  SpectraMatrix correct(const SpectralCube& cube) const override;

 private:
  Spectrum reference_;
  RmiesConfig cfg_;
  int threads_;
};

/// Surrogate forward pass, one spectrum at a time (bit-identical to
/// nn::forward for any thread count).
class SurrogateCorrector final : public Corrector {
 public:
  explicit SurrogateCorrector(std::shared_ptr<const nn::ModelParameters> model, int threads = 1);
  std::string id() const override;
  int threads() const override { return threads_; }
  SpectraMatrix correct(const SpectralCube& cube) const override;

 private:
  std::shared_ptr<const nn::ModelParameters> model_;
  int threads_;
};

/// Column-wise surrogate inference over a bands x n matrix.
SpectraMatrix surrogate_correct(const nn::ModelParameters& model, const Eigen::Ref<const SpectraMatrix>& raw,
                                int threads = 1);

struct BenchReport {
  std::string corrector;
  int threads = 1;
  Index n_spectra = 0;
  int runs = 0;
  std::vector<double> run_seconds;  // timed runs only
  double total_seconds_mean = 0.0;
  double total_seconds_std = 0.0;   // sample std, 0 for one run
  double per_spectrum_us_mean = 0.0;
  double per_spectrum_us_std = 0.0;
  std::string checksum;             // of the first timed run's output
  bool outputs_identical = true;    // every timed run matched the checksum
  std::string fingerprint;          // of the input cube

  /// |per_spectrum_us_mean - total_seconds_mean * 1e6 / n| <= 1 %.
  bool consistent() const;
};

/// Hex fingerprint of a cube's grid, shape and data.
std::string cube_fingerprint(const SpectralCube& cube);

/// One untimed warm-up run, then `runs` timed runs on a monotonic clock.
/// ConfigError for runs < 1.
BenchReport run_bench(const Corrector& corrector, const SpectralCube& cube, int runs);

struct Speedup {
  std::string baseline;
  std::string candidate;
  double ratio = 0.0;      // baseline per-spectrum time / candidate per-spectrum time
  double ratio_std = 0.0;  // first-order propagation of both stds
};

/// Ratios of report 0 against every later report. ConfigError with fewer
/// than two reports or mismatched input fingerprints.
std::vector<Speedup> compare(const std::vector<BenchReport>& reports);

std::string report_json(const std::vector<BenchReport>& reports, const std::vector<Speedup>& speedups);
/// Aligned columns with the rows "Time for val.-set" and "Time per spectrum".
std::string report_table(const std::vector<BenchReport>& reports, const std::vector<Speedup>& speedups);

}  // namespace rmies::bench
