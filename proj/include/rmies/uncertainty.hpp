// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rmies/network.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace rmies::unc {

struct UncertaintyResult {
  Spectrum mean;
  Vector variance;  // AU^2, across passes (population variance)
  Spectrum ci_low;  // mean - z std
  Spectrum ci_high; // mean + z std
  int passes = 0;
  double dropout_p = 0.0;
  double z = 0.0;

  Vector std_dev() const { return variance.cwiseSqrt(); }
};

/// One inverted-dropout mask per hidden layer for pass `pass`: entries are
/// 0 with probability p and 1 / (1 - p) otherwise. Drawn from
/// derive_seed(seed, kDropout, pass) in layer order.
std::vector<Vector> dropout_masks(const nn::ModelParameters& model, double p, std::uint64_t seed, std::uint64_t pass);

/// T stochastic forward passes with dropout on the hidden activations; mean
/// and variance accumulated in pass order (Welford). ConfigError for T < 2 or
/// p outside [0, 1). With p = 0 the mean equals nn::forward(x) exactly.
UncertaintyResult mc_dropout_predict(const nn::ModelParameters& model, const Spectrum& x, int passes, double p,
                                     double z, std::uint64_t seed, int threads = 1);

/// mc_dropout_predict for every column of `x`; spectrum i uses the seed
/// derive_seed(seed, kDropout, i).
std::vector<UncertaintyResult> mc_dropout_dataset(const nn::ModelParameters& model, const GridPtr& grid,
                                                  const Eigen::Ref<const SpectraMatrix>& x, int passes, double p,
                                                  double z, std::uint64_t seed, int threads = 1);

/// Spearman rank correlation with average ranks for ties. DegenerateInput if
/// either series is constant; DimensionError on length mismatch.
double spearman(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

struct Alignment {
  Vector mean_abs_error;  // per wavenumber, pooled over the dataset
  Vector mean_std;        // per wavenumber
  double correlation = 0.0;
};

/// Spearman correlation between per-wavenumber mean |mean - oracle| and mean
/// predictive std over the dataset.
Alignment uncertainty_error_alignment(const std::vector<UncertaintyResult>& results,
                                      const std::vector<Spectrum>& oracle);

/// `wavenumber,mean,std,ci_low,ci_high` rows at full precision.
std::string uncertainty_csv(const UncertaintyResult& r);
void save_uncertainty_csv(const UncertaintyResult& r, const std::filesystem::path& path);

}  // namespace rmies::unc
