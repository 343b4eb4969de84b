// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rmies/network.hpp"
#include "rmies/spectrum.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace rmies::eval {

struct RmseReport {
  std::vector<double> per_spectrum;  // sqrt(mean_v (a_v - b_v)^2), AU
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;                  // nearest-rank 95th percentile
  double min = 0.0;
  double max = 0.0;
  double paper_style_sum = 0.0;      // sum of per-spectrum Euclidean norms
};

/// Column-by-column comparison of two bands x n matrices. DimensionError on
/// a shape mismatch or an empty set.
RmseReport rmse_pairs(const Eigen::Ref<const SpectraMatrix>& a, const Eigen::Ref<const SpectraMatrix>& b);

/// RMSE of the surrogate's outputs on `raw` against the oracle outputs.
RmseReport rmse_dataset(const nn::ModelParameters& surrogate, const Eigen::Ref<const SpectraMatrix>& oracle,
                        const Eigen::Ref<const SpectraMatrix>& raw, int threads = 1);

/// Nearest-centroid classifier on second-derivative, vector-normalised
/// features. Cosine ties within 1e-12 go to the lowest class id.
class CentroidClassifier {
 public:
  static constexpr const char* kFeatureRecipe = "second-derivative+vector-normalize";
  static constexpr double kTieTolerance = 1e-12;

  CentroidClassifier(GridPtr grid, std::vector<int> class_ids, Matrix centroids);

  /// Unit-norm feature vector of a spectrum on this grid.
  Vector features(const Eigen::Ref<const Vector>& absorbance) const;
  /// DimensionError when the spectrum is not on the classifier grid.
  int classify(const Spectrum& s) const;
  int classify(const Eigen::Ref<const Vector>& absorbance) const;
  std::vector<int> classify_all(const Eigen::Ref<const SpectraMatrix>& spectra, int threads = 1) const;

  const std::vector<int>& class_ids() const { return class_ids_; }
  const Matrix& centroids() const { return centroids_; }  // features x K, unit columns
  const WavenumberGrid& grid() const { return *grid_; }

 private:
  GridPtr grid_;
  std::vector<int> class_ids_;  // ascending
  Matrix centroids_;
};

/// Centroid = normalised mean feature vector per class. ConfigError with
/// fewer than two classes; DimensionError when labels and columns disagree.
CentroidClassifier train_downstream(const GridPtr& grid, const Eigen::Ref<const SpectraMatrix>& corrected,
                                    const std::vector<int>& labels);

struct AgreementReport {
  double accuracy = 0.0;       // trace / n, pixel-weighted
  std::vector<int> class_ids;  // row/column order of `confusion`
  Eigen::MatrixXi confusion;   // rows C(oracle), columns C(surrogate)
  Index n = 0;
};

AgreementReport downstream_agreement(const CentroidClassifier& classifier,
                                     const Eigen::Ref<const SpectraMatrix>& oracle_corrected,
                                     const Eigen::Ref<const SpectraMatrix>& surrogate_corrected, int threads = 1);

struct Window {
  double lo = 1600.0;
  double hi = 1700.0;
};

/// Peak position in `window` by a parabola through the argmax and its two
/// neighbours. PeakOnBoundary if the argmax is the first or last point of the
/// window; RangeError if the window leaves the grid or holds fewer than 3 points.
double peak_position(const Spectrum& s, Window window = {});

/// peak_position(b) - peak_position(a), cm^-1.
double band_shift(const Spectrum& a, const Spectrum& b, Window window = {});

// ---- reports ----------------------------------------------------------------

std::string rmse_report_json(const RmseReport& r);
std::string agreement_report_json(const AgreementReport& r);
/// Header `oracle\surrogate,<ids...>`, then one row of counts per oracle class.
std::string confusion_csv(const AgreementReport& r);

/// Fixed colour per class id (deterministic palette).
std::array<unsigned char, 3> class_colour(int class_id);
/// Binary PPM (P6) of per-pixel class ids, pixel (x, y) at index y * width + x.
void write_class_map_ppm(const std::vector<int>& classes, Index width, Index height,
                         const std::filesystem::path& path);
/// `class_id,r,g,b` rows for the given ids.
std::string class_legend_csv(const std::vector<int>& class_ids);

}  // namespace rmies::eval
