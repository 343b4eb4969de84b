// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rmies/extinction.hpp"
#include "rmies/spectrum.hpp"

#include <optional>
#include <string>
#include <vector>

namespace rmies {

struct MieCurveConfig {
  std::vector<double> radius_um;   // a values, micrometres
  std::vector<double> index;       // n values
  bool resonant = true;
  double kk_scale = 0.1;           // gamma
  Index n_components = 7;          // k

  /// 7 x 7 grid over a in [2, 8] um, n in [1.1, 1.5]; resonant, gamma = 0.1, k = 7.
  static MieCurveConfig defaults();
  /// ConfigError/DomainError on an invalid configuration for `grid_size` bands.
  void validate(Index grid_size) const;
};

/// Rows are extinction curves over `grid`, one per (a, n) pair in
/// radius-major order. In resonant mode the real index follows the reference:
/// n_im = (reference - mean(reference)) / nu scaled to unit peak magnitude,
/// n(nu) = n_avg + gamma * kramers_kronig(n_im).
Matrix build_extinction_database(const WavenumberGrid& grid, const MieCurveConfig& cfg,
                                 const Spectrum* reference = nullptr);

/// gamma * kramers_kronig(n_im) for the resonant index model above.
Vector resonant_index_fluctuation(const Spectrum& reference, double kk_scale);

struct PcaResult {
  Vector mean_curve;
  Matrix components;            // cols x k, orthonormal columns
  Vector explained_variance;    // fraction of total variance per component
};

/// Column-mean-centred SVD; keeps the top k right singular vectors.
/// RankError when fewer than k singular values are numerically nonzero.
PcaResult pca_components(const Eigen::Ref<const Matrix>& rows, Index k);

/// Same subspace as pca_components, computed from the rows x rows Gram
/// matrix by block subspace iteration. This is the path the iterative
/// correction takes, since it rebuilds the PCA for every iteration.
PcaResult leading_components(const Eigen::Ref<const Matrix>& rows, Index k);

struct EmscCoefficients {
  double c = 0.0;            // constant baseline, AU
  double m = 0.0;            // linear baseline, AU per cm^-1
  double h = 0.0;            // reference multiplier
  double mean_weight = 0.0;  // weight of the mean extinction curve (0 when absent)
  Vector g;                  // component weights, AU
  double residual_norm = 0.0;
};

/// Immutable EMSC design: [1, nu, reference, mean curve?, components...].
/// The least-squares factorisation is built once and shared by all fits.
class EmscBasis {
 public:
  static constexpr double kMaxCondition = 1e12;

  /// `components` is bands x k; its columns are re-orthonormalised. An empty
  /// `mean_curve` omits that column. SingularDesign if the column-scaled
  /// design has condition number above 1e12.
  EmscBasis(Spectrum reference, const Eigen::Ref<const Matrix>& components, Vector mean_curve = {});

  const Spectrum& reference() const { return reference_; }
  const Matrix& mie_components() const { return components_; }
  const Vector& mean_curve() const { return mean_curve_; }
  bool has_mean_curve() const { return mean_curve_.size() > 0; }
  const Matrix& design() const { return design_; }
  double condition_number() const { return condition_; }

  EmscCoefficients fit(const Eigen::Ref<const Vector>& raw) const;
  /// Design times coefficients, i.e. the fitted spectrum.
  Vector model(const EmscCoefficients& coef) const;

 private:
  Spectrum reference_;
  Matrix components_;
  Vector mean_curve_;
  Matrix design_;
  Vector column_scale_;
  Eigen::HouseholderQR<Matrix> qr_;
  double condition_ = 0.0;
};

/// Basis from a curve database: reference, PCA mean curve and top k components.
EmscBasis make_emsc_basis(const Spectrum& reference, const MieCurveConfig& cfg);

EmscCoefficients emsc_fit(const Spectrum& raw, const EmscBasis& basis);

struct CorrectedSpectrum {
  Spectrum corrected;
  EmscCoefficients coefficients;
  bool h_clamped = false;
};

/// corrected = (raw - c - m nu - mean_weight * mean - sum g_i p_i) / h, with
/// |h| clamped to `h_floor` (keeping its sign) and flagged.
CorrectedSpectrum emsc_correct_once(const Spectrum& raw, const EmscBasis& basis, double h_floor = 1e-3);

struct RmiesConfig {
  int iterations = 10;
  MieCurveConfig curves = MieCurveConfig::defaults();
  double h_floor = 1e-3;
  double reference_blend = 1.0;  // beta

  void validate(Index grid_size) const;
};

struct CorrectionResult {
  Spectrum corrected;
  std::vector<double> residuals;                 // per iteration
  std::vector<EmscCoefficients> coefficients;    // per iteration
  bool h_clamped = false;                        // any iteration clamped h
};

/// Iterative correction against one initial reference. Holds the first
/// iteration's basis (built once, shared by every spectrum) and, in
/// non-resonant mode, the PCA of the reference-independent curve database.
class RmiesCorrector {
 public:
  RmiesCorrector(const Spectrum& initial_reference, RmiesConfig cfg);

  CorrectionResult correct(const Spectrum& raw) const;
  const RmiesConfig& config() const { return cfg_; }
  const Spectrum& initial_reference() const { return initial_reference_; }

 private:
  EmscBasis basis_for(const Spectrum& reference) const;

  RmiesConfig cfg_;
  Spectrum initial_reference_;
  std::optional<PcaResult> static_pca_;
  std::optional<EmscBasis> first_basis_;
};

/// DegenerateInput if the initial reference has zero norm.
CorrectionResult rmies_correct(const Spectrum& raw, const Spectrum& initial_reference, const RmiesConfig& cfg);

struct PixelFailure {
  Index pixel;
  std::string message;
};

struct CubeCorrection {
  SpectralCube cube;
  std::vector<PixelFailure> failures;   // failed pixels keep their raw values
  std::vector<std::vector<double>> residuals;  // per pixel, per iteration
  Index clamped_pixels = 0;
};

CubeCorrection correct_cube(const SpectralCube& cube, const Spectrum& initial_reference, const RmiesConfig& cfg,
                            int threads = 1);

/// Report JSON for one correction (residual trajectory and coefficients).
std::string correction_report_json(const CorrectionResult& result);

}  // namespace rmies
