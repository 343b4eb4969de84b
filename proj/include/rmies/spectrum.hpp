// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rmies/core.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace rmies {

/// Ascending wavenumber axis in cm^-1.
///
/// Construction checks ordering, positivity and a minimum length of 8.
/// Uniform spacing is recorded rather than enforced; operations that need
/// it (derivatives, Kramers-Kronig) raise GridError on non-uniform grids.
class WavenumberGrid {
 public:
  static constexpr Index kMinLength = 8;

  explicit WavenumberGrid(Vector values);

  /// Grid first, first + step, ... up to and including `last` (within 1e-9 step).
  static WavenumberGrid uniform(double first, double last, double step);
  /// 950-1800 cm^-1 at 2 cm^-1, 426 points.
  static WavenumberGrid default_grid();

  const Vector& values() const { return values_; }
  Index size() const { return values_.size(); }
  double front() const { return values_[0]; }
  double back() const { return values_[values_.size() - 1]; }
  double operator[](Index i) const { return values_[i]; }

  bool is_uniform() const { return uniform_; }
  /// Spacing of a uniform grid; GridError otherwise.
  double step() const;

  bool operator==(const WavenumberGrid& other) const { return values_ == other.values_; }

 private:
  Vector values_;
  bool uniform_ = false;
};

using GridPtr = std::shared_ptr<const WavenumberGrid>;

inline GridPtr make_grid(WavenumberGrid grid) {
  return std::make_shared<const WavenumberGrid>(std::move(grid));
}

/// True when both pointers refer to equal grids (cheap when shared).
bool same_grid(const GridPtr& a, const GridPtr& b);

class Spectrum {
 public:
  Spectrum(GridPtr grid, Vector absorbance);

  const WavenumberGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  const Vector& absorbance() const { return absorbance_; }
  Index size() const { return absorbance_.size(); }

 private:
  GridPtr grid_;
  Vector absorbance_;
};

/// width x height raster of spectra on one grid. Pixel (x, y) is column
/// y * width + x of `data()`.
class SpectralCube {
 public:
  SpectralCube(Index width, Index height, GridPtr grid, SpectraMatrix data);

  Index width() const { return width_; }
  Index height() const { return height_; }
  Index pixels() const { return width_ * height_; }
  Index bands() const { return grid_->size(); }
  const WavenumberGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  const SpectraMatrix& data() const { return data_; }

  Spectrum pixel(Index i) const { return Spectrum(grid_, data_.col(i)); }

 private:
  Index width_;
  Index height_;
  GridPtr grid_;
  SpectraMatrix data_;
};

/// Raw spectra with optional parallel ground truth, oracle targets and labels.
/// All matrices are bands x n.
struct LabeledDataset {
  GridPtr grid;
  SpectraMatrix raw;
  std::optional<SpectraMatrix> pure;
  std::optional<SpectraMatrix> corrected;
  std::vector<int> labels;

  Index size() const { return raw.cols(); }
  Spectrum raw_spectrum(Index i) const { return Spectrum(grid, raw.col(i)); }

  /// DimensionError when parallel members disagree with `raw`.
  void validate() const;
};

bool all_finite(const Eigen::Ref<const Matrix>& m);

/// Linear interpolation onto `target`; RangeError if target leaves the source range.
Spectrum resample(const Spectrum& s, const GridPtr& target);

/// Unit Euclidean norm; DegenerateInput for a zero vector.
template <typename Derived>
Vector normalized_l2(const Eigen::MatrixBase<Derived>& v) {
  const double norm = v.norm();
  if (!(norm > 0.0)) throw DegenerateInput("vector_normalize: zero norm");
  return v / norm;
}

Spectrum vector_normalize(const Spectrum& s);

/// Central second difference with step h; endpoints copy the nearest interior value.
template <typename Derived>
Vector second_difference(const Eigen::MatrixBase<Derived>& v, double step) {
  const Index n = v.size();
  Vector out(n);
  const double inv = 1.0 / (step * step);
  for (Index i = 1; i + 1 < n; ++i) out[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) * inv;
  out[0] = out[1];
  out[n - 1] = out[n - 2];
  return out;
}

Spectrum second_derivative(const Spectrum& s);

}  // namespace rmies
