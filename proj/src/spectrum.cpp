// SPDX-License-Identifier: Apache-2.0
#include "rmies/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rmies {

WavenumberGrid::WavenumberGrid(Vector values) : values_(std::move(values)) {
  const Index n = values_.size();
  if (n < kMinLength) {
    throw GridError("wavenumber grid needs at least 8 points, got " + std::to_string(n));
  }
  if (!values_.allFinite() || !(values_[0] > 0.0)) {
    throw GridError("wavenumber grid must be finite and positive");
  }
  for (Index i = 1; i < n; ++i) {
    if (!(values_[i] > values_[i - 1])) throw GridError("wavenumber grid must be strictly ascending");
  }
  const double d0 = values_[1] - values_[0];
  uniform_ = true;
  for (Index i = 1; i < n; ++i) {
    if (std::abs((values_[i] - values_[i - 1]) - d0) > 1e-9 * d0) {
      uniform_ = false;
      break;
    }
  }
}

WavenumberGrid WavenumberGrid::uniform(double first, double last, double step) {
  if (!(step > 0.0) || !(last > first)) throw GridError("uniform grid needs last > first and step > 0");
  const auto n = static_cast<Index>(std::floor((last - first) / step + 1e-9)) + 1;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = first + static_cast<double>(i) * step;
  return WavenumberGrid(std::move(v));
}

WavenumberGrid WavenumberGrid::default_grid() { return uniform(950.0, 1800.0, 2.0); }

double WavenumberGrid::step() const {
  if (!uniform_) throw GridError("operation requires a uniformly spaced grid");
  return (back() - front()) / static_cast<double>(size() - 1);
}

bool same_grid(const GridPtr& a, const GridPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

Spectrum::Spectrum(GridPtr grid, Vector absorbance) : grid_(std::move(grid)), absorbance_(std::move(absorbance)) {
  if (!grid_) throw DimensionError("spectrum without grid");
  if (absorbance_.size() != grid_->size()) {
    throw DimensionError("spectrum length " + std::to_string(absorbance_.size()) + " differs from grid length " +
                         std::to_string(grid_->size()));
  }
  if (!absorbance_.allFinite()) throw DataError("spectrum contains non-finite values");
}

SpectralCube::SpectralCube(Index width, Index height, GridPtr grid, SpectraMatrix data)
    : width_(width), height_(height), grid_(std::move(grid)), data_(std::move(data)) {
  if (!grid_) throw DimensionError("cube without grid");
  if (width_ < 1 || height_ < 1) throw DimensionError("cube dimensions must be positive");
  if (data_.rows() != grid_->size() || data_.cols() != width_ * height_) {
    throw DimensionError("cube data shape does not match width*height x bands");
  }
  if (!data_.allFinite()) throw DataError("cube contains non-finite values");
}

void LabeledDataset::validate() const {
  if (!grid) throw DimensionError("dataset without grid");
  if (raw.rows() != grid->size()) throw DimensionError("dataset raw spectra do not match grid length");
  const auto check = [&](const std::optional<SpectraMatrix>& m, const char* what) {
    if (m && (m->rows() != raw.rows() || m->cols() != raw.cols())) {
      throw DimensionError(std::string("dataset ") + what + " spectra are not parallel to raw");
    }
  };
  check(pure, "pure");
  check(corrected, "corrected");
  if (!labels.empty() && static_cast<Index>(labels.size()) != raw.cols()) {
    throw DimensionError("dataset labels are not parallel to raw");
  }
}

Spectrum resample(const Spectrum& s, const GridPtr& target) {
  const Vector& x = s.grid().values();
  const Vector& y = s.absorbance();
  const Vector& t = target->values();
  const double tol = 1e-9 * (x[1] - x[0]);
  if (t[0] < x[0] - tol || t[t.size() - 1] > x[x.size() - 1] + tol) {
    throw RangeError("resample target range exceeds source grid");
  }
  Vector out(t.size());
  const double* begin = x.data();
  const double* end = x.data() + x.size();
  for (Index i = 0; i < t.size(); ++i) {
    const double v = std::clamp(t[i], x[0], x[x.size() - 1]);
    Index j = static_cast<Index>(std::upper_bound(begin, end, v) - begin) - 1;
    j = std::clamp<Index>(j, 0, x.size() - 2);
    const double w = (v - x[j]) / (x[j + 1] - x[j]);
    out[i] = (1.0 - w) * y[j] + w * y[j + 1];
  }
  return Spectrum(target, std::move(out));
}

Spectrum vector_normalize(const Spectrum& s) { return Spectrum(s.grid_ptr(), normalized_l2(s.absorbance())); }

Spectrum second_derivative(const Spectrum& s) {
  return Spectrum(s.grid_ptr(), second_difference(s.absorbance(), s.grid().step()));
}

}  // namespace rmies
