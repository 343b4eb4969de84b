// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rmies/spectrum.hpp"

#include <cmath>
#include <concepts>
#include <memory>
#include <numbers>

namespace rmies {

/// Van de Hulst anomalous-diffraction extinction efficiency
///   Q(rho) = 2 - (4/rho) sin(rho) + (4/rho^2)(1 - cos(rho)),  Q(0) = 0.
/// Q is even in rho. Below |rho| = 0.1 the Taylor series is used to avoid
/// cancellation.
template <std::floating_point Scalar>
Scalar extinction_efficiency(Scalar rho) {
  using std::abs, std::cos, std::sin;
  const Scalar r2 = rho * rho;
  if (abs(rho) < Scalar(0.1)) {
    // sum_k>=1 4 (-1)^(k+1) (2k+1)/(2k+2)! rho^(2k)
    return r2 * (Scalar(1) / 2 + r2 * (Scalar(-1) / 36 + r2 * (Scalar(1) / 1440 + r2 * (Scalar(-1) / 100800))));
  }
  return Scalar(2) - Scalar(4) / rho * sin(rho) + Scalar(4) / r2 * (Scalar(1) - cos(rho));
}

/// Elementwise Q over an array of phase shifts.
template <typename Derived>
ArrayX<typename Derived::Scalar> extinction_efficiency(const Eigen::ArrayBase<Derived>& rho) {
  using Scalar = typename Derived::Scalar;
  ArrayX<Scalar> out(rho.size());
  const auto r = rho.derived().eval();
  const ArrayX<Scalar> r2 = r.square();
  const ArrayX<Scalar> direct = Scalar(2) - Scalar(4) * r.sin() / r + Scalar(4) * (Scalar(1) - r.cos()) / r2;
  const ArrayX<Scalar> series =
      r2 * (Scalar(1) / 2 + r2 * (Scalar(-1) / 36 + r2 * (Scalar(1) / 1440 + r2 * (Scalar(-1) / 100800))));
  out = (r.abs() < Scalar(0.1)).select(series, direct);
  return out;
}

/// Phase-shift factor 4 pi a nu for radius a in micrometres: rho = factor * (n - 1).
inline Array phase_factor(const WavenumberGrid& grid, double radius_um) {
  return (4.0 * std::numbers::pi * radius_um * 1e-4) * grid.values().array();
}

/// Parameter box accepted by the extinction model.
inline constexpr double kMinRadiusUm = 1.0;
inline constexpr double kMaxRadiusUm = 20.0;

/// Non-resonant extinction curve for a sphere of radius `radius_um` and
/// constant refractive index `n`. DomainError outside a in [1, 20], n in (1, 2).
Vector vdh_extinction(const WavenumberGrid& grid, double radius_um, double n);

/// Extinction curve with a wavenumber-dependent real index n(nu).
Vector vdh_extinction(const WavenumberGrid& grid, double radius_um, const Eigen::Ref<const Vector>& n);

/// Real-index fluctuation from the imaginary index: the negated discrete
/// Hilbert transform of `n_im`, computed by FFT after even (mirror)
/// extension to four times the grid length. GridError on a non-uniform grid.
Vector kramers_kronig(const WavenumberGrid& grid, const Eigen::Ref<const Vector>& n_im);

/// The same transform as a dense n x n matrix (it depends only on n), built
/// once per length from the FFT method's impulse response and cached.
std::shared_ptr<const Matrix> kramers_kronig_operator(Index n);

}  // namespace rmies
