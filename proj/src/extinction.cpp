// SPDX-License-Identifier: Apache-2.0
#include "rmies/extinction.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>
#include <map>
#include <mutex>
#include <string>

namespace rmies {
namespace {

void check_box(double radius_um, double n) {
  if (!(radius_um >= kMinRadiusUm && radius_um <= kMaxRadiusUm)) {
    throw DomainError("extinction radius " + std::to_string(radius_um) + " um outside [1, 20]");
  }
  if (!(n > 1.0 && n < 2.0)) throw DomainError("extinction refractive index " + std::to_string(n) + " outside (1, 2)");
}

}  // namespace

Vector vdh_extinction(const WavenumberGrid& grid, double radius_um, double n) {
  check_box(radius_um, n);
  return extinction_efficiency((phase_factor(grid, radius_um) * (n - 1.0)).eval()).matrix();
}

Vector vdh_extinction(const WavenumberGrid& grid, double radius_um, const Eigen::Ref<const Vector>& n) {
  if (n.size() != grid.size()) throw DimensionError("refractive index profile does not match grid");
  if (!(radius_um >= kMinRadiusUm && radius_um <= kMaxRadiusUm)) {
    throw DomainError("extinction radius " + std::to_string(radius_um) + " um outside [1, 20]");
  }
  return extinction_efficiency((phase_factor(grid, radius_um) * (n.array() - 1.0)).eval()).matrix();
}

namespace {

// Negated periodic discrete Hilbert transform of `ext` (multiplier +i sgn k).
std::vector<double> periodic_neg_hilbert(const std::vector<double>& ext) {
  const auto m = static_cast<Index>(ext.size());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, ext);
  const std::complex<double> i_unit(0.0, 1.0);
  spec[0] = 0.0;
  spec[static_cast<std::size_t>(m / 2)] = 0.0;
  for (Index k = 1; k < m / 2; ++k) {
    spec[static_cast<std::size_t>(k)] *= i_unit;
    spec[static_cast<std::size_t>(m - k)] *= -i_unit;
  }
  std::vector<std::complex<double>> back;
  fft.inv(back, spec);
  std::vector<double> out(ext.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = back[i].real();
  return out;
}

}  // namespace

Vector kramers_kronig(const WavenumberGrid& grid, const Eigen::Ref<const Vector>& n_im) {
  (void)grid.step();
  const Index n = grid.size();
  if (n_im.size() != n) throw DimensionError("kramers_kronig: input does not match grid");
  if (!n_im.allFinite()) throw DataError("kramers_kronig: non-finite input");

  // Even extension [f, rev f, f, rev f]: continuous at both grid ends.
  const Index m = 4 * n;
  std::vector<double> ext(static_cast<std::size_t>(m));
  for (Index rep = 0; rep < 2; ++rep) {
    for (Index i = 0; i < n; ++i) {
      ext[static_cast<std::size_t>(2 * rep * n + i)] = n_im[i];
      ext[static_cast<std::size_t>(2 * rep * n + 2 * n - 1 - i)] = n_im[i];
    }
  }

  const std::vector<double> back = periodic_neg_hilbert(ext);
  Vector out(n);
  for (Index i = 0; i < n; ++i) out[i] = back[static_cast<std::size_t>(i)];
  return out;
}

std::shared_ptr<const Matrix> kramers_kronig_operator(Index n) {
  static std::mutex mutex;
  static std::map<Index, std::shared_ptr<const Matrix>> cache;
  std::lock_guard lock(mutex);
  if (auto it = cache.find(n); it != cache.end()) return it->second;

  const Index m = 4 * n;
  std::vector<double> delta(static_cast<std::size_t>(m), 0.0);
  delta[0] = 1.0;
  const std::vector<double> h = periodic_neg_hilbert(delta);
  auto kernel = [&](Index d) { return h[static_cast<std::size_t>(((d % m) + m) % m)]; };
  auto op = std::make_shared<Matrix>(n, n);
  for (Index l = 0; l < n; ++l) {
    // positions of sample l inside the extension
    const Index p0 = l, p1 = 2 * n - 1 - l, p2 = 2 * n + l, p3 = 4 * n - 1 - l;
    for (Index i = 0; i < n; ++i) {
      (*op)(i, l) = kernel(i - p0) + kernel(i - p1) + kernel(i - p2) + kernel(i - p3);
    }
  }
  cache.emplace(n, op);
  return op;
}

}  // namespace rmies
