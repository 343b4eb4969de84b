// SPDX-License-Identifier: Apache-2.0
#include "rmies/oracle.hpp"

#include "rmies/parallel.hpp"

#include <json.hpp>

#include <cmath>
#include <numbers>
#include <string>

namespace rmies {

MieCurveConfig MieCurveConfig::defaults() {
  MieCurveConfig cfg;
  for (int i = 0; i < 7; ++i) {
    cfg.radius_um.push_back(2.0 + i);
    cfg.index.push_back(1.1 + 0.4 * i / 6.0);
  }
  return cfg;
}

void MieCurveConfig::validate(Index grid_size) const {
  if (radius_um.empty() || index.empty()) throw ConfigError("Mie curve grids must be non-empty");
  for (double a : radius_um) {
    if (!(a >= kMinRadiusUm && a <= kMaxRadiusUm)) throw DomainError("Mie radius outside [1, 20] um");
  }
  for (double n : index) {
    if (!(n > 1.0 && n < 2.0)) throw DomainError("Mie refractive index outside (1, 2)");
  }
  if (!(kk_scale >= 0.0)) throw ConfigError("kk_scale must be >= 0");
  const auto curves = static_cast<Index>(radius_um.size() * index.size());
  if (n_components < 1 || n_components > curves || n_components > grid_size) {
    throw ConfigError("n_components must lie in [1, min(#curves, grid length)]");
  }
}

namespace {

bool uniform_steps(const std::vector<double>& v) {
  if (v.size() < 3) return false;
  const double d = v[1] - v[0];
  for (std::size_t j = 2; j < v.size(); ++j) {
    if (std::abs(v[j] - v[0] - static_cast<double>(j) * d) > 1e-12) return false;
  }
  return true;
}

// sin/cos pairs over the band axis, advanced by angle addition.
struct SinCos {
  Array s, c;
  explicit SinCos(const Array& x) : s(x.sin()), c(x.cos()) {}
  void advance(const SinCos& d) {
    const Array s_next = s * d.c + c * d.s;
    c = c * d.c - s * d.s;
    s = s_next;
  }
};

void extinction_from_sincos(const Array& rho, const Array& s, const Array& c, Eigen::Ref<Vector> out) {
  const Array inv = rho.inverse();
  out.array() = 2.0 - 4.0 * s * inv + 4.0 * (1.0 - c) * inv.square();
  if (rho.abs().minCoeff() < 0.1) {
    for (Index b = 0; b < rho.size(); ++b) {
      if (std::abs(rho[b]) < 0.1) out[b] = extinction_efficiency(rho[b]);
    }
  }
}

}  // namespace

Vector resonant_index_fluctuation(const Spectrum& reference, double kk_scale) {
  const WavenumberGrid& grid = reference.grid();
  (void)grid.step();
  Vector n_im = (reference.absorbance().array() - reference.absorbance().mean()) / grid.values().array();
  const double peak = n_im.cwiseAbs().maxCoeff();
  // A flat reference leaves only rounding noise after mean removal; scaling
  // that to unit peak would invent a resonance.
  const double scale = (reference.absorbance().array().abs() / grid.values().array()).maxCoeff();
  if (!(peak > 64.0 * std::numeric_limits<double>::epsilon() * scale)) return Vector::Zero(grid.size());
  n_im /= peak;
  return kk_scale * (*kramers_kronig_operator(grid.size()) * n_im);
}

namespace {

// Curves as columns (bands x curves), the layout every consumer reads.
Matrix database_columns(const WavenumberGrid& grid, const MieCurveConfig& cfg, const Spectrum* reference) {
  cfg.validate(grid.size());
  const Index bands = grid.size();
  Vector fluct = Vector::Zero(bands);
  if (cfg.resonant) {
    if (!reference) throw ConfigError("resonant Mie database needs a reference spectrum");
    if (!(reference->grid() == grid)) throw DimensionError("reference is not on the database grid");
    fluct = resonant_index_fluctuation(*reference, cfg.kk_scale);
  }
  const auto n_radius = static_cast<Index>(cfg.radius_um.size());
  const auto n_index = static_cast<Index>(cfg.index.size());
  Matrix by_band(bands, n_radius * n_index);
  const Array fac = (4.0 * std::numbers::pi * 1e-4) * grid.values().array();
  const Array offset = fluct.array() - 1.0;
  // On uniform (a, n) grids rho is bilinear in the grid indices,
  // rho_ij = rho_00 + i alpha + j beta + i j gamma, so sin/cos need four
  // evaluations per band and angle-addition steps.
  if (uniform_steps(cfg.radius_um) && uniform_steps(cfg.index)) {
    const double a0 = cfg.radius_um.front(), n0 = cfg.index.front();
    const double da = cfg.radius_um[1] - a0, dn = cfg.index[1] - n0;
    const Array u0 = n0 + offset;
    SinCos row((fac * a0 * u0).eval());
    SinCos step((fac * da * u0).eval());
    const SinCos beta((fac * (a0 * dn)).eval()), gamma((fac * (da * dn)).eval());
    for (Index j = 0; j < n_index; ++j) {
      SinCos cur = row;
      const Array u = cfg.index[static_cast<std::size_t>(j)] + offset;
      for (Index i = 0; i < n_radius; ++i) {
        const Array rho = fac * cfg.radius_um[static_cast<std::size_t>(i)] * u;
        extinction_from_sincos(rho, cur.s, cur.c, by_band.col(i * n_index + j));
        if (i + 1 < n_radius) cur.advance(step);
      }
      row.advance(beta);
      step.advance(gamma);
    }
  } else {
    for (Index i = 0; i < n_radius; ++i) {
      for (Index j = 0; j < n_index; ++j) {
        const Array rho =
            fac * cfg.radius_um[static_cast<std::size_t>(i)] * (cfg.index[static_cast<std::size_t>(j)] + offset);
        extinction_from_sincos(rho, rho.sin(), rho.cos(), by_band.col(i * n_index + j));
      }
    }
  }
  return by_band;
}

}  // namespace

Matrix build_extinction_database(const WavenumberGrid& grid, const MieCurveConfig& cfg, const Spectrum* reference) {
  return database_columns(grid, cfg, reference).transpose();
}

PcaResult pca_components(const Eigen::Ref<const Matrix>& rows, Index k) {
  if (k < 1 || k > std::min(rows.rows(), rows.cols())) {
    throw RankError("pca: k must lie in [1, min(rows, cols)]");
  }
  PcaResult out;
  out.mean_curve = rows.colwise().mean().transpose();
  const Matrix centred = rows.rowwise() - out.mean_curve.transpose();
  Eigen::BDCSVD<Matrix> svd(centred, Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double tol = std::max(rows.rows(), rows.cols()) * std::numeric_limits<double>::epsilon() *
                     (sv.size() > 0 ? sv[0] : 0.0);
  Index rank = 0;
  while (rank < sv.size() && sv[rank] > tol) ++rank;
  if (rank < k) {
    throw RankError("pca: only " + std::to_string(rank) + " nonzero singular values, " + std::to_string(k) +
                    " requested");
  }
  out.components = svd.matrixV().leftCols(k);
  const double total = sv.squaredNorm();
  out.explained_variance = sv.head(k).array().square() / total;
  return out;
}

namespace {

// Leading principal directions of the columns of `curves` (bands x count).
PcaResult leading_components_of_columns(const Eigen::Ref<const Matrix>& curves, Index k) {
  const Index r = curves.cols();
  if (k < 1 || k > std::min(r, curves.rows())) throw RankError("pca: k must lie in [1, min(rows, cols)]");
  PcaResult out;
  out.mean_curve = curves.rowwise().mean();
  const Matrix centred = curves.colwise() - out.mean_curve;
  Matrix gram(r, r);
  gram.setZero();
  gram.selfadjointView<Eigen::Lower>().rankUpdate(centred.transpose());
  gram = gram.selfadjointView<Eigen::Lower>();
  const double total = gram.trace();
  const Index block = std::min(r, k + 4);

  Vector ritz;
  Matrix ritz_vectors;
  Matrix basis = gram.leftCols(block);
  if (block == r) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    ritz = es.eigenvalues().reverse();
    ritz_vectors = es.eigenvectors().rowwise().reverse();
  } else {
    for (int iter = 0; iter < 200; ++iter) {
      Eigen::HouseholderQR<Matrix> qr(basis);
      const Matrix q = qr.householderQ() * Matrix::Identity(r, block);
      const Matrix gq = gram * q;
      Eigen::SelfAdjointEigenSolver<Matrix> es(q.transpose() * gq);
      ritz = es.eigenvalues().reverse();
      const Matrix w = es.eigenvectors().rowwise().reverse();
      ritz_vectors = q * w;
      const Matrix residual = gq * w.leftCols(k) - ritz_vectors.leftCols(k) * ritz.head(k).asDiagonal();
      if (residual.colwise().norm().maxCoeff() <= 1e-13 * std::max(ritz[0], 1e-300)) break;
      basis = gq;
    }
  }
  // The Gram matrix squares the condition number, so the final directions
  // come from a small SVD of the data projected onto the converged subspace.
  const Index keep = std::min(block, curves.rows());
  Eigen::HouseholderQR<Matrix> qr(centred * ritz_vectors.leftCols(keep));
  const Matrix q = qr.householderQ() * Matrix::Identity(curves.rows(), keep);
  Eigen::JacobiSVD<Matrix> svd(q.transpose() * centred, Eigen::ComputeThinU);
  const Vector& sv = svd.singularValues();
  const double tol = std::max(curves.rows(), curves.cols()) * std::numeric_limits<double>::epsilon() *
                     std::sqrt(std::max(ritz[0], 0.0));
  Index rank = 0;
  while (rank < k && rank < sv.size() && sv[rank] > tol) ++rank;
  if (rank < k) {
    throw RankError("pca: only " + std::to_string(rank) + " nonzero singular values, " + std::to_string(k) +
                    " requested");
  }
  out.components = q * svd.matrixU().leftCols(k);
  out.explained_variance = sv.head(k).array().square() / total;
  return out;
}

}  // namespace

PcaResult leading_components(const Eigen::Ref<const Matrix>& rows, Index k) {
  return leading_components_of_columns(rows.transpose(), k);
}

EmscBasis::EmscBasis(Spectrum reference, const Eigen::Ref<const Matrix>& components, Vector mean_curve)
    : reference_(std::move(reference)), mean_curve_(std::move(mean_curve)) {
  const Index bands = reference_.size();
  if (components.rows() != bands && components.size() > 0) {
    throw DimensionError("EMSC components do not match the reference grid");
  }
  if (mean_curve_.size() != 0 && mean_curve_.size() != bands) {
    throw DimensionError("EMSC mean curve does not match the reference grid");
  }
  if (components.cols() > 0) {
    Eigen::HouseholderQR<Matrix> orth(components);
    components_ = orth.householderQ() * Matrix::Identity(bands, components.cols());
    // Keep the supplied orientation of each component.
    for (Index j = 0; j < components_.cols(); ++j) {
      if (components_.col(j).dot(components.col(j)) < 0.0) components_.col(j) *= -1.0;
    }
  } else {
    components_.resize(bands, 0);
  }

  const Index fixed = has_mean_curve() ? 4 : 3;
  design_.resize(bands, fixed + components_.cols());
  design_.col(0).setOnes();
  design_.col(1) = reference_.grid().values();
  design_.col(2) = reference_.absorbance();
  if (has_mean_curve()) design_.col(3) = mean_curve_;
  design_.rightCols(components_.cols()) = components_;
  if (!design_.allFinite()) throw DataError("EMSC design contains non-finite values");

  column_scale_ = design_.colwise().norm().transpose();
  for (Index j = 0; j < column_scale_.size(); ++j) {
    if (!(column_scale_[j] > 0.0)) throw SingularDesign("EMSC design has an all-zero column");
  }
  const Matrix scaled = design_ * column_scale_.cwiseInverse().asDiagonal();
  qr_.compute(scaled);
  const Matrix r = qr_.matrixQR().topRows(scaled.cols()).triangularView<Eigen::Upper>();
  const Vector sv = Eigen::JacobiSVD<Matrix>(r).singularValues();
  condition_ = sv[sv.size() - 1] > 0.0 ? sv[0] / sv[sv.size() - 1] : std::numeric_limits<double>::infinity();
  if (!(condition_ <= kMaxCondition)) {
    throw SingularDesign("EMSC design is numerically rank deficient (condition " + std::to_string(condition_) + ")");
  }
}

EmscCoefficients EmscBasis::fit(const Eigen::Ref<const Vector>& raw) const {
  if (raw.size() != design_.rows()) throw DimensionError("EMSC fit: spectrum does not match basis grid");
  const Vector scaled_coef = qr_.solve(raw);
  const Vector coef = scaled_coef.cwiseQuotient(column_scale_);
  EmscCoefficients out;
  out.c = coef[0];
  out.m = coef[1];
  out.h = coef[2];
  const Index fixed = has_mean_curve() ? 4 : 3;
  out.mean_weight = has_mean_curve() ? coef[3] : 0.0;
  out.g = coef.tail(coef.size() - fixed);
  out.residual_norm = (raw - design_ * coef).norm();
  return out;
}

Vector EmscBasis::model(const EmscCoefficients& coef) const {
  Vector y = coef.c * Vector::Ones(design_.rows()) + coef.m * design_.col(1) + coef.h * design_.col(2);
  if (has_mean_curve()) y += coef.mean_weight * mean_curve_;
  if (components_.cols() > 0) y += components_ * coef.g;
  return y;
}

EmscBasis make_emsc_basis(const Spectrum& reference, const MieCurveConfig& cfg) {
  PcaResult pca = leading_components_of_columns(database_columns(reference.grid(), cfg, &reference), cfg.n_components);
  return EmscBasis(reference, pca.components, std::move(pca.mean_curve));
}

EmscCoefficients emsc_fit(const Spectrum& raw, const EmscBasis& basis) {
  if (!(raw.grid() == basis.reference().grid())) throw DimensionError("EMSC fit: spectrum and basis grids differ");
  return basis.fit(raw.absorbance());
}

CorrectedSpectrum emsc_correct_once(const Spectrum& raw, const EmscBasis& basis, double h_floor) {
  EmscCoefficients coef = emsc_fit(raw, basis);
  bool clamped = false;
  double h = coef.h;
  if (std::abs(h) < h_floor) {
    h = (h < 0.0 ? -1.0 : 1.0) * h_floor;
    clamped = true;
  }
  Vector y = raw.absorbance() - coef.c * Vector::Ones(raw.size()) - coef.m * raw.grid().values();
  if (basis.has_mean_curve()) y -= coef.mean_weight * basis.mean_curve();
  if (basis.mie_components().cols() > 0) y -= basis.mie_components() * coef.g;
  y /= h;
  return CorrectedSpectrum{Spectrum(raw.grid_ptr(), std::move(y)), std::move(coef), clamped};
}

void RmiesConfig::validate(Index grid_size) const {
  if (iterations < 1) throw ConfigError("rmies: iterations must be >= 1");
  if (!(h_floor > 0.0)) throw ConfigError("rmies: h_floor must be > 0");
  if (!(reference_blend >= 0.0 && reference_blend <= 1.0)) throw ConfigError("rmies: reference_blend must lie in [0, 1]");
  curves.validate(grid_size);
}

RmiesCorrector::RmiesCorrector(const Spectrum& initial_reference, RmiesConfig cfg)
    : cfg_(std::move(cfg)), initial_reference_(initial_reference) {
  cfg_.validate(initial_reference_.size());
  if (!(initial_reference_.absorbance().norm() > 0.0)) throw DegenerateInput("rmies: initial reference has zero norm");
  if (!cfg_.curves.resonant) {
    static_pca_ = leading_components_of_columns(database_columns(initial_reference_.grid(), cfg_.curves, nullptr),
                                                cfg_.curves.n_components);
  }
  first_basis_.emplace(basis_for(initial_reference_));
}

EmscBasis RmiesCorrector::basis_for(const Spectrum& reference) const {
  if (static_pca_) return EmscBasis(reference, static_pca_->components, static_pca_->mean_curve);
  return make_emsc_basis(reference, cfg_.curves);
}

CorrectionResult RmiesCorrector::correct(const Spectrum& raw) const {
  if (!(raw.grid() == initial_reference_.grid())) throw DimensionError("rmies: spectrum and reference grids differ");
  const double beta = cfg_.reference_blend;
  CorrectionResult result{raw, {}, {}, false};
  std::optional<Spectrum> reference;
  for (int it = 0; it < cfg_.iterations; ++it) {
    CorrectedSpectrum step = it == 0 ? emsc_correct_once(raw, *first_basis_, cfg_.h_floor)
                                     : emsc_correct_once(raw, basis_for(*reference), cfg_.h_floor);
    result.residuals.push_back(step.coefficients.residual_norm);
    result.coefficients.push_back(step.coefficients);
    result.h_clamped = result.h_clamped || step.h_clamped;
    const Vector& previous = it == 0 ? initial_reference_.absorbance() : reference->absorbance();
    if (it + 1 < cfg_.iterations) {
      reference.emplace(raw.grid_ptr(), beta == 1.0 ? step.corrected.absorbance()
                                                    : Vector(beta * step.corrected.absorbance() + (1.0 - beta) * previous));
    }
    result.corrected = std::move(step.corrected);
  }
  return result;
}

CorrectionResult rmies_correct(const Spectrum& raw, const Spectrum& initial_reference, const RmiesConfig& cfg) {
  return RmiesCorrector(initial_reference, cfg).correct(raw);
}

CubeCorrection correct_cube(const SpectralCube& cube, const Spectrum& initial_reference, const RmiesConfig& cfg,
                            int threads) {
  if (!(cube.grid() == initial_reference.grid())) throw DimensionError("correct_cube: reference is not on the cube grid");
  const RmiesCorrector corrector(initial_reference, cfg);
  const Index n = cube.pixels();
  SpectraMatrix out = cube.data();
  std::vector<std::vector<double>> residuals(static_cast<std::size_t>(n));
  std::vector<std::optional<std::string>> errors(static_cast<std::size_t>(n));
  std::vector<char> clamped(static_cast<std::size_t>(n), 0);
  parallel_for(n, threads, [&](Index i) {
    try {
      CorrectionResult r = corrector.correct(cube.pixel(i));
      out.col(i) = r.corrected.absorbance();
      residuals[static_cast<std::size_t>(i)] = std::move(r.residuals);
      clamped[static_cast<std::size_t>(i)] = r.h_clamped ? 1 : 0;
    } catch (const Error& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  });
  CubeCorrection result{SpectralCube(cube.width(), cube.height(), cube.grid_ptr(), std::move(out)), {},
                        std::move(residuals), 0};
  for (Index i = 0; i < n; ++i) {
    if (errors[static_cast<std::size_t>(i)]) result.failures.push_back({i, *errors[static_cast<std::size_t>(i)]});
    result.clamped_pixels += clamped[static_cast<std::size_t>(i)];
  }
  return result;
}

std::string correction_report_json(const CorrectionResult& result) {
  nlohmann::json j;
  j["iterations"] = result.residuals.size();
  j["residuals"] = result.residuals;
  j["h_clamped"] = result.h_clamped;
  nlohmann::json coefs = nlohmann::json::array();
  for (const auto& c : result.coefficients) {
    coefs.push_back({{"c", c.c},
                     {"m", c.m},
                     {"h", c.h},
                     {"mean_weight", c.mean_weight},
                     {"g", std::vector<double>(c.g.data(), c.g.data() + c.g.size())},
                     {"residual_norm", c.residual_norm}});
  }
  j["coefficients"] = std::move(coefs);
  return j.dump(2);
}

}  // namespace rmies
