// SPDX-License-Identifier: Apache-2.0
#include "rmies/extinction.hpp"
#include "rmies/oracle.hpp"
#include "rmies/synth.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace rmies;
using namespace rmies::testing;

namespace {

constexpr double kPi = std::numbers::pi;

// Direct scalar evaluation, no series branch.
double q_direct(double rho) { return 2.0 - 4.0 / rho * std::sin(rho) + 4.0 / (rho * rho) * (1.0 - std::cos(rho)); }

Spectrum class_mean(int k) { return synth::nominal_pure(synth::default_templates()[static_cast<std::size_t>(k)], default_grid()); }

MieCurveConfig non_resonant() {
  auto cfg = MieCurveConfig::defaults();
  cfg.resonant = false;
  return cfg;
}

double rmse(const Vector& a, const Vector& b) { return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size())); }

}  // namespace

// ---- extinction efficiency ------------------------------------------------------

TEST(Extinction, SmallPhaseLimitIsZero) {
  EXPECT_EQ(extinction_efficiency(0.0), 0.0);
  EXPECT_NEAR(extinction_efficiency(1e-6), 0.5e-12, 1e-24);
  EXPECT_NEAR(extinction_efficiency(1e-3) / (0.5e-6), 1.0, 1e-6);
}

TEST(Extinction, PhasePiClosedForm) {
  EXPECT_NEAR(extinction_efficiency(kPi), 2.0 + 8.0 / (kPi * kPi), 1e-14);
  EXPECT_NEAR(extinction_efficiency(kPi), 2.81057, 1e-5);
}

TEST(Extinction, SeriesAndDirectBranchesAgreeAtSwitch) {
  for (double rho : {0.05, 0.0999, 0.1, 0.1001, 0.2}) {
    EXPECT_NEAR(extinction_efficiency(rho), q_direct(rho), 1e-13 * std::max(1.0, q_direct(rho))) << rho;
  }
  EXPECT_EQ(extinction_efficiency(-2.3), extinction_efficiency(2.3));
  const Array rho = Array::LinSpaced(200, 0.0, 30.0);
  const Array q = extinction_efficiency(rho);
  for (Index i = 0; i < rho.size(); ++i) EXPECT_NEAR(q[i], extinction_efficiency(rho[i]), 1e-14);
}

TEST(Extinction, PhaseAtFiveMicronsReferencePoint) {
  // rho = 4 pi a (n - 1) nu, a in cm.
  const double rho = 4.0 * kPi * 5e-4 * 0.3 * 1650.0;
  EXPECT_NEAR(rho, 3.1102, 1e-4);
  const Array f = phase_factor(*default_grid(), 5.0);
  const Index i1650 = (1650 - 950) / 2;
  EXPECT_NEAR(f[i1650] * 0.3, rho, 1e-12);
  const Vector q = vdh_extinction(*default_grid(), 5.0, 1.3);
  EXPECT_NEAR(q[i1650], q_direct(rho), 1e-12);
}

TEST(Extinction, PropertyBoundedOverParameterBox) {
  const auto g = default_grid();
  for (double a = 1.0; a <= 20.0; a += 0.5) {
    for (double n = 1.01; n < 2.0; n += 0.04) {
      const Vector q = vdh_extinction(*g, a, n);
      ASSERT_TRUE(q.allFinite());
      EXPECT_GE(q.minCoeff(), 0.0) << a << " " << n;
      EXPECT_LE(q.maxCoeff(), 4.0) << a << " " << n;
    }
  }
}

TEST(Extinction, OscillatesTowardTwo) {
  const Vector q = vdh_extinction(*default_grid(), 20.0, 1.5);
  ASSERT_GT(4.0 * kPi * 20e-4 * 0.5 * 1800.0, 20.0);
  const Index n = q.size();
  const double tail = q.tail(n / 4).mean();
  EXPECT_GE(tail, 1.5);
  EXPECT_LE(tail, 2.5);
}

TEST(Extinction, DomainErrors) {
  const auto& g = *default_grid();
  EXPECT_THROW(vdh_extinction(g, 0.5, 1.3), DomainError);
  EXPECT_THROW(vdh_extinction(g, 25.0, 1.3), DomainError);
  EXPECT_THROW(vdh_extinction(g, 5.0, 1.0), DomainError);
  EXPECT_THROW(vdh_extinction(g, 5.0, 2.0), DomainError);
  EXPECT_NO_THROW(vdh_extinction(g, 1.0, 1.3));
  EXPECT_NO_THROW(vdh_extinction(g, 20.0, 1.3));
}

TEST(Extinction, VariableIndexReducesToConstant) {
  const auto& g = *default_grid();
  const Vector n = Vector::Constant(g.size(), 1.25);
  EXPECT_LE((vdh_extinction(g, 4.0, n) - vdh_extinction(g, 4.0, 1.25)).cwiseAbs().maxCoeff(), 1e-15);
}

// ---- Kramers-Kronig --------------------------------------------------------------

TEST(KramersKronig, ZeroInputGivesZero) {
  const auto& g = *default_grid();
  EXPECT_EQ(kramers_kronig(g, Vector::Zero(g.size())), Vector::Zero(g.size()));
}

// Hilbert pair: gamma^2 / (x^2 + gamma^2) maps to -gamma x / (x^2 + gamma^2)
// under the negated transform.
TEST(KramersKronig, LorentzianGivesDispersionCrossingAtCentre) {
  const auto g = uniform_grid(950, 1800, 1.0);
  const double c = 1375.0, w = 8.0;
  const Vector x = g->values().array() - c;
  const Vector lorentz = (w * w / (x.array().square() + w * w)).matrix();
  const Vector analytic = (-w * x.array() / (x.array().square() + w * w)).matrix();
  const Vector kk = kramers_kronig(*g, lorentz);
  const double peak = analytic.cwiseAbs().maxCoeff();
  const Index ic = static_cast<Index>(c - 950.0);
  EXPECT_LE(std::abs(kk[ic]), 0.02 * peak);
  EXPECT_GT(kk[ic - static_cast<Index>(w)], 0.0);
  EXPECT_LT(kk[ic + static_cast<Index>(w)], 0.0);
  // Interior points, 50 linewidths from either edge.
  for (Index i = ic - 200; i <= ic + 200; ++i) EXPECT_NEAR(kk[i], analytic[i], 0.02 * peak) << (*g)[i];
}

TEST(KramersKronig, Linear) {
  const auto& g = *default_grid();
  std::mt19937_64 rng(4);
  const Vector f = random_vector(g.size(), rng), h = random_vector(g.size(), rng);
  const double a = 1.7, b = -0.4;
  const Vector lhs = kramers_kronig(g, a * f + b * h);
  const Vector rhs = a * kramers_kronig(g, f) + b * kramers_kronig(g, h);
  EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(KramersKronig, PropertyTranslationCovariant) {
  const auto g = default_grid();
  auto crossing = [&](double centre) {
    Vector f(g->size());
    for (Index i = 0; i < g->size(); ++i) f[i] = gaussian((*g)[i], centre, 6.0);
    const Vector kk = kramers_kronig(*g, f);
    for (Index i = 1; i < kk.size(); ++i) {
      if ((*g)[i] > centre - 10 && kk[i - 1] > 0.0 && kk[i] <= 0.0) return (*g)[i];
    }
    return -1.0;
  };
  const double base = crossing(1300.0);
  const double step = g->step();
  for (double shift : {10.0, 40.0, 150.0, 300.0}) {
    EXPECT_NEAR(crossing(1300.0 + shift) - base, shift, step) << shift;
  }
}

TEST(KramersKronig, OperatorMatchesFft) {
  const auto& g = *default_grid();
  std::mt19937_64 rng(8);
  const Vector f = random_vector(g.size(), rng);
  const auto op = kramers_kronig_operator(g.size());
  EXPECT_LE((*op * f - kramers_kronig(g, f)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(op.get(), kramers_kronig_operator(g.size()).get());
}

TEST(KramersKronig, NonUniformGridRaises) {
  Vector v = WavenumberGrid::default_grid().values();
  v[5] += 0.5;
  const WavenumberGrid g(v);
  EXPECT_THROW(kramers_kronig(g, Vector::Zero(g.size())), GridError);
}

// ---- curve database ----------------------------------------------------------------

TEST(Database, RowCountIsRadiusTimesIndex) {
  auto cfg = non_resonant();
  cfg.radius_um.clear();
  cfg.index.clear();
  for (int i = 0; i < 10; ++i) {
    cfg.radius_um.push_back(2.0 + 6.0 * i / 9.0);
    cfg.index.push_back(1.1 + 0.4 * i / 9.0);
  }
  const Matrix db = build_extinction_database(*default_grid(), cfg);
  EXPECT_EQ(db.rows(), 100);
  EXPECT_EQ(db.cols(), 426);
  // Radius-major order, rows match direct evaluation.
  EXPECT_LE((db.row(3 * 10 + 7).transpose() - vdh_extinction(*default_grid(), cfg.radius_um[3], cfg.index[7]))
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
  const Spectrum ref = class_mean(0);
  EXPECT_EQ(build_extinction_database(*default_grid(), MieCurveConfig::defaults(), &ref).rows(), 49);
}

TEST(Database, FlatReferenceMatchesNonResonant) {
  const auto g = default_grid();
  const Spectrum flat(g, Vector::Constant(g->size(), 0.7));
  const Matrix res = build_extinction_database(*g, MieCurveConfig::defaults(), &flat);
  const Matrix plain = build_extinction_database(*g, non_resonant());
  EXPECT_LE((res - plain).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Database, ResonantRowsBoundedAndShaped) {
  for (int k = 0; k < 5; ++k) {
    const Spectrum ref = class_mean(k);
    const Matrix db = build_extinction_database(*default_grid(), MieCurveConfig::defaults(), &ref);
    EXPECT_TRUE(db.allFinite());
    EXPECT_GE(db.minCoeff(), 0.0);
    EXPECT_LE(db.maxCoeff(), 4.0);
  }
  // Resonant rows differ from non-resonant ones for a structured reference.
  const Matrix plain = build_extinction_database(*default_grid(), non_resonant());
  const Spectrum ref = class_mean(0);
  const Matrix res = build_extinction_database(*default_grid(), MieCurveConfig::defaults(), &ref);
  EXPECT_GT((res - plain).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Database, ResonantIndexFollowsDefinition) {
  const Spectrum ref = class_mean(1);
  const Vector& nu = ref.grid().values();
  Vector n_im = ((ref.absorbance().array() - ref.absorbance().mean()) / nu.array()).matrix();
  n_im /= n_im.cwiseAbs().maxCoeff();
  const Vector expected = 0.1 * kramers_kronig(ref.grid(), n_im);
  EXPECT_LE((resonant_index_fluctuation(ref, 0.1) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Database, ConfigValidation) {
  auto cfg = MieCurveConfig::defaults();
  cfg.radius_um.push_back(25.0);
  EXPECT_THROW(cfg.validate(426), DomainError);
  cfg = MieCurveConfig::defaults();
  cfg.index = {1.0};
  EXPECT_THROW(cfg.validate(426), DomainError);
  cfg = MieCurveConfig::defaults();
  cfg.n_components = 50;
  EXPECT_THROW(cfg.validate(426), ConfigError);
  cfg = MieCurveConfig::defaults();
  cfg.radius_um.clear();
  EXPECT_THROW(cfg.validate(426), ConfigError);
  EXPECT_THROW(build_extinction_database(*default_grid(), MieCurveConfig::defaults()), ConfigError);
}

// ---- PCA --------------------------------------------------------------------------

TEST(Pca, RankOneExplainsEverything) {
  std::mt19937_64 rng(1);
  const Vector u = random_vector(30, rng), v = random_vector(50, rng);
  const Matrix m = u * v.transpose();
  const PcaResult p = pca_components(m, 1);
  EXPECT_NEAR(p.explained_variance[0], 1.0, 1e-12);
  EXPECT_THROW(pca_components(m, 2), RankError);
  EXPECT_THROW(leading_components(m, 2), RankError);
}

TEST(Pca, OrthonormalAndOrdered) {
  std::mt19937_64 rng(2);
  const Matrix m = random_matrix(40, 120, rng);
  const PcaResult p = pca_components(m, 10);
  EXPECT_LE((p.components.transpose() * p.components - Matrix::Identity(10, 10)).cwiseAbs().maxCoeff(), 1e-10);
  for (Index i = 1; i < p.explained_variance.size(); ++i) {
    EXPECT_LE(p.explained_variance[i], p.explained_variance[i - 1]);
  }
  EXPECT_LE(p.explained_variance.sum(), 1.0 + 1e-12);
  EXPECT_LE((p.mean_curve - m.colwise().mean().transpose()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Pca, FullReconstruction) {
  std::mt19937_64 rng(3);
  const Matrix m = random_matrix(20, 6, rng);
  const PcaResult p = pca_components(m, 6);
  const Matrix centred = m.rowwise() - p.mean_curve.transpose();
  const Matrix back = (centred * p.components * p.components.transpose()).rowwise() + p.mean_curve.transpose();
  EXPECT_LE((back - m).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Pca, GramPathSpansSameSubspace) {
  std::mt19937_64 rng(10);
  const Matrix m = random_matrix(49, 426, rng);
  const PcaResult a = pca_components(m, 7);
  const PcaResult b = leading_components(m, 7);
  EXPECT_LE((a.components * a.components.transpose() - b.components * b.components.transpose()).cwiseAbs().maxCoeff(),
            1e-10);
  EXPECT_LE((a.explained_variance - b.explained_variance).cwiseAbs().maxCoeff(), 1e-10);
}

// Extinction curves have a fast-decaying spectrum; the subspace of the k-th
// direction is only defined to about eps * s_1 / (s_k - s_k+1).
TEST(Pca, GramPathOnCurveDatabaseWithinPerturbationBound) {
  const Matrix db = build_extinction_database(*default_grid(), non_resonant());
  const Matrix centred = db.rowwise() - db.colwise().mean();
  const Vector sv = Eigen::BDCSVD<Matrix>(centred).singularValues();
  const double bound = 100.0 * std::numeric_limits<double>::epsilon() * sv[0] / (sv[6] - sv[7]);
  const PcaResult a = pca_components(db, 7);
  const PcaResult b = leading_components(db, 7);
  EXPECT_LE((a.components * a.components.transpose() - b.components * b.components.transpose()).cwiseAbs().maxCoeff(),
            bound);
  EXPECT_LE((b.components.transpose() * b.components - Matrix::Identity(7, 7)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((a.explained_variance - b.explained_variance).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Pca, InvalidK) {
  const Matrix m = Matrix::Random(5, 8);
  EXPECT_THROW(pca_components(m, 0), RankError);
  EXPECT_THROW(pca_components(m, 9), RankError);
}

// ---- EMSC --------------------------------------------------------------------------

TEST(Emsc, PropertyResidualOrthogonalToDesign) {
  const EmscBasis basis = make_emsc_basis(class_mean(0), MieCurveConfig::defaults());
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const Vector raw = random_vector(426, rng, -1.0, 2.0);
    const EmscCoefficients k = basis.fit(raw);
    const Vector r = raw - basis.model(k);
    EXPECT_LE((basis.design().transpose() * r).cwiseAbs().maxCoeff(), 1e-8 * raw.norm());
    EXPECT_NEAR(k.residual_norm, r.norm(), 1e-10);
  }
}

TEST(Emsc, BasisComponentsOrthonormal) {
  const EmscBasis basis = make_emsc_basis(class_mean(2), MieCurveConfig::defaults());
  const Matrix& p = basis.mie_components();
  EXPECT_EQ(p.cols(), 7);
  EXPECT_LE((p.transpose() * p - Matrix::Identity(7, 7)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_TRUE(basis.has_mean_curve());
  EXPECT_LE(basis.condition_number(), EmscBasis::kMaxCondition);
}

TEST(Emsc, RawEqualsReference) {
  const Spectrum ref = class_mean(0);
  const EmscCoefficients k = emsc_fit(ref, make_emsc_basis(ref, MieCurveConfig::defaults()));
  EXPECT_NEAR(k.h, 1.0, 1e-10);
  EXPECT_NEAR(k.c, 0.0, 1e-10);
  EXPECT_NEAR(k.m, 0.0, 1e-10);
  EXPECT_NEAR(k.mean_weight, 0.0, 1e-10);
  EXPECT_LE(k.g.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Emsc, OffsetChangesOnlyConstant) {
  const Spectrum ref = class_mean(3);
  const EmscBasis basis = make_emsc_basis(ref, MieCurveConfig::defaults());
  std::mt19937_64 rng(6);
  const Vector raw = ref.absorbance() + 0.05 * random_vector(426, rng);
  const EmscCoefficients a = basis.fit(raw);
  const EmscCoefficients b = basis.fit((raw.array() + 0.3).matrix());
  EXPECT_NEAR(b.c - a.c, 0.3, 1e-10);
  EXPECT_NEAR(b.m, a.m, 1e-10);
  EXPECT_NEAR(b.h, a.h, 1e-10);
  EXPECT_NEAR(b.mean_weight, a.mean_weight, 1e-10);
  EXPECT_LE((b.g - a.g).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Emsc, DependentColumnsAreSingular) {
  const Spectrum ref = class_mean(0);
  Matrix comps(426, 2);
  comps.col(0) = Vector::Ones(426);  // duplicates the constant column
  comps.col(1) = vdh_extinction(ref.grid(), 4.0, 1.3);
  EXPECT_THROW(EmscBasis(ref, comps), SingularDesign);
  // Reference proportional to the linear baseline.
  const Spectrum linear(ref.grid_ptr(), 2.0 * ref.grid().values());
  EXPECT_THROW(EmscBasis(linear, Matrix(426, 0)), SingularDesign);
}

TEST(Emsc, GridMismatchRaises) {
  const EmscBasis basis = make_emsc_basis(class_mean(0), MieCurveConfig::defaults());
  const auto other = uniform_grid(950, 1800, 5.0);
  EXPECT_THROW(emsc_fit(Spectrum(other, Vector::Zero(other->size())), basis), DimensionError);
}

TEST(EmscCorrect, ReferenceAndAffineInversion) {
  const Spectrum ref = class_mean(1);
  const EmscBasis basis = make_emsc_basis(ref, MieCurveConfig::defaults());
  const auto same = emsc_correct_once(ref, basis);
  EXPECT_LE((same.corrected.absorbance() - ref.absorbance()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_FALSE(same.h_clamped);
  const Spectrum affine(ref.grid_ptr(), (2.0 * ref.absorbance().array() + 0.5).matrix());
  const auto inv = emsc_correct_once(affine, basis);
  EXPECT_NEAR(inv.coefficients.h, 2.0, 1e-9);
  EXPECT_NEAR(inv.coefficients.c, 0.5, 1e-9);
  EXPECT_LE((inv.corrected.absorbance() - ref.absorbance()).cwiseAbs().maxCoeff(), 1e-9);
}

// Forward model with a constant-index extinction curve, inverted with the
// matching (non-resonant) curve set and the true pure spectrum.
TEST(EmscCorrect, NoiseFreeDistortionWithTrueReference) {
  const auto g = default_grid();
  const auto templates = synth::default_templates();
  const synth::DistortionSampler sampler;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const Spectrum pure = synth::generate_pure(templates[i % 5], g, i);
    auto p = sampler.sample(derive_seed(12, streams::kDistortion, i));
    p.noise_sigma = 0.0;
    const Spectrum raw = synth::distort(pure, p, i);
    const auto out = emsc_correct_once(raw, make_emsc_basis(pure, non_resonant()));
    EXPECT_LE(rmse(out.corrected.absorbance(), pure.absorbance()), 1e-6) << i;
  }
}

TEST(EmscCorrect, SmallMultiplierIsClampedAndFlagged) {
  const Spectrum ref = class_mean(0);
  const EmscBasis basis = make_emsc_basis(ref, MieCurveConfig::defaults());
  const Spectrum raw(ref.grid_ptr(), (1e-5 * ref.absorbance().array() + 0.1).matrix());
  const auto out = emsc_correct_once(raw, basis);
  EXPECT_TRUE(out.h_clamped);
  EXPECT_NEAR(out.coefficients.h, 1e-5, 1e-9);
  EXPECT_TRUE(out.corrected.absorbance().allFinite());
  // Corrected is divided by the floor, not by the tiny h.
  EXPECT_LE((out.corrected.absorbance() - ref.absorbance() * 1e-5 / 1e-3).cwiseAbs().maxCoeff(), 1e-6);
  const Spectrum neg(ref.grid_ptr(), (-1e-5 * ref.absorbance().array()).matrix());
  const auto n = emsc_correct_once(neg, basis);
  EXPECT_TRUE(n.h_clamped);
  EXPECT_LE((n.corrected.absorbance() - ref.absorbance() * 1e-2).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(EmscCorrect, PropertyExactRecoveryInsideSpan) {
  const Spectrum ref = class_mean(4);
  const EmscBasis basis = make_emsc_basis(ref, MieCurveConfig::defaults());
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    EmscCoefficients k;
    k.c = 0.1 * u(rng);
    k.m = 1e-4 * u(rng);
    k.h = 1.0 + 0.5 * u(rng);
    k.mean_weight = u(rng);
    k.g = random_vector(7, rng);
    const Spectrum raw(ref.grid_ptr(), basis.model(k));
    const auto out = emsc_correct_once(raw, basis);
    EXPECT_LE((out.corrected.absorbance() - ref.absorbance()).cwiseAbs().maxCoeff(), 1e-9) << t;
  }
}

// ---- iterative correction ---------------------------------------------------------

TEST(Rmies, OneIterationIsSingleCorrection) {
  const auto ds = synth::generate_dataset(synth::default_templates(), 2, synth::DistortionSampler{}, default_grid(), 3);
  const Spectrum ref = synth::mean_reference(synth::default_templates(), default_grid());
  RmiesConfig cfg;
  cfg.iterations = 1;
  const EmscBasis basis = make_emsc_basis(ref, cfg.curves);
  for (Index i = 0; i < ds.size(); ++i) {
    const auto a = rmies_correct(ds.raw_spectrum(i), ref, cfg);
    const auto b = emsc_correct_once(ds.raw_spectrum(i), basis);
    EXPECT_EQ(a.residuals.size(), 1u);
    EXPECT_LE((a.corrected.absorbance() - b.corrected.absorbance()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Rmies, ScatterFreeInputIsFixedPoint) {
  const Spectrum ref = class_mean(2);
  for (int iterations : {1, 2, 5, 10}) {
    RmiesConfig cfg;
    cfg.iterations = iterations;
    const auto r = rmies_correct(ref, ref, cfg);
    EXPECT_EQ(static_cast<int>(r.residuals.size()), iterations);
    EXPECT_EQ(static_cast<int>(r.coefficients.size()), iterations);
    EXPECT_LE((r.corrected.absorbance() - ref.absorbance()).cwiseAbs().maxCoeff(), 1e-9) << iterations;
  }
}

TEST(Rmies, NoiseFreeReductionFromClassMean) {
  const auto g = default_grid();
  synth::DistortionSampler sampler;
  sampler.noise_sigma = 0.0;
  const auto ds = synth::generate_dataset(synth::default_templates(), 10, sampler, g, 31);
  double before = 0.0, after = 0.0;
  for (Index i = 0; i < ds.size(); ++i) {
    const auto r = rmies_correct(ds.raw_spectrum(i), class_mean(static_cast<int>(i % 5)), RmiesConfig{});
    before += rmse(ds.raw.col(i), ds.pure->col(i));
    after += rmse(r.corrected.absorbance(), ds.pure->col(i));
  }
  EXPECT_LE(after, 0.2 * before) << "before " << before / 50 << " after " << after / 50;
}

TEST(Rmies, PropertyFirstRefinementDoesNotIncreaseResidual) {
  const auto g = default_grid();
  synth::DistortionSampler sampler;
  sampler.noise_sigma = 0.0;
  const auto ds = synth::generate_dataset(synth::default_templates(), 10, sampler, g, 32);
  RmiesConfig cfg;
  cfg.iterations = 2;
  for (Index i = 0; i < ds.size(); ++i) {
    const auto r = rmies_correct(ds.raw_spectrum(i), class_mean(static_cast<int>(i % 5)), cfg);
    EXPECT_GE(r.residuals[0], r.residuals[1]) << i;
  }
}

TEST(Rmies, BlendZeroKeepsInitialReference) {
  const auto ds = synth::generate_dataset(synth::default_templates(), 1, synth::DistortionSampler{}, default_grid(), 4);
  const Spectrum ref = synth::mean_reference(synth::default_templates(), default_grid());
  RmiesConfig cfg;
  cfg.reference_blend = 0.0;
  cfg.iterations = 4;
  RmiesConfig single = cfg;
  single.iterations = 1;
  const auto a = rmies_correct(ds.raw_spectrum(0), ref, cfg);
  const auto b = rmies_correct(ds.raw_spectrum(0), ref, single);
  EXPECT_LE((a.corrected.absorbance() - b.corrected.absorbance()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rmies, Errors) {
  const Spectrum ref = class_mean(0);
  EXPECT_THROW(rmies_correct(ref, Spectrum(ref.grid_ptr(), Vector::Zero(426)), RmiesConfig{}), DegenerateInput);
  RmiesConfig cfg;
  cfg.iterations = 0;
  EXPECT_THROW(rmies_correct(ref, ref, cfg), ConfigError);
  cfg = RmiesConfig{};
  cfg.reference_blend = 1.5;
  EXPECT_THROW(rmies_correct(ref, ref, cfg), ConfigError);
}

TEST(Rmies, Deterministic) {
  const auto ds = synth::generate_dataset(synth::default_templates(), 1, synth::DistortionSampler{}, default_grid(), 5);
  const Spectrum ref = synth::mean_reference(synth::default_templates(), default_grid());
  const auto a = rmies_correct(ds.raw_spectrum(2), ref, RmiesConfig{});
  const auto b = rmies_correct(ds.raw_spectrum(2), ref, RmiesConfig{});
  EXPECT_EQ(a.corrected.absorbance(), b.corrected.absorbance());
  EXPECT_EQ(a.residuals, b.residuals);
}

// ---- cube correction ----------------------------------------------------------------

TEST(CorrectCube, SinglePixelMatchesSingleCorrection) {
  const auto ds = synth::generate_dataset(synth::default_templates(), 1, synth::DistortionSampler{}, default_grid(), 6);
  const Spectrum ref = synth::mean_reference(synth::default_templates(), default_grid());
  const SpectralCube cube(1, 1, default_grid(), ds.raw.col(0));
  const auto out = correct_cube(cube, ref, RmiesConfig{});
  const auto r = rmies_correct(ds.raw_spectrum(0), ref, RmiesConfig{});
  EXPECT_EQ(out.cube.data().col(0), r.corrected.absorbance());
  EXPECT_TRUE(out.failures.empty());
  EXPECT_EQ(out.residuals[0], r.residuals);
}

TEST(CorrectCube, SerialAndParallelBitIdentical) {
  const auto ds = synth::generate_dataset(synth::default_templates(), 6, synth::DistortionSampler{}, default_grid(), 7);
  const Spectrum ref = synth::mean_reference(synth::default_templates(), default_grid());
  const SpectralCube cube(6, 5, default_grid(), ds.raw);
  const auto a = correct_cube(cube, ref, RmiesConfig{}, 1);
  const auto b = correct_cube(cube, ref, RmiesConfig{}, 4);
  EXPECT_EQ(a.cube.data(), b.cube.data());
  EXPECT_EQ(a.residuals, b.residuals);
  EXPECT_EQ(a.cube.width(), 6);
  EXPECT_EQ(a.cube.height(), 5);
}

TEST(CorrectCube, FailedPixelIsReportedAndKeepsRawValues) {
  const auto ds = synth::generate_dataset(synth::default_templates(), 1, synth::DistortionSampler{}, default_grid(), 8);
  const Spectrum ref = synth::mean_reference(synth::default_templates(), default_grid());
  SpectraMatrix data = ds.raw;
  data.col(3).setZero();  // zero spectrum: the second iteration gets a zero reference
  const SpectralCube cube(5, 1, default_grid(), data);
  const auto out = correct_cube(cube, ref, RmiesConfig{}, 2);
  ASSERT_EQ(out.failures.size(), 1u);
  EXPECT_EQ(out.failures[0].pixel, 3);
  EXPECT_FALSE(out.failures[0].message.empty());
  EXPECT_EQ(out.cube.data().col(3), data.col(3));
  for (Index i : {0, 1, 2, 4}) {
    EXPECT_EQ(out.cube.data().col(i), rmies_correct(ds.raw_spectrum(i), ref, RmiesConfig{}).corrected.absorbance());
  }
}

TEST(CorrectionReport, JsonCarriesTrajectory) {
  const Spectrum ref = class_mean(0);
  RmiesConfig cfg;
  cfg.iterations = 3;
  const auto r = rmies_correct(ref, ref, cfg);
  const std::string j = correction_report_json(r);
  EXPECT_NE(j.find("\"iterations\""), std::string::npos);
  EXPECT_NE(j.find("\"residuals\""), std::string::npos);
}
