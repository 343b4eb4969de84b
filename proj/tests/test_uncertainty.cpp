// SPDX-License-Identifier: Apache-2.0
#include "rmies/network.hpp"
#include "rmies/random.hpp"
#include "rmies/uncertainty.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace rmies;
using namespace rmies::testing;

namespace {

nn::ModelParameters default_model(std::uint64_t seed = 1) {
  nn::NetworkConfig cfg;
  cfg.seed = seed;
  return nn::init_network(cfg);
}

Spectrum random_spectrum(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Spectrum(default_grid(), random_vector(426, rng, 0.0, 1.5));
}

// 2 x 2 contingency chi-square statistic, one degree of freedom.
double chi_square_2x2(const long n[2][2]) {
  const double total = static_cast<double>(n[0][0] + n[0][1] + n[1][0] + n[1][1]);
  double chi = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double row = static_cast<double>(n[i][0] + n[i][1]);
      const double col = static_cast<double>(n[0][j] + n[1][j]);
      const double expected = row * col / total;
      chi += (static_cast<double>(n[i][j]) - expected) * (static_cast<double>(n[i][j]) - expected) / expected;
    }
  }
  return chi;
}

constexpr double kChi1Dof999 = 10.828;  // 0.999 quantile, 1 degree of freedom

}  // namespace

TEST(McDropout, ZeroRateIsDeterministicForward) {
  const auto m = default_model();
  const Spectrum x = random_spectrum(1);
  const auto r = unc::mc_dropout_predict(m, x, 10, 0.0, 1.96, 3);
  EXPECT_EQ(r.mean.absorbance(), nn::forward(m, x).absorbance());
  EXPECT_EQ(r.variance, Vector::Zero(426));
  EXPECT_EQ(r.ci_low.absorbance(), r.mean.absorbance());
  EXPECT_EQ(r.ci_high.absorbance(), r.mean.absorbance());
  EXPECT_EQ(r.passes, 10);
}

TEST(McDropout, RepeatCallIsIdentical) {
  const auto m = default_model();
  const Spectrum x = random_spectrum(2);
  const auto a = unc::mc_dropout_predict(m, x, 50, 0.5, 1.96, 11);
  const auto b = unc::mc_dropout_predict(m, x, 50, 0.5, 1.96, 11);
  EXPECT_EQ(a.mean.absorbance(), b.mean.absorbance());
  EXPECT_EQ(a.variance, b.variance);
  const auto c = unc::mc_dropout_predict(m, x, 50, 0.5, 1.96, 12);
  EXPECT_NE(a.mean.absorbance(), c.mean.absorbance());
}

// Independent replay: explicit masks, plain mean and population variance.
TEST(McDropout, MatchesMaskReplay) {
  const auto m = default_model();
  const Spectrum x = random_spectrum(3);
  const int passes = 20;
  const auto r = unc::mc_dropout_predict(m, x, passes, 0.3, 2.0, 5);
  Matrix outs(426, passes);
  for (int t = 0; t < passes; ++t) {
    outs.col(t) = nn::forward_masked(m, x.absorbance(), unc::dropout_masks(m, 0.3, 5, static_cast<std::uint64_t>(t)));
  }
  const Vector mean = outs.rowwise().mean();
  const Vector var = (outs.colwise() - mean).array().square().rowwise().mean();
  EXPECT_LE((r.mean.absorbance() - mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((r.variance - var).cwiseAbs().maxCoeff(), 1e-12);
  const Vector half = 2.0 * var.cwiseSqrt();
  EXPECT_LE((r.ci_high.absorbance() - (mean + half)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((r.ci_low.absorbance() - (mean - half)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(McDropout, MeanEstimateShrinksWithSquareRootOfPasses) {
  const auto m = default_model();
  const Spectrum x = random_spectrum(4);
  const int seeds = 20;
  Matrix m100(426, seeds), m1000(426, seeds);
  for (int s = 0; s < seeds; ++s) {
    m100.col(s) = unc::mc_dropout_predict(m, x, 100, 0.5, 1.96, 1000u + s, 4).mean.absorbance();
    m1000.col(s) = unc::mc_dropout_predict(m, x, 1000, 0.5, 1.96, 5000u + s, 4).mean.absorbance();
  }
  auto spread = [](const Matrix& a) {
    const Vector mu = a.rowwise().mean();
    return Vector((a.colwise() - mu).array().square().rowwise().sum().sqrt() / std::sqrt(a.cols() - 1.0));
  };
  const double ratio = (spread(m100).array() / spread(m1000).array()).mean();
  EXPECT_NEAR(ratio, std::sqrt(10.0), 0.3 * std::sqrt(10.0));
}

TEST(McDropout, InvalidArguments) {
  const auto m = default_model();
  const Spectrum x = random_spectrum(5);
  EXPECT_THROW(unc::mc_dropout_predict(m, x, 1, 0.5, 1.96, 1), ConfigError);
  EXPECT_THROW(unc::mc_dropout_predict(m, x, 10, 1.0, 1.96, 1), ConfigError);
  EXPECT_THROW(unc::mc_dropout_predict(m, x, 10, -0.1, 1.96, 1), ConfigError);
  EXPECT_THROW(unc::mc_dropout_predict(m, x, 10, 0.5, -1.0, 1), ConfigError);
  const Spectrum short_x(uniform_grid(950, 1000, 2), Vector::Zero(26));
  EXPECT_THROW(unc::mc_dropout_predict(m, short_x, 10, 0.5, 1.96, 1), DimensionError);
}

TEST(McDropout, PropertyVarianceNonNegativeAndBandOrdered) {
  const auto m = default_model(7);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto r = unc::mc_dropout_predict(m, random_spectrum(100 + s), 30, 0.1 * static_cast<double>(s % 9), 1.96, s);
    EXPECT_GE(r.variance.minCoeff(), 0.0);
    EXPECT_TRUE((r.ci_low.absorbance().array() <= r.mean.absorbance().array()).all());
    EXPECT_TRUE((r.mean.absorbance().array() <= r.ci_high.absorbance().array()).all());
  }
}

TEST(McDropout, ParallelEqualsSerial) {
  const auto m = default_model();
  const Spectrum x = random_spectrum(6);
  const auto a = unc::mc_dropout_predict(m, x, 64, 0.5, 1.96, 9, 1);
  const auto b = unc::mc_dropout_predict(m, x, 64, 0.5, 1.96, 9, 4);
  EXPECT_EQ(a.mean.absorbance(), b.mean.absorbance());
  EXPECT_EQ(a.variance, b.variance);
  std::mt19937_64 rng(6);
  const Matrix xs = random_matrix(426, 6, rng, 0, 1);
  const auto da = unc::mc_dropout_dataset(m, default_grid(), xs, 20, 0.5, 1.96, 3, 1);
  const auto db = unc::mc_dropout_dataset(m, default_grid(), xs, 20, 0.5, 1.96, 3, 3);
  ASSERT_EQ(da.size(), 6u);
  for (std::size_t i = 0; i < da.size(); ++i) {
    EXPECT_EQ(da[i].mean.absorbance(), db[i].mean.absorbance());
    EXPECT_EQ(da[i].variance, db[i].variance);
    const auto single = unc::mc_dropout_predict(m, Spectrum(default_grid(), xs.col(static_cast<Index>(i))), 20, 0.5,
                                                1.96, derive_seed(3, streams::kDropout, i));
    EXPECT_EQ(single.mean.absorbance(), da[i].mean.absorbance());
  }
}

// ---- masks ------------------------------------------------------------------------

TEST(Masks, ShapeScaleAndRate) {
  const auto m = default_model();
  const auto masks = unc::dropout_masks(m, 0.25, 4, 0);
  ASSERT_EQ(masks.size(), 3u);
  EXPECT_EQ(masks[0].size(), 256);
  EXPECT_EQ(masks[1].size(), 128);
  EXPECT_EQ(masks[2].size(), 256);
  for (const auto& mk : masks) {
    for (Index i = 0; i < mk.size(); ++i) EXPECT_TRUE(mk[i] == 0.0 || mk[i] == 1.0 / 0.75);
  }
  EXPECT_THROW(unc::dropout_masks(m, 1.0, 4, 0), ConfigError);
}

TEST(Masks, PropertyIndependentAcrossPassesAndLayers) {
  const auto m = default_model();
  const int passes = 400;
  std::vector<std::vector<Vector>> all;
  for (int t = 0; t < passes; ++t) all.push_back(unc::dropout_masks(m, 0.5, 21, static_cast<std::uint64_t>(t)));
  long kept = 0, total = 0;
  long across_passes[2][2] = {{0, 0}, {0, 0}};
  long across_layers[2][2] = {{0, 0}, {0, 0}};
  for (int t = 0; t < passes; ++t) {
    for (const auto& mk : all[static_cast<std::size_t>(t)]) {
      kept += (mk.array() > 0.0).count();
      total += mk.size();
    }
    if (t + 1 < passes) {
      const Vector& a = all[static_cast<std::size_t>(t)][0];
      const Vector& b = all[static_cast<std::size_t>(t) + 1][0];
      for (Index i = 0; i < a.size(); ++i) ++across_passes[a[i] > 0][b[i] > 0];
    }
    const Vector& l0 = all[static_cast<std::size_t>(t)][0];
    const Vector& l1 = all[static_cast<std::size_t>(t)][1];
    for (Index i = 0; i < l1.size(); ++i) ++across_layers[l0[i] > 0][l1[i] > 0];
  }
  // Marginal rate, two-sided normal bound at 4 sigma.
  EXPECT_NEAR(static_cast<double>(kept) / static_cast<double>(total), 0.5, 4.0 * 0.5 / std::sqrt(double(total)));
  EXPECT_LT(chi_square_2x2(across_passes), kChi1Dof999);
  EXPECT_LT(chi_square_2x2(across_layers), kChi1Dof999);
}

// ---- Spearman and alignment ---------------------------------------------------------

TEST(Spearman, IdenticalAndReversed) {
  std::mt19937_64 rng(30);
  const Vector a = random_vector(50, rng);
  EXPECT_NEAR(unc::spearman(a, a), 1.0, 1e-15);
  EXPECT_NEAR(unc::spearman(a, -a), -1.0, 1e-15);
  // Monotone transform keeps ranks.
  EXPECT_NEAR(unc::spearman(a, Vector(a.array().exp())), 1.0, 1e-15);
}

TEST(Spearman, TiesUseAverageRanks) {
  const Vector a = (Vector(5) << 1, 2, 2, 3, 4).finished();
  const Vector b = (Vector(5) << 10, 20, 30, 40, 50).finished();
  // Ranks of a: 1, 2.5, 2.5, 4, 5; Pearson with 1..5 over the rank vectors.
  const Vector ra = (Vector(5) << 1, 2.5, 2.5, 4, 5).finished();
  const Vector rb = (Vector(5) << 1, 2, 3, 4, 5).finished();
  const Vector ca = ra.array() - ra.mean(), cb = rb.array() - rb.mean();
  EXPECT_NEAR(unc::spearman(a, b), ca.dot(cb) / (ca.norm() * cb.norm()), 1e-15);
}

TEST(Spearman, Errors) {
  EXPECT_THROW(unc::spearman(Vector::Ones(5), Vector::LinSpaced(5, 0, 1)), DegenerateInput);
  EXPECT_THROW(unc::spearman(Vector::LinSpaced(4, 0, 1), Vector::LinSpaced(5, 0, 1)), DimensionError);
  EXPECT_THROW(unc::spearman(Vector::Ones(1), Vector::Ones(1)), DegenerateInput);
}

TEST(Alignment, PooledSeriesAndCorrelation) {
  const auto m = default_model();
  std::mt19937_64 rng(31);
  const Matrix xs = random_matrix(426, 4, rng, 0, 1);
  const auto results = unc::mc_dropout_dataset(m, default_grid(), xs, 10, 0.5, 1.96, 4);
  std::vector<Spectrum> oracle;
  for (Index i = 0; i < 4; ++i) oracle.emplace_back(default_grid(), random_vector(426, rng));
  const auto a = unc::uncertainty_error_alignment(results, oracle);
  Vector err = Vector::Zero(426), sd = Vector::Zero(426);
  for (std::size_t i = 0; i < 4; ++i) {
    err += (results[i].mean.absorbance() - oracle[i].absorbance()).cwiseAbs() / 4.0;
    sd += results[i].std_dev() / 4.0;
  }
  EXPECT_LE((a.mean_abs_error - err).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((a.mean_std - sd).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(a.correlation, unc::spearman(sd, err), 1e-12);
  oracle.pop_back();
  EXPECT_THROW(unc::uncertainty_error_alignment(results, oracle), DimensionError);
}

TEST(UncertaintyCsv, HeaderAndRows) {
  const auto m = default_model();
  const auto r = unc::mc_dropout_predict(m, random_spectrum(8), 5, 0.5, 1.96, 1);
  const std::string csv = unc::uncertainty_csv(r);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "wavenumber,mean,std,ci_low,ci_high");
  int rows = 0;
  while (std::getline(in, line)) {
    if (rows == 0) {
      double v[5];
      char c;
      std::istringstream ls(line);
      ls >> v[0] >> c >> v[1] >> c >> v[2] >> c >> v[3] >> c >> v[4];
      EXPECT_EQ(v[0], 950.0);
      EXPECT_EQ(v[1], r.mean.absorbance()[0]);
      EXPECT_EQ(v[2], r.std_dev()[0]);
      EXPECT_EQ(v[3], r.ci_low.absorbance()[0]);
    }
    ++rows;
  }
  EXPECT_EQ(rows, 426);
}
