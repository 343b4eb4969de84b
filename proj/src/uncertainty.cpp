// SPDX-License-Identifier: Apache-2.0
#include "rmies/uncertainty.hpp"

#include "rmies/io.hpp"
#include "rmies/parallel.hpp"
#include "rmies/random.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace rmies::unc {

std::vector<Vector> dropout_masks(const nn::ModelParameters& model, double p, std::uint64_t seed, std::uint64_t pass) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout p must lie in [0, 1)");
  Rng rng(derive_seed(seed, streams::kDropout, pass));
  const double keep = 1.0 / (1.0 - p);
  std::vector<Vector> masks;
  for (Index l = 0; l < model.config.hidden_layers(); ++l) {
    const Index width = model.layers[static_cast<std::size_t>(l)].out_dim();
    Vector m(width);
    for (Index i = 0; i < width; ++i) m[i] = rng.bernoulli(p) ? 0.0 : keep;
    masks.push_back(std::move(m));
  }
  return masks;
}

UncertaintyResult mc_dropout_predict(const nn::ModelParameters& model, const Spectrum& x, int passes, double p,
                                     double z, std::uint64_t seed, int threads) {
  if (passes < 2) throw ConfigError("mc_dropout: need T >= 2 passes");
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("mc_dropout: p must lie in [0, 1)");
  if (!(z >= 0.0)) throw ConfigError("mc_dropout: z must be >= 0");
  if (!model.complete() || model.output_dim() != x.size() || model.input_dim() != x.size()) {
    throw DimensionError("mc_dropout: spectrum does not match the model");
  }
  std::vector<Vector> outputs(static_cast<std::size_t>(passes));
  parallel_for(passes, threads, [&](Index t) {
    const auto masks = dropout_masks(model, p, seed, static_cast<std::uint64_t>(t));
    outputs[static_cast<std::size_t>(t)] = nn::forward_masked(model, x.absorbance(), masks);
  });
  // Welford, in pass order, so the result does not depend on `threads`.
  Vector mean = Vector::Zero(x.size());
  Vector m2 = Vector::Zero(x.size());
  for (int t = 0; t < passes; ++t) {
    const Vector& y = outputs[static_cast<std::size_t>(t)];
    const Vector d = y - mean;
    mean += d / static_cast<double>(t + 1);
    m2.array() += d.array() * (y - mean).array();
  }
  Vector var = (m2 / static_cast<double>(passes)).cwiseMax(0.0);
  const Vector half = z * var.cwiseSqrt();
  const GridPtr& g = x.grid_ptr();
  return {Spectrum(g, mean), std::move(var), Spectrum(g, mean - half), Spectrum(g, mean + half), passes, p, z};
}

std::vector<UncertaintyResult> mc_dropout_dataset(const nn::ModelParameters& model, const GridPtr& grid,
                                                  const Eigen::Ref<const SpectraMatrix>& x, int passes, double p,
                                                  double z, std::uint64_t seed, int threads) {
  std::vector<std::optional<UncertaintyResult>> slots(static_cast<std::size_t>(x.cols()));
  parallel_for(x.cols(), threads, [&](Index i) {
    slots[static_cast<std::size_t>(i)] = mc_dropout_predict(
        model, Spectrum(grid, x.col(i)), passes, p, z, derive_seed(seed, streams::kDropout, static_cast<std::uint64_t>(i)));
  });
  std::vector<UncertaintyResult> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

namespace {

Vector average_ranks(const Eigen::Ref<const Vector>& v) {
  const Index n = v.size();
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return v[a] < v[b]; });
  Vector r(n);
  Index i = 0;
  while (i < n) {
    Index j = i;
    while (j + 1 < n && v[idx[static_cast<std::size_t>(j + 1)]] == v[idx[static_cast<std::size_t>(i)]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Index k = i; k <= j; ++k) r[idx[static_cast<std::size_t>(k)]] = rank;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  if (a.size() != b.size()) throw DimensionError("spearman: series lengths differ");
  if (a.size() < 2) throw DegenerateInput("spearman: need at least two points");
  if (a.maxCoeff() == a.minCoeff() || b.maxCoeff() == b.minCoeff()) {
    throw DegenerateInput("spearman: constant series has no ranking");
  }
  const Vector ra = average_ranks(a);
  const Vector rb = average_ranks(b);
  const Vector ca = ra.array() - ra.mean();
  const Vector cb = rb.array() - rb.mean();
  return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

Alignment uncertainty_error_alignment(const std::vector<UncertaintyResult>& results,
                                      const std::vector<Spectrum>& oracle) {
  if (results.size() != oracle.size()) throw DimensionError("alignment: results and oracle lists differ in length");
  if (results.empty()) throw DimensionError("alignment: empty input");
  const Index bands = results.front().mean.size();
  Alignment a;
  a.mean_abs_error = Vector::Zero(bands);
  a.mean_std = Vector::Zero(bands);
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!(results[i].mean.grid() == oracle[i].grid()) || !(results[i].mean.grid() == results.front().mean.grid())) {
      throw DimensionError("alignment: spectra are not on one grid");
    }
    a.mean_abs_error += (results[i].mean.absorbance() - oracle[i].absorbance()).cwiseAbs();
    a.mean_std += results[i].std_dev();
  }
  a.mean_abs_error /= static_cast<double>(results.size());
  a.mean_std /= static_cast<double>(results.size());
  a.correlation = spearman(a.mean_std, a.mean_abs_error);
  return a;
}

std::string uncertainty_csv(const UncertaintyResult& r) {
  std::string out = "wavenumber,mean,std,ci_low,ci_high\n";
  const Vector sd = r.std_dev();
  char buf[160];
  for (Index i = 0; i < r.mean.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", r.mean.grid()[i], r.mean.absorbance()[i], sd[i],
                  r.ci_low.absorbance()[i], r.ci_high.absorbance()[i]);
    out += buf;
  }
  return out;
}

void save_uncertainty_csv(const UncertaintyResult& r, const std::filesystem::path& path) {
  io::write_text_file(path, uncertainty_csv(r));
}

}  // namespace rmies::unc
