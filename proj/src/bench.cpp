// SPDX-License-Identifier: Apache-2.0
#include "rmies/bench.hpp"

#include "rmies/parallel.hpp"
#include "rmies/random.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>

namespace rmies::bench {

using json = nlohmann::json;

namespace {

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string checksum_of(const SpectraMatrix& m) {
  std::uint64_t h = fnv1a(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  const Index dims[2] = {m.rows(), m.cols()};
  return hex64(fnv1a(dims, sizeof dims, h));
}

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  double s = 0.0;
  for (double x : v) s += x;
  mean = s / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

}  // namespace

OracleCorrector::OracleCorrector(Spectrum reference, RmiesConfig cfg, int threads)
    : reference_(std::move(reference)), cfg_(std::move(cfg)), threads_(std::max(1, threads)) {
  cfg_.validate(reference_.size());
}

std::string OracleCorrector::id() const { return "oracle-" + std::to_string(cfg_.iterations) + "it"; }

SpectraMatrix OracleCorrector::correct(const SpectralCube& cube) const {
  auto result = correct_cube(cube, reference_, cfg_, threads_);
  if (!result.failures.empty()) {
    const auto& f = result.failures.front();
    throw NumericalError("oracle failed at pixel " + std::to_string(f.pixel) + ": " + f.message);
  }
  return result.cube.data();
}

SurrogateCorrector::SurrogateCorrector(std::shared_ptr<const nn::ModelParameters> model, int threads)
    : model_(std::move(model)), threads_(std::max(1, threads)) {
  if (!model_ || !model_->complete()) throw ConfigError("surrogate corrector needs a complete model");
}

std::string SurrogateCorrector::id() const { return "surrogate"; }

SpectraMatrix SurrogateCorrector::correct(const SpectralCube& cube) const {
  return surrogate_correct(*model_, cube.data(), threads_);
}

SpectraMatrix surrogate_correct(const nn::ModelParameters& model, const Eigen::Ref<const SpectraMatrix>& raw,
                                int threads) {
  if (!model.complete() || model.input_dim() != raw.rows()) {
    throw DimensionError("surrogate: spectra length differs from the model input");
  }
  SpectraMatrix out(model.output_dim(), raw.cols());
  parallel_for(raw.cols(), threads, [&](Index i) { out.col(i) = nn::forward(model, raw.col(i)); });
  return out;
}

bool BenchReport::consistent() const {
  if (n_spectra <= 0) return false;
  const double implied = total_seconds_mean * 1e6 / static_cast<double>(n_spectra);
  return std::abs(per_spectrum_us_mean - implied) <= 0.01 * implied;
}

std::string cube_fingerprint(const SpectralCube& cube) {
  const auto& g = cube.grid().values();
  std::uint64_t h = fnv1a(g.data(), static_cast<std::size_t>(g.size()) * sizeof(double));
  const Index dims[3] = {cube.width(), cube.height(), cube.bands()};
  h = fnv1a(dims, sizeof dims, h);
  h = fnv1a(cube.data().data(), static_cast<std::size_t>(cube.data().size()) * sizeof(double), h);
  return hex64(h);
}

BenchReport run_bench(const Corrector& corrector, const SpectralCube& cube, int runs) {
  if (runs < 1) throw ConfigError("run_bench: runs must be >= 1");
  using clock = std::chrono::steady_clock;
  BenchReport r;
  r.corrector = corrector.id();
  r.threads = corrector.threads();
  r.n_spectra = cube.pixels();
  r.runs = runs;
  r.fingerprint = cube_fingerprint(cube);

  (void)corrector.correct(cube);  // warm-up, untimed
  std::vector<double> per_us;
  for (int k = 0; k < runs; ++k) {
    const auto t0 = clock::now();
    const SpectraMatrix out = corrector.correct(cube);
    const double s = std::chrono::duration<double>(clock::now() - t0).count();
    const std::string sum = checksum_of(out);
    if (k == 0) {
      r.checksum = sum;
    } else if (sum != r.checksum) {
      r.outputs_identical = false;
    }
    r.run_seconds.push_back(s);
    per_us.push_back(s * 1e6 / static_cast<double>(r.n_spectra));
  }
  mean_std(r.run_seconds, r.total_seconds_mean, r.total_seconds_std);
  mean_std(per_us, r.per_spectrum_us_mean, r.per_spectrum_us_std);
  return r;
}

std::vector<Speedup> compare(const std::vector<BenchReport>& reports) {
  if (reports.size() < 2) throw ConfigError("compare: need at least two reports");
  std::vector<Speedup> out;
  const BenchReport& base = reports.front();
  for (std::size_t i = 1; i < reports.size(); ++i) {
    const BenchReport& r = reports[i];
    if (r.fingerprint != base.fingerprint || r.n_spectra != base.n_spectra) {
      throw ConfigError("compare: reports were measured on different inputs");
    }
    Speedup s;
    s.baseline = base.corrector;
    s.candidate = r.corrector;
    s.ratio = base.per_spectrum_us_mean / r.per_spectrum_us_mean;
    const double ra = base.per_spectrum_us_std / base.per_spectrum_us_mean;
    const double rb = r.per_spectrum_us_std / r.per_spectrum_us_mean;
    s.ratio_std = s.ratio * std::sqrt(ra * ra + rb * rb);
    out.push_back(s);
  }
  return out;
}

std::string report_json(const std::vector<BenchReport>& reports, const std::vector<Speedup>& speedups) {
  json j;
  j["reports"] = json::array();
  for (const auto& r : reports) {
    j["reports"].push_back({{"corrector", r.corrector},
                            {"threads", r.threads},
                            {"n_spectra", r.n_spectra},
                            {"runs", r.runs},
                            {"warmup_runs", 1},
                            {"run_seconds", r.run_seconds},
                            {"total_seconds_mean", r.total_seconds_mean},
                            {"total_seconds_std", r.total_seconds_std},
                            {"per_spectrum_us_mean", r.per_spectrum_us_mean},
                            {"per_spectrum_us_std", r.per_spectrum_us_std},
                            {"checksum", r.checksum},
                            {"outputs_identical", r.outputs_identical},
                            {"consistent", r.consistent()},
                            {"fingerprint", r.fingerprint}});
  }
  j["speedups"] = json::array();
  for (const auto& s : speedups) {
    j["speedups"].push_back(
        {{"baseline", s.baseline}, {"candidate", s.candidate}, {"ratio", s.ratio}, {"ratio_std", s.ratio_std}});
  }
  return j.dump(1);
}

std::string report_table(const std::vector<BenchReport>& reports, const std::vector<Speedup>& speedups) {
  std::vector<std::string> head{""}, total{"Time for val.-set"}, per{"Time per spectrum"};
  char buf[96];
  for (const auto& r : reports) {
    std::string label = r.corrector;
    if (r.threads > 1) label += " (" + std::to_string(r.threads) + " threads)";
    head.push_back(label);
    std::snprintf(buf, sizeof buf, "%.3f s +- %.3f", r.total_seconds_mean, r.total_seconds_std);
    total.emplace_back(buf);
    std::snprintf(buf, sizeof buf, "%.2f us +- %.2f", r.per_spectrum_us_mean, r.per_spectrum_us_std);
    per.emplace_back(buf);
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto* row : {&head, &total, &per}) {
    for (std::size_t c = 0; c < row->size(); ++c) width[c] = std::max(width[c], (*row)[c].size());
  }
  std::string out;
  for (const auto* row : {&head, &total, &per}) {
    for (std::size_t c = 0; c < row->size(); ++c) {
      const std::string& cell = (*row)[c];
      out += cell + std::string(width[c] - cell.size() + (c + 1 < row->size() ? 3 : 0), ' ');
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += "\n";
  }
  if (!reports.empty()) {
    std::snprintf(buf, sizeof buf, "(%lld spectra, %d runs after 1 warm-up)\n",
                  static_cast<long long>(reports.front().n_spectra), reports.front().runs);
    out += buf;
  }
  for (const auto& s : speedups) {
    std::snprintf(buf, sizeof buf, "Speedup %s / %s: %.2fx +- %.2f\n", s.baseline.c_str(), s.candidate.c_str(), s.ratio,
                  s.ratio_std);
    out += buf;
  }
  return out;
}

}  // namespace rmies::bench
