// SPDX-License-Identifier: Apache-2.0
#include "rmies/synth.hpp"

#include "rmies/extinction.hpp"
#include "rmies/parallel.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

namespace rmies::synth {

namespace {
constexpr double kLn2 = std::numbers::ln2;
}

double BandSpec::operator()(double nu) const {
  const double d = (nu - center) / fwhm;
  if (shape == BandShape::gaussian) return amplitude * std::exp(-4.0 * kLn2 * d * d);
  return amplitude / (1.0 + 4.0 * d * d);
}

double BandSpec::analytic_area() const {
  if (shape == BandShape::gaussian) return amplitude * fwhm * std::sqrt(std::numbers::pi / (4.0 * kLn2));
  return amplitude * std::numbers::pi * fwhm / 2.0;
}

void ClassTemplate::validate(const WavenumberGrid& grid) const {
  if (bands.empty()) throw ConfigError("class " + std::to_string(class_id) + ": template has no bands");
  for (const auto& b : bands) {
    if (!(b.fwhm > 0.0)) throw ConfigError("class " + std::to_string(class_id) + ": band fwhm must be > 0");
    if (!(b.amplitude >= 0.0)) throw ConfigError("class " + std::to_string(class_id) + ": negative band amplitude");
    if (!(b.center >= grid.front() && b.center <= grid.back())) {
      throw ConfigError("class " + std::to_string(class_id) + ": band centre outside grid");
    }
  }
  if (!(amplitude_jitter >= 0.0) || !(center_jitter >= 0.0)) {
    throw ConfigError("class " + std::to_string(class_id) + ": jitter must be >= 0");
  }
}

std::vector<ClassTemplate> default_templates() {
  using S = BandShape;
  auto g = [](double c, double w, double a) { return BandSpec{c, w, a, S::gaussian}; };
  auto l = [](double c, double w, double a) { return BandSpec{c, w, a, S::lorentzian}; };
  constexpr double aj = 0.05;
  constexpr double cj = 1.0;
  return {
      // protein-rich epithelium
      {0, {g(1652, 40, 0.95), g(1545, 30, 0.55), l(1455, 25, 0.18), g(1400, 25, 0.15), g(1240, 40, 0.20),
           g(1085, 35, 0.25)}, aj, cj},
      // collagen-rich stroma
      {1, {g(1658, 45, 0.85), g(1550, 35, 0.45), l(1455, 20, 0.15), g(1338, 14, 0.12), g(1280, 18, 0.14),
           g(1240, 20, 0.18), g(1205, 14, 0.12), g(1030, 30, 0.16)}, aj, cj},
      // lipid-rich
      {2, {l(1740, 20, 0.45), g(1650, 40, 0.55), g(1545, 30, 0.30), g(1465, 22, 0.35), g(1170, 30, 0.20)}, aj, cj},
      // nucleic-acid-rich
      {3, {g(1645, 38, 0.80), g(1540, 30, 0.50), g(1235, 35, 0.40), g(1085, 30, 0.45)}, aj, cj},
      // carbohydrate/mucin-rich
      {4, {g(1648, 40, 0.60), g(1545, 30, 0.30), g(1415, 30, 0.15), g(1150, 25, 0.35), g(1078, 30, 0.50),
           l(1025, 20, 0.55)}, aj, cj},
  };
}

std::vector<ClassTemplate> templates_from_config(const KeyValueConfig& cfg) {
  std::vector<ClassTemplate> out;
  std::set<int> ids;
  for (const auto& sec : cfg.sections()) {
    if (sec.name.rfind("class", 0) != 0) continue;
    ClassTemplate t;
    t.class_id = static_cast<int>(parse_number(sec.name.substr(5), "section [" + sec.name + "]"));
    if (!ids.insert(t.class_id).second) throw ConfigError("duplicate class id " + std::to_string(t.class_id));
    if (auto v = sec.find("amplitude_jitter")) t.amplitude_jitter = parse_number(*v, sec.name + ".amplitude_jitter");
    if (auto v = sec.find("center_jitter")) t.center_jitter = parse_number(*v, sec.name + ".center_jitter");
    for (const auto& line : sec.all("band")) {
      std::istringstream in(line);
      std::string shape;
      in >> shape;
      std::string rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      const auto nums = parse_number_list(rest, sec.name + ".band");
      if (nums.size() != 3 || (shape != "gaussian" && shape != "lorentzian")) {
        throw ConfigError(sec.name + ": band must be '<gaussian|lorentzian> center fwhm amplitude'");
      }
      t.bands.push_back({nums[0], nums[1], nums[2], shape == "gaussian" ? BandShape::gaussian : BandShape::lorentzian});
    }
    out.push_back(std::move(t));
  }
  if (out.empty()) throw ConfigError("template set has no [class N] sections");
  return out;
}

KeyValueConfig templates_to_config(const std::vector<ClassTemplate>& templates) {
  auto num = [](double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  std::string text = "schema = 1\n";
  for (const auto& t : templates) {
    text += "[class " + std::to_string(t.class_id) + "]\n";
    text += "amplitude_jitter = " + num(t.amplitude_jitter) + "\n";
    text += "center_jitter = " + num(t.center_jitter) + "\n";
    for (const auto& b : t.bands) {
      text += std::string("band = ") + (b.shape == BandShape::gaussian ? "gaussian " : "lorentzian ") + num(b.center) +
              " " + num(b.fwhm) + " " + num(b.amplitude) + "\n";
    }
  }
  return KeyValueConfig::parse(text, "<templates>");
}

void DistortionParams::validate() const {
  if (!(radius_um >= 1.0 && radius_um <= 20.0)) throw ConfigError("distortion radius outside [1, 20] um");
  if (!(n_avg > 1.0 && n_avg < 2.0)) throw ConfigError("distortion n_avg outside (1, 2)");
  if (!(multiplicative >= 0.5 && multiplicative <= 2.0)) throw ConfigError("distortion h outside [0.5, 2]");
  if (!(noise_sigma >= 0.0)) throw ConfigError("distortion noise_sigma must be >= 0");
}

double Range::sample(Rng& rng) const { return lo == hi ? lo : rng.uniform(lo, hi); }

DistortionSampler DistortionSampler::none() {
  DistortionSampler s;
  s.radius_um = {5.0, 5.0};
  s.n_avg = {1.3, 1.3};
  s.scatter_weight = {0.0, 0.0};
  s.baseline_offset = {0.0, 0.0};
  s.baseline_slope = {0.0, 0.0};
  s.multiplicative = {1.0, 1.0};
  s.noise_sigma = 0.0;
  return s;
}

DistortionParams DistortionSampler::sample(std::uint64_t seed) const {
  Rng rng(seed);
  DistortionParams p;
  p.radius_um = radius_um.sample(rng);
  p.n_avg = n_avg.sample(rng);
  p.scatter_weight = scatter_weight.sample(rng);
  p.baseline_offset = baseline_offset.sample(rng);
  p.baseline_slope = baseline_slope.sample(rng);
  p.multiplicative = multiplicative.sample(rng);
  p.noise_sigma = noise_sigma;
  return p;
}

Spectrum generate_pure(const ClassTemplate& tmpl, const GridPtr& grid, std::uint64_t seed) {
  tmpl.validate(*grid);
  Rng rng(seed);
  Vector y = Vector::Zero(grid->size());
  for (const BandSpec& nominal : tmpl.bands) {
    BandSpec b = nominal;
    // Both draws happen even for zero jitter so the stream layout is fixed.
    const double za = rng.normal();
    const double zc = rng.normal();
    b.amplitude = std::max(0.0, b.amplitude * (1.0 + tmpl.amplitude_jitter * za));
    b.center += tmpl.center_jitter * zc;
    for (Index i = 0; i < grid->size(); ++i) y[i] += b((*grid)[i]);
  }
  return Spectrum(grid, y.cwiseMax(0.0));
}

Spectrum nominal_pure(const ClassTemplate& tmpl, const GridPtr& grid) {
  tmpl.validate(*grid);
  Vector y = Vector::Zero(grid->size());
  for (const BandSpec& b : tmpl.bands) {
    for (Index i = 0; i < grid->size(); ++i) y[i] += b((*grid)[i]);
  }
  return Spectrum(grid, std::move(y));
}

Spectrum mean_reference(const std::vector<ClassTemplate>& templates, const GridPtr& grid) {
  if (templates.empty()) throw ConfigError("mean_reference: empty template set");
  Vector sum = Vector::Zero(grid->size());
  for (const auto& t : templates) sum += nominal_pure(t, grid).absorbance();
  return Spectrum(grid, sum / static_cast<double>(templates.size()));
}

Spectrum distort(const Spectrum& pure, const DistortionParams& p, std::uint64_t seed) {
  p.validate();
  const WavenumberGrid& grid = pure.grid();
  Vector raw = p.multiplicative * pure.absorbance();
  raw.array() += p.baseline_offset + p.baseline_slope * grid.values().array();
  if (p.scatter_weight != 0.0) raw += p.scatter_weight * vdh_extinction(grid, p.radius_um, p.n_avg);
  if (p.noise_sigma > 0.0) {
    Rng rng(seed);
    for (Index i = 0; i < raw.size(); ++i) raw[i] += p.noise_sigma * rng.normal();
  }
  return Spectrum(pure.grid_ptr(), std::move(raw));
}

LabeledDataset generate_dataset(const std::vector<ClassTemplate>& templates, Index n_per_class,
                                const DistortionSampler& sampler, const GridPtr& grid, std::uint64_t seed,
                                int threads) {
  if (templates.empty()) throw ConfigError("generate_dataset: empty template set");
  if (n_per_class < 1) throw ConfigError("generate_dataset: n_per_class must be >= 1");
  std::set<int> ids;
  for (const auto& t : templates) {
    t.validate(*grid);
    if (!ids.insert(t.class_id).second) throw ConfigError("generate_dataset: duplicate class id");
  }
  const auto k = static_cast<Index>(templates.size());
  const Index n = k * n_per_class;
  LabeledDataset ds;
  ds.grid = grid;
  ds.raw.resize(grid->size(), n);
  ds.pure = SpectraMatrix(grid->size(), n);
  ds.labels.resize(static_cast<std::size_t>(n));
  parallel_for(n, threads, [&](Index i) {
    const auto u = static_cast<std::uint64_t>(i);
    const ClassTemplate& t = templates[static_cast<std::size_t>(i % k)];
    const Spectrum pure = generate_pure(t, grid, derive_seed(seed, streams::kPure, u));
    const DistortionParams p = sampler.sample(derive_seed(seed, streams::kDistortion, u));
    const Spectrum raw = distort(pure, p, derive_seed(seed, streams::kNoise, u));
    ds.pure->col(i) = pure.absorbance();
    ds.raw.col(i) = raw.absorbance();
    ds.labels[static_cast<std::size_t>(i)] = t.class_id;
  });
  return ds;
}

}  // namespace rmies::synth
