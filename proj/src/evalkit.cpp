// SPDX-License-Identifier: Apache-2.0
#include "rmies/evalkit.hpp"

#include "rmies/io.hpp"
#include "rmies/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>

namespace rmies::eval {

using json = nlohmann::json;

RmseReport rmse_pairs(const Eigen::Ref<const SpectraMatrix>& a, const Eigen::Ref<const SpectraMatrix>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("rmse: spectrum sets differ in shape");
  if (a.cols() == 0 || a.rows() == 0) throw DimensionError("rmse: empty spectrum set");
  RmseReport r;
  const Index n = a.cols();
  r.per_spectrum.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double sq = (a.col(i) - b.col(i)).squaredNorm();
    r.per_spectrum[static_cast<std::size_t>(i)] = std::sqrt(sq / static_cast<double>(a.rows()));
    r.paper_style_sum += std::sqrt(sq);
  }
  std::vector<double> sorted = r.per_spectrum;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double v : r.per_spectrum) sum += v;
  r.mean = sum / static_cast<double>(n);
  const auto un = static_cast<std::size_t>(n);
  r.median = un % 2 ? sorted[un / 2] : 0.5 * (sorted[un / 2 - 1] + sorted[un / 2]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  r.p95 = sorted[std::max<std::size_t>(rank, 1) - 1];
  r.min = sorted.front();
  r.max = sorted.back();
  // Rounding in the sum can put the mean a hair outside [min, max].
  r.mean = std::clamp(r.mean, r.min, r.max);
  return r;
}

RmseReport rmse_dataset(const nn::ModelParameters& surrogate, const Eigen::Ref<const SpectraMatrix>& oracle,
                        const Eigen::Ref<const SpectraMatrix>& raw, int threads) {
  if (oracle.rows() != raw.rows() || oracle.cols() != raw.cols()) {
    throw DimensionError("rmse_dataset: oracle outputs and raw inputs differ in shape");
  }
  SpectraMatrix out(raw.rows(), raw.cols());
  parallel_for(raw.cols(), threads, [&](Index i) { out.col(i) = nn::forward(surrogate, raw.col(i)); });
  return rmse_pairs(oracle, out);
}

CentroidClassifier::CentroidClassifier(GridPtr grid, std::vector<int> class_ids, Matrix centroids)
    : grid_(std::move(grid)), class_ids_(std::move(class_ids)), centroids_(std::move(centroids)) {
  if (class_ids_.size() < 2) throw ConfigError("classifier: need at least two classes");
  if (centroids_.cols() != static_cast<Index>(class_ids_.size()) || centroids_.rows() != grid_->size()) {
    throw DimensionError("classifier: centroid matrix does not match classes and grid");
  }
  if (!std::is_sorted(class_ids_.begin(), class_ids_.end()) ||
      std::adjacent_find(class_ids_.begin(), class_ids_.end()) != class_ids_.end()) {
    throw ConfigError("classifier: class ids must be unique and ascending");
  }
}

Vector CentroidClassifier::features(const Eigen::Ref<const Vector>& absorbance) const {
  if (absorbance.size() != grid_->size()) throw DimensionError("classifier: spectrum length differs from grid");
  return normalized_l2(second_difference(absorbance, grid_->step()));
}

int CentroidClassifier::classify(const Spectrum& s) const {
  if (!same_grid(s.grid_ptr(), grid_)) throw DimensionError("classifier: spectrum is not on the classifier grid");
  return classify(s.absorbance());
}

int CentroidClassifier::classify(const Eigen::Ref<const Vector>& absorbance) const {
  const Vector sim = centroids_.transpose() * features(absorbance);
  const double best = sim.maxCoeff();
  // Ids are ascending, so the first index within tolerance is the lowest id.
  for (Index k = 0; k < sim.size(); ++k) {
    if (sim[k] >= best - kTieTolerance) return class_ids_[static_cast<std::size_t>(k)];
  }
  return class_ids_.front();
}

std::vector<int> CentroidClassifier::classify_all(const Eigen::Ref<const SpectraMatrix>& spectra, int threads) const {
  std::vector<int> out(static_cast<std::size_t>(spectra.cols()));
  parallel_for(spectra.cols(), threads, [&](Index i) { out[static_cast<std::size_t>(i)] = classify(spectra.col(i)); });
  return out;
}

CentroidClassifier train_downstream(const GridPtr& grid, const Eigen::Ref<const SpectraMatrix>& corrected,
                                    const std::vector<int>& labels) {
  if (static_cast<Index>(labels.size()) != corrected.cols()) {
    throw DimensionError("train_downstream: labels and spectra differ in count");
  }
  if (corrected.rows() != grid->size()) throw DimensionError("train_downstream: spectra are not on the grid");
  std::map<int, Vector> sums;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Vector f = normalized_l2(second_difference(corrected.col(static_cast<Index>(i)), grid->step()));
    auto [it, fresh] = sums.try_emplace(labels[i], Vector::Zero(grid->size()));
    it->second += f;
  }
  if (sums.size() < 2) throw ConfigError("train_downstream: need at least two classes");
  std::vector<int> ids;
  Matrix centroids(grid->size(), static_cast<Index>(sums.size()));
  for (const auto& [id, sum] : sums) {
    centroids.col(static_cast<Index>(ids.size())) = normalized_l2(sum);
    ids.push_back(id);
  }
  return CentroidClassifier(grid, std::move(ids), std::move(centroids));
}

AgreementReport downstream_agreement(const CentroidClassifier& classifier,
                                     const Eigen::Ref<const SpectraMatrix>& oracle_corrected,
                                     const Eigen::Ref<const SpectraMatrix>& surrogate_corrected, int threads) {
  if (oracle_corrected.rows() != surrogate_corrected.rows() || oracle_corrected.cols() != surrogate_corrected.cols()) {
    throw DimensionError("downstream_agreement: spectrum sets differ in shape");
  }
  if (oracle_corrected.cols() == 0) throw DimensionError("downstream_agreement: empty spectrum set");
  const auto truth = classifier.classify_all(oracle_corrected, threads);
  const auto approx = classifier.classify_all(surrogate_corrected, threads);
  const auto& ids = classifier.class_ids();
  auto slot = [&](int id) { return std::lower_bound(ids.begin(), ids.end(), id) - ids.begin(); };
  AgreementReport r;
  r.class_ids = ids;
  r.n = oracle_corrected.cols();
  r.confusion = Eigen::MatrixXi::Zero(static_cast<Index>(ids.size()), static_cast<Index>(ids.size()));
  for (std::size_t i = 0; i < truth.size(); ++i) ++r.confusion(slot(truth[i]), slot(approx[i]));
  r.accuracy = static_cast<double>(r.confusion.trace()) / static_cast<double>(r.n);
  return r;
}

double peak_position(const Spectrum& s, Window window) {
  const auto& g = s.grid();
  if (!(window.lo < window.hi) || window.lo < g.front() || window.hi > g.back()) {
    throw RangeError("band_shift: window must lie inside the grid");
  }
  const Vector& nu = g.values();
  Index first = 0;
  while (first < g.size() && nu[first] < window.lo) ++first;
  Index last = g.size() - 1;
  while (last >= 0 && nu[last] > window.hi) --last;
  if (last - first < 2) throw RangeError("band_shift: window holds fewer than 3 grid points");
  const Vector& y = s.absorbance();
  Index k = first;
  for (Index i = first + 1; i <= last; ++i) {
    if (y[i] > y[k]) k = i;
  }
  if (k == first || k == last) throw PeakOnBoundary("band_shift: maximum lies on the window edge");
  // Vertex of the parabola through (x0, y0), (x1, y1), (x2, y2).
  const double x0 = nu[k - 1], x1 = nu[k], x2 = nu[k + 1];
  const double y0 = y[k - 1], y1 = y[k], y2 = y[k + 1];
  const double d0 = (y1 - y0) / (x1 - x0);
  const double d1 = (y2 - y1) / (x2 - x1);
  const double curv = (d1 - d0) / (x2 - x0);
  if (!(curv < 0.0)) return x1;  // flat top
  return 0.5 * (x0 + x1) - d0 / (2.0 * curv);
}

double band_shift(const Spectrum& a, const Spectrum& b, Window window) {
  if (!same_grid(a.grid_ptr(), b.grid_ptr())) throw DimensionError("band_shift: spectra are on different grids");
  return peak_position(b, window) - peak_position(a, window);
}

std::string rmse_report_json(const RmseReport& r) {
  json j;
  j["n"] = r.per_spectrum.size();
  j["mean"] = r.mean;
  j["median"] = r.median;
  j["p95"] = r.p95;
  j["min"] = r.min;
  j["max"] = r.max;
  j["paper_style_sum"] = r.paper_style_sum;
  j["per_spectrum"] = r.per_spectrum;
  return j.dump(1);
}

std::string agreement_report_json(const AgreementReport& r) {
  json j;
  j["accuracy"] = r.accuracy;
  j["n"] = r.n;
  j["class_ids"] = r.class_ids;
  json rows = json::array();
  for (Index i = 0; i < r.confusion.rows(); ++i) {
    json row = json::array();
    for (Index k = 0; k < r.confusion.cols(); ++k) row.push_back(r.confusion(i, k));
    rows.push_back(std::move(row));
  }
  j["confusion"] = std::move(rows);
  j["confusion_rows"] = "oracle";
  j["confusion_cols"] = "surrogate";
  return j.dump(1);
}

std::string confusion_csv(const AgreementReport& r) {
  std::string out = "oracle\\surrogate";
  for (int id : r.class_ids) out += "," + std::to_string(id);
  out += "\n";
  for (Index i = 0; i < r.confusion.rows(); ++i) {
    out += std::to_string(r.class_ids[static_cast<std::size_t>(i)]);
    for (Index k = 0; k < r.confusion.cols(); ++k) out += "," + std::to_string(r.confusion(i, k));
    out += "\n";
  }
  return out;
}

std::array<unsigned char, 3> class_colour(int class_id) {
  static constexpr std::array<std::array<unsigned char, 3>, 10> kPalette{{{31, 119, 180},
                                                                          {255, 127, 14},
                                                                          {44, 160, 44},
                                                                          {214, 39, 40},
                                                                          {148, 103, 189},
                                                                          {140, 86, 75},
                                                                          {227, 119, 194},
                                                                          {127, 127, 127},
                                                                          {188, 189, 34},
                                                                          {23, 190, 207}}};
  if (class_id < 0) return {0, 0, 0};
  return kPalette[static_cast<std::size_t>(class_id) % kPalette.size()];
}

void write_class_map_ppm(const std::vector<int>& classes, Index width, Index height,
                         const std::filesystem::path& path) {
  if (width <= 0 || height <= 0 || static_cast<Index>(classes.size()) != width * height) {
    throw DimensionError("class map: pixel count differs from width x height");
  }
  std::string data = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  data.reserve(data.size() + classes.size() * 3);
  for (int c : classes) {
    const auto rgb = class_colour(c);
    data.append(reinterpret_cast<const char*>(rgb.data()), 3);
  }
  io::write_text_file(path, data);
}

std::string class_legend_csv(const std::vector<int>& class_ids) {
  std::string out = "class_id,r,g,b\n";
  for (int id : class_ids) {
    const auto rgb = class_colour(id);
    out += std::to_string(id) + "," + std::to_string(rgb[0]) + "," + std::to_string(rgb[1]) + "," +
           std::to_string(rgb[2]) + "\n";
  }
  return out;
}

}  // namespace rmies::eval
