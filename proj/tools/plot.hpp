// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rmies/core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace rmies::cli {

struct Series {
  std::string label;
  Vector x;
  Vector y;
};

/// Shaded interval drawn under the series.
struct BandSeries {
  std::string label;
  Vector x;
  Vector lo;
  Vector hi;
};

struct PlotSpec {
  std::string title;
  std::string x_label = "Wavenumber (cm^-1)";
  std::string y_label = "Absorbance (AU)";
  std::optional<std::pair<double, double>> x_range;  // points outside are dropped
  std::vector<double> markers;                       // vertical lines at these x
};

/// Self-contained SVG: one polyline per series (one vertex per point in
/// range), one closed polygon per band. Wavenumber runs high to low.
std::string render_svg(const PlotSpec& spec, const std::vector<Series>& series, const std::vector<BandSeries>& bands);

/// Long-format sidecar `series,x,y` (bands as `<label>:lo` and `<label>:hi`),
/// restricted to the same x range as the drawing.
std::string plot_csv(const PlotSpec& spec, const std::vector<Series>& series, const std::vector<BandSeries>& bands);

}  // namespace rmies::cli
