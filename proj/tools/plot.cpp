// SPDX-License-Identifier: Apache-2.0
#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace rmies::cli {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 36.0;
constexpr double kBottom = 52.0;

constexpr const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(const char* f, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool in_range(const PlotSpec& spec, double x) {
  return !spec.x_range || (x >= spec.x_range->first && x <= spec.x_range->second);
}

struct Frame {
  double x0, x1, y0, y1;

  // High wavenumbers on the left.
  double px(double x) const { return kLeft + (x1 - x) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kTop + (y1 - y) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

Frame frame_for(const PlotSpec& spec, const std::vector<Series>& series, const std::vector<BandSeries>& bands) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  Frame f{inf, -inf, inf, -inf};
  auto take = [&](double x, double y) {
    if (!in_range(spec, x) || !std::isfinite(y)) return;
    f.x0 = std::min(f.x0, x);
    f.x1 = std::max(f.x1, x);
    f.y0 = std::min(f.y0, y);
    f.y1 = std::max(f.y1, y);
  };
  for (const auto& s : series) {
    for (Index i = 0; i < s.x.size(); ++i) take(s.x[i], s.y[i]);
  }
  for (const auto& b : bands) {
    for (Index i = 0; i < b.x.size(); ++i) {
      take(b.x[i], b.lo[i]);
      take(b.x[i], b.hi[i]);
    }
  }
  if (!(f.x0 < f.x1)) {
    f.x0 = std::isfinite(f.x0) ? f.x0 - 1.0 : 0.0;
    f.x1 = f.x0 + 2.0;
  }
  if (!(f.y0 < f.y1)) {
    f.y0 = std::isfinite(f.y0) ? f.y0 - 1.0 : 0.0;
    f.y1 = f.y0 + 2.0;
  }
  const double pad = 0.05 * (f.y1 - f.y0);
  f.y0 -= pad;
  f.y1 += pad;
  return f;
}

double nice_step(double span) {
  const double raw = span / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

}  // namespace

std::string render_svg(const PlotSpec& spec, const std::vector<Series>& series, const std::vector<BandSeries>& bands) {
  const Frame f = frame_for(spec, series, bands);
  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"480\" viewBox=\"0 0 800 480\">\n";
  out += "<rect width=\"800\" height=\"480\" fill=\"white\"/>\n";
  out += "<text x=\"400\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
         escape(spec.title) + "</text>\n";

  // Axes and ticks.
  const double xa = kLeft, xb = kWidth - kRight, ya = kTop, yb = kHeight - kBottom;
  out += "<g stroke=\"black\" fill=\"none\" stroke-width=\"1\"><rect x=\"" + fmt("%.2f", xa) + "\" y=\"" +
         fmt("%.2f", ya) + "\" width=\"" + fmt("%.2f", xb - xa) + "\" height=\"" + fmt("%.2f", yb - ya) +
         "\"/></g>\n";
  out += "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  const double xs = nice_step(f.x1 - f.x0);
  for (double t = std::ceil(f.x0 / xs) * xs; t <= f.x1 + 1e-9; t += xs) {
    const double p = f.px(t);
    out += "<line x1=\"" + fmt("%.2f", p) + "\" y1=\"" + fmt("%.2f", yb) + "\" x2=\"" + fmt("%.2f", p) + "\" y2=\"" +
           fmt("%.2f", yb + 5) + "\" stroke=\"black\"/>";
    out += "<text x=\"" + fmt("%.2f", p) + "\" y=\"" + fmt("%.2f", yb + 18) + "\" text-anchor=\"middle\">" +
           fmt("%g", t) + "</text>\n";
  }
  const double ys = nice_step(f.y1 - f.y0);
  for (double t = std::ceil(f.y0 / ys) * ys; t <= f.y1 + 1e-12; t += ys) {
    const double p = f.py(t);
    out += "<line x1=\"" + fmt("%.2f", xa - 5) + "\" y1=\"" + fmt("%.2f", p) + "\" x2=\"" + fmt("%.2f", xa) +
           "\" y2=\"" + fmt("%.2f", p) + "\" stroke=\"black\"/>";
    out += "<text x=\"" + fmt("%.2f", xa - 8) + "\" y=\"" + fmt("%.2f", p + 4) + "\" text-anchor=\"end\">" +
           fmt("%.3g", std::abs(t) < 1e-12 * ys ? 0.0 : t) + "</text>\n";
  }
  out += "<text x=\"400\" y=\"" + fmt("%.2f", kHeight - 12) + "\" text-anchor=\"middle\">" + escape(spec.x_label) +
         "</text>\n";
  out += "<text x=\"16\" y=\"" + fmt("%.2f", 0.5 * (ya + yb)) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         fmt("%.2f", 0.5 * (ya + yb)) + ")\">" + escape(spec.y_label) + "</text>\n";
  out += "</g>\n";

  std::size_t colour = 0;
  for (const auto& b : bands) {
    std::string pts;
    for (Index i = 0; i < b.x.size(); ++i) {
      if (in_range(spec, b.x[i])) pts += fmt("%.2f", f.px(b.x[i])) + "," + fmt("%.2f", f.py(b.hi[i])) + " ";
    }
    for (Index i = b.x.size() - 1; i >= 0; --i) {
      if (in_range(spec, b.x[i])) pts += fmt("%.2f", f.px(b.x[i])) + "," + fmt("%.2f", f.py(b.lo[i])) + " ";
    }
    if (!pts.empty()) pts.pop_back();
    out += "<polygon class=\"band\" data-label=\"" + escape(b.label) + "\" fill=\"" + kColours[colour % 6] +
           "\" fill-opacity=\"0.25\" stroke=\"none\" points=\"" + pts + "\"/>\n";
    ++colour;
  }
  colour = 0;
  for (const auto& s : series) {
    std::string pts;
    for (Index i = 0; i < s.x.size(); ++i) {
      if (in_range(spec, s.x[i])) pts += fmt("%.2f", f.px(s.x[i])) + "," + fmt("%.2f", f.py(s.y[i])) + " ";
    }
    if (!pts.empty()) pts.pop_back();
    out += "<polyline class=\"series\" data-label=\"" + escape(s.label) + "\" fill=\"none\" stroke=\"" +
           kColours[colour % 6] + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    ++colour;
  }
  for (double m : spec.markers) {
    if (!(m >= f.x0 && m <= f.x1)) continue;
    const double p = f.px(m);
    out += "<line class=\"marker\" x1=\"" + fmt("%.2f", p) + "\" y1=\"" + fmt("%.2f", ya) + "\" x2=\"" + fmt("%.2f", p) +
           "\" y2=\"" + fmt("%.2f", yb) + "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  }

  // Legend.
  double ly = ya + 16;
  colour = 0;
  out += "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (const auto& s : series) {
    out += "<line x1=\"" + fmt("%.2f", xb - 150) + "\" y1=\"" + fmt("%.2f", ly - 4) + "\" x2=\"" + fmt("%.2f", xb - 130) +
           "\" y2=\"" + fmt("%.2f", ly - 4) + "\" stroke=\"" + kColours[colour % 6] + "\" stroke-width=\"2\"/>";
    out += "<text x=\"" + fmt("%.2f", xb - 124) + "\" y=\"" + fmt("%.2f", ly) + "\">" + escape(s.label) + "</text>\n";
    ly += 16;
    ++colour;
  }
  out += "</g>\n</svg>\n";
  return out;
}

std::string plot_csv(const PlotSpec& spec, const std::vector<Series>& series, const std::vector<BandSeries>& bands) {
  std::string out = "series,x,y\n";
  char buf[64];
  auto rows = [&](const std::string& label, const Vector& x, const Vector& y) {
    for (Index i = 0; i < x.size(); ++i) {
      if (!in_range(spec, x[i])) continue;
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", x[i], y[i]);
      out += label + buf;
    }
  };
  for (const auto& s : series) rows(s.label, s.x, s.y);
  for (const auto& b : bands) {
    rows(b.label + ":lo", b.x, b.lo);
    rows(b.label + ":hi", b.x, b.hi);
  }
  return out;
}

}  // namespace rmies::cli
