#pragma once

// Discrete and continuous efficiency plots as SVG, plus the raw series as CSV.
// Both axes span [0, 100]; output is byte-deterministic for given inputs.

#include <algorithm>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deff/curve.hpp"
#include "deff/error.hpp"

namespace deff {

enum class ReportFormat { svg, csv, both };

struct ReportSpec {
  std::vector<EfficiencyPoint> points;
  std::optional<CurveModel> model;
  std::vector<double> queries;  // EM targets in (0, 100)
  ReportFormat format = ReportFormat::both;
};

inline constexpr int kCurveSamples = 200;

namespace detail {

struct PlotArea {
  static constexpr double width = 640, height = 480;
  static constexpr double left = 60, right = 20, top = 20, bottom = 50;

  static double px(double x) { return left + (width - left - right) * x / 100.0; }
  static double py(double y) { return height - bottom - (height - top - bottom) * y / 100.0; }
};

inline std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline void validate(const ReportSpec& spec) {
  if (spec.points.empty()) throw Error("report needs at least one point");
  for (double q : spec.queries) {
    if (!(q > 0.0 && q < 100.0)) throw Error("report queries must lie in (0, 100)");
  }
}

inline double curve_start(const ReportSpec& spec) {
  if (spec.model && spec.model->x_min > 0.0) return spec.model->x_min;
  double lo = 100.0;
  for (const auto& p : spec.points) {
    if (p.subset_percent > 0.0) lo = std::min(lo, p.subset_percent);
  }
  return lo;
}

inline std::vector<std::pair<double, double>> curve_samples(const ReportSpec& spec) {
  std::vector<std::pair<double, double>> out;
  if (!spec.model) return out;
  const double x0 = curve_start(spec);
  for (int i = 0; i < kCurveSamples; ++i) {
    const double x = x0 + (100.0 - x0) * i / (kCurveSamples - 1);
    out.emplace_back(x, evaluate(*spec.model, x).clamped);
  }
  return out;
}

// (y, required x) for queries that the curve reaches within the full data.
inline std::vector<std::pair<double, double>> query_hits(const ReportSpec& spec) {
  std::vector<std::pair<double, double>> out;
  if (!spec.model) return out;
  for (double y : spec.queries) {
    try {
      const Inversion inv = invert(*spec.model, y);
      if (!inv.exceeds_full_data) out.emplace_back(y, inv.subset_percent);
    } catch (const Error&) {
    }
  }
  return out;
}

}  // namespace detail

inline std::string render_svg(const ReportSpec& spec) {
  detail::validate(spec);
  using P = detail::PlotArea;
  using detail::fmt2;
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
       "viewBox=\"0 0 640 480\">\n";
  s += "<rect class=\"background\" x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"white\"/>\n";
  s += "<rect class=\"axes\" x=\"" + fmt2(P::px(0)) + "\" y=\"" + fmt2(P::py(100)) +
       "\" width=\"" + fmt2(P::px(100) - P::px(0)) + "\" height=\"" +
       fmt2(P::py(0) - P::py(100)) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 100; t += 20) {
    const std::string v = std::to_string(t);
    s += "<text class=\"tick\" x=\"" + fmt2(P::px(t)) + "\" y=\"" + fmt2(P::py(0) + 16) +
         "\" text-anchor=\"middle\" font-size=\"11\">" + v + "</text>\n";
    s += "<text class=\"tick\" x=\"" + fmt2(P::px(0) - 6) + "\" y=\"" + fmt2(P::py(t) + 4) +
         "\" text-anchor=\"end\" font-size=\"11\">" + v + "</text>\n";
  }
  s += "<text class=\"label\" x=\"" + fmt2(P::px(50)) + "\" y=\"" + fmt2(P::height - 12) +
       "\" text-anchor=\"middle\" font-size=\"13\">target subset (%)</text>\n";
  s += "<text class=\"label\" x=\"16\" y=\"" + fmt2(P::py(50)) +
       "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 " +
       fmt2(P::py(50)) + ")\">exact match (%)</text>\n";

  const auto curve = detail::curve_samples(spec);
  if (!curve.empty()) {
    s += "<polyline class=\"curve\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < curve.size(); ++i) {
      if (i) s += ' ';
      s += fmt2(P::px(curve[i].first)) + "," + fmt2(P::py(curve[i].second));
    }
    s += "\"/>\n";
  }
  for (const auto& [y, x] : detail::query_hits(spec)) {
    s += "<line class=\"guide\" x1=\"" + fmt2(P::px(0)) + "\" y1=\"" + fmt2(P::py(y)) +
         "\" x2=\"" + fmt2(P::px(x)) + "\" y2=\"" + fmt2(P::py(y)) +
         "\" stroke=\"red\" stroke-dasharray=\"4 3\"/>\n";
    s += "<line class=\"guide\" x1=\"" + fmt2(P::px(x)) + "\" y1=\"" + fmt2(P::py(y)) +
         "\" x2=\"" + fmt2(P::px(x)) + "\" y2=\"" + fmt2(P::py(0)) +
         "\" stroke=\"red\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (const auto& p : spec.points) {
    s += "<circle class=\"point\" cx=\"" + fmt2(P::px(p.subset_percent)) + "\" cy=\"" +
         fmt2(P::py(std::clamp(p.exact_match, 0.0, 100.0))) +
         "\" r=\"3\" fill=\"black\"/>\n";
  }
  s += "</svg>\n";
  return s;
}

// Columns: series (discrete | curve | query), x, y.
inline std::string render_csv(const ReportSpec& spec) {
  detail::validate(spec);
  using detail::fmt6;
  std::string s = "series,x,y\n";
  for (const auto& p : spec.points) {
    s += "discrete," + fmt6(p.subset_percent) + "," + fmt6(p.exact_match) + "\n";
  }
  for (const auto& [x, y] : detail::curve_samples(spec)) {
    s += "curve," + fmt6(x) + "," + fmt6(y) + "\n";
  }
  for (const auto& [y, x] : detail::query_hits(spec)) {
    s += "query," + fmt6(x) + "," + fmt6(y) + "\n";
  }
  return s;
}

}  // namespace deff
