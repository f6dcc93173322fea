#pragma once

// Continuous efficiency curve h(x) = a / x^b + c, fitted to discrete
// (subset %, exact match %) points by damped Gauss-Newton least squares,
// together with evaluation and the closed-form inverse
// h^-1(y) = ((y - c) / a)^(-1/b).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "deff/error.hpp"

namespace deff {

struct EfficiencyPoint {
  double subset_percent = 0.0;  // x, in [0, 100]
  double exact_match = 0.0;     // y, in [0, 100]
  std::int64_t seed = 0;
  std::string model_id;
  std::string domain;

  friend bool operator==(const EfficiencyPoint&, const EfficiencyPoint&) = default;
};

inline void to_json(nlohmann::json& j, const EfficiencyPoint& p) {
  j = nlohmann::json{{"subset_percent", p.subset_percent},
                     {"exact_match", p.exact_match},
                     {"seed", p.seed},
                     {"model_id", p.model_id},
                     {"domain", p.domain}};
}

inline void from_json(const nlohmann::json& j, EfficiencyPoint& p) {
  p.subset_percent = j.at("subset_percent").get<double>();
  p.exact_match = j.at("exact_match").get<double>();
  p.seed = j.value("seed", std::int64_t{0});
  p.model_id = j.value("model_id", std::string{});
  p.domain = j.value("domain", std::string{});
}

struct CurveParams {
  double a = 0.0;
  double b = 1.0;
  double c = 0.0;

  double operator()(double x) const { return a / std::pow(x, b) + c; }
};

struct CurveModel {
  double a = 0.0;
  double b = 1.0;
  double c = 0.0;
  double sse = 0.0;
  int iterations = 0;
  bool converged = false;
  double x_min = 0.0;  // fit domain (x_min, x_max]
  double x_max = 0.0;

  CurveParams params() const { return {a, b, c}; }

  // Shape expected of an increasing exact-match curve. Violations are
  // reported, never rejected.
  bool well_formed() const { return a < 0.0 && b > 0.0 && c > 0.0 && c < 200.0; }
};

inline void to_json(nlohmann::json& j, const CurveModel& m) {
  j = nlohmann::json{{"a", m.a},
                     {"b", m.b},
                     {"c", m.c},
                     {"sse", m.sse},
                     {"iterations", m.iterations},
                     {"converged", m.converged},
                     {"fit_domain", {m.x_min, m.x_max}}};
}

inline void from_json(const nlohmann::json& j, CurveModel& m) {
  m.a = j.at("a").get<double>();
  m.b = j.at("b").get<double>();
  m.c = j.at("c").get<double>();
  m.sse = j.value("sse", 0.0);
  m.iterations = j.value("iterations", 0);
  m.converged = j.value("converged", false);
  if (j.contains("fit_domain")) {
    const auto& d = j.at("fit_domain");
    m.x_min = d.at(0).get<double>();
    m.x_max = d.at(1).get<double>();
  }
}

// Exponent bounds enforced by projection after every step.
inline constexpr double kMinExponent = 1e-3;
inline constexpr double kMaxExponent = 10.0;

struct FitOptions {
  int max_iterations = 500;
  // Collapse repeated x values (e.g. several seeds) to their mean y first.
  bool average_repeats = false;
};

namespace detail {

struct XY {
  std::vector<double> x;
  std::vector<double> y;
};

inline double sum_squared_error(const CurveParams& p, const XY& data) {
  double sse = 0.0;
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    const double r = p(data.x[i]) - data.y[i];
    sse += r * r;
  }
  return sse;
}

inline CurveParams project(CurveParams p) {
  p.b = std::clamp(p.b, kMinExponent, kMaxExponent);
  return p;
}

struct LmOutcome {
  CurveParams params;
  double sse = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Levenberg-Marquardt with multiplicative damping on diag(J^T J):
// lambda starts at 1e-3, x10 on a rejected step, /10 on an accepted one.
inline LmOutcome levenberg_marquardt(CurveParams start, const XY& data,
                                     int max_iterations) {
  constexpr double kRelativeTolerance = 1e-12;
  constexpr double kGradientTolerance = 1e-10;
  constexpr double kMaxDamping = 1e16;

  LmOutcome out;
  out.params = project(start);
  out.sse = sum_squared_error(out.params, data);
  double lambda = 1e-3;
  const std::size_t n = data.x.size();
  Eigen::MatrixXd jac(n, 3);
  Eigen::VectorXd res(n);

  while (out.iterations < max_iterations) {
    ++out.iterations;
    const CurveParams& p = out.params;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = data.x[i];
      const double inv_pow = std::pow(x, -p.b);
      jac(i, 0) = inv_pow;
      jac(i, 1) = -p.a * std::log(x) * inv_pow;
      jac(i, 2) = 1.0;
      res(i) = p.a * inv_pow + p.c - data.y[i];
    }
    const Eigen::Vector3d half_grad = jac.transpose() * res;
    if (2.0 * half_grad.norm() < kGradientTolerance) {
      out.converged = true;
      break;
    }
    const Eigen::Matrix3d normal = jac.transpose() * jac;

    bool accepted = false;
    while (!accepted) {
      Eigen::Matrix3d damped = normal;
      for (int k = 0; k < 3; ++k) {
        damped(k, k) += lambda * std::max(normal(k, k), 1e-12);
      }
      const Eigen::Vector3d step = damped.ldlt().solve(-half_grad);
      const CurveParams trial =
          project({p.a + step(0), p.b + step(1), p.c + step(2)});
      const double trial_sse = sum_squared_error(trial, data);
      if (std::isfinite(trial_sse) && trial_sse < out.sse) {
        const double relative = (out.sse - trial_sse) / out.sse;
        out.params = trial;
        out.sse = trial_sse;
        lambda = std::max(lambda / 10.0, 1e-15);
        accepted = true;
        // Keep polishing after the SSE settles; Gauss-Newton steps are cheap
        // and drive the gradient down much further than the SSE test can see.
        if (relative < kRelativeTolerance) out.converged = true;
      } else {
        lambda *= 10.0;
        if (lambda > kMaxDamping) {
          // No descent direction left at working precision.
          out.converged = true;
          return out;
        }
      }
    }
  }
  return out;
}

inline CurveParams log_log_start(const XY& data, double y_max) {
  // ln(y_max + 1 - y) = ln(-a) - b ln x, assuming c = y_max + 1.
  const double c = y_max + 1.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<double>(data.x.size());
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    const double lx = std::log(data.x[i]);
    const double ly = std::log(c - data.y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double denom = n * sxx - sx * sx;
  const double slope = denom != 0.0 ? (n * sxy - sx * sy) / denom : -0.5;
  const double intercept = (sy - slope * sx) / n;
  return project({-std::exp(intercept), -slope, c});
}

}  // namespace detail

// Gradient of SSE(a, b, c) with the analytic partials
// dh/da = x^-b, dh/db = -a ln(x) x^-b, dh/dc = 1. Points with x <= 0 are
// skipped, as in the fit.
inline std::array<double, 3> sse_gradient(const CurveParams& p,
                                          std::span<const EfficiencyPoint> points) {
  std::array<double, 3> g{0.0, 0.0, 0.0};
  for (const auto& pt : points) {
    const double x = pt.subset_percent;
    if (x <= 0.0) continue;
    const double inv_pow = std::pow(x, -p.b);
    const double r = p.a * inv_pow + p.c - pt.exact_match;
    g[0] += 2.0 * r * inv_pow;
    g[1] += 2.0 * r * (-p.a * std::log(x) * inv_pow);
    g[2] += 2.0 * r;
  }
  return g;
}

// Mean exact match per distinct subset percent; seed is set to 0 and the
// first point's model/domain are kept.
inline std::vector<EfficiencyPoint> average_repeats(
    std::span<const EfficiencyPoint> points) {
  std::map<double, std::pair<double, int>> acc;
  for (const auto& p : points) {
    auto& [sum, count] = acc[p.subset_percent];
    sum += p.exact_match;
    ++count;
  }
  std::vector<EfficiencyPoint> out;
  for (const auto& [x, sc] : acc) {
    EfficiencyPoint p;
    p.subset_percent = x;
    p.exact_match = sc.first / sc.second;
    if (!points.empty()) {
      p.model_id = points.front().model_id;
      p.domain = points.front().domain;
    }
    out.push_back(std::move(p));
  }
  return out;
}

// Least-squares fit of h over every point with x > 0 (the x = 0 subset sits
// on the pole and is excluded). Three fixed starting points are tried and
// the lowest SSE wins.
inline CurveModel fit_curve(std::span<const EfficiencyPoint> points,
                            const FitOptions& options = {}) {
  std::vector<EfficiencyPoint> averaged;
  if (options.average_repeats) {
    averaged = average_repeats(points);
    points = averaged;
  }

  detail::XY data;
  std::vector<double> distinct;
  for (const auto& p : points) {
    if (!(p.subset_percent >= 0.0 && p.subset_percent <= 100.0) ||
        !(p.exact_match >= 0.0 && p.exact_match <= 100.0)) {
      throw Error("efficiency point outside [0, 100]");
    }
    if (p.subset_percent <= 0.0) continue;
    data.x.push_back(p.subset_percent);
    data.y.push_back(p.exact_match);
    distinct.push_back(p.subset_percent);
  }
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3) {
    throw Error("curve fit needs at least 3 distinct positive subset sizes, got " +
                std::to_string(distinct.size()));
  }

  CurveModel model;
  model.x_min = distinct.front();
  model.x_max = distinct.back();

  const auto [y_lo, y_hi] = std::minmax_element(data.y.begin(), data.y.end());
  const double y_min = *y_lo;
  const double y_max = *y_hi;
  if (y_min == y_max) {
    // Flat data: a = 0 and the model is reported as not well formed.
    model.a = 0.0;
    model.b = 1.0;
    model.c = y_min;
    model.sse = 0.0;
    model.converged = true;
    return model;
  }

  const std::array<CurveParams, 3> starts = {
      CurveParams{y_min - y_max, 0.5, y_max},
      CurveParams{-20.0, 0.35, 95.0},
      detail::log_log_start(data, y_max),
  };

  bool have_best = false;
  detail::LmOutcome best;
  for (const auto& start : starts) {
    const auto run =
        detail::levenberg_marquardt(start, data, options.max_iterations);
    if (!have_best || run.sse < best.sse) {
      best = run;
      have_best = true;
    }
  }
  model.a = best.params.a;
  model.b = best.params.b;
  model.c = best.params.c;
  model.sse = best.sse;
  model.iterations = best.iterations;
  model.converged = best.converged;
  return model;
}

struct CurveValue {
  double raw = 0.0;
  double clamped = 0.0;  // raw limited to [0, 100] for reporting
};

inline CurveValue evaluate(const CurveModel& model, double x) {
  if (!(x > 0.0)) {
    throw Error("h(x) is undefined for x <= 0 (pole at the 0% subset)");
  }
  const double raw = model.params()(x);
  return {raw, std::clamp(raw, 0.0, 100.0)};
}

struct Inversion {
  double subset_percent = 0.0;
  // More than the full target domain would be needed.
  bool exceeds_full_data = false;
};

inline std::string format_percent(double v, int decimals = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

// Subset percent x with h(x) = y.
inline Inversion invert(const CurveModel& model, double y) {
  if (!(model.b > 0.0)) throw Error("inverse needs exponent b > 0");
  if (model.a == 0.0) {
    throw UnreachableTarget("flat curve (a = 0) has no inverse", model.c);
  }
  const double ratio = (y - model.c) / model.a;
  if (!(ratio > 0.0)) {
    if (model.a < 0.0) {
      throw UnreachableTarget(
          "target " + format_percent(y) + "% EM is at or above the asymptote " +
              format_percent(model.c) + "%, the curve's exact-match ceiling",
          model.c);
    }
    throw UnreachableTarget("target " + format_percent(y) +
                                "% EM is at or below the asymptote " +
                                format_percent(model.c) +
                                "% of a decreasing curve",
                            model.c);
  }
  const double x = std::pow(ratio, -1.0 / model.b);
  return {x, x > 100.0};
}

}  // namespace deff
