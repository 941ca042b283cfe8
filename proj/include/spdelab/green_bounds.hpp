#pragma once

// Numerical verification of the Green-function estimates used by the moment
// and regularity bounds. Each check evaluates a left side (series or adaptive
// quadrature) against C * shape(params) and returns a BoundReport.

#include <algorithm>
#include <array>
#include <cstdint>
#include <initializer_list>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/tools/toms748_solve.hpp>

#include "spdelab/errors.hpp"
#include "spdelab/heat_kernel.hpp"
#include "spdelab/quadrature.hpp"

namespace spdelab {

enum class LemmaId { A1, A2, A3, A5, A6, Feller, Feller2, LogSobolev };

inline std::string_view to_string(LemmaId id) {
  switch (id) {
    case LemmaId::A1: return "A1";
    case LemmaId::A2: return "A2";
    case LemmaId::A3: return "A3";
    case LemmaId::A5: return "A5";
    case LemmaId::A6: return "A6";
    case LemmaId::Feller: return "Feller";
    case LemmaId::Feller2: return "Feller2";
    case LemmaId::LogSobolev: return "LogSobolev";
  }
  return "?";
}

inline LemmaId lemma_from_string(std::string_view s) {
  for (LemmaId id : {LemmaId::A1, LemmaId::A2, LemmaId::A3, LemmaId::A5, LemmaId::A6,
                     LemmaId::Feller, LemmaId::Feller2, LemmaId::LogSobolev}) {
    if (to_string(id) == s) return id;
  }
  throw ConfigError("unknown lemma id: " + std::string(s));
}

enum class Verdict { Pass, Fail, Inconclusive };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct BoundReport {
  LemmaId lemma_id = LemmaId::A1;
  std::map<std::string, double> params;
  double lhs = 0.0;
  double rhs_bound = 0.0;
  double margin = 0.0;
  double quadrature_error = 0.0;
  /// true when the implied constant was calibrated here rather than taken
  /// from an explicit proof constant
  bool calibrated_constant = false;

  /// A violated bound is reported, never thrown. No verdict unless the
  /// numerical error is resolved below the margin.
  Verdict verdict() const {
    if (!std::isfinite(lhs) || !std::isfinite(quadrature_error)) return Verdict::Inconclusive;
    if (!(quadrature_error < std::abs(margin))) return Verdict::Inconclusive;
    return margin > 0.0 ? Verdict::Pass : Verdict::Fail;
  }
  double ratio() const { return lhs / rhs_bound; }
};

/// Frozen implied constants. A1 and A2 use the explicit constants
/// (2 from S1 + S2 <= 2/sqrt(vw); 1 from kernel mass <= 1; 1/(pi sqrt 2)).
/// A3, A5 and A6 were calibrated with calibrate_constant() on the default
/// sweeps and rounded up to about 1.25x the largest observed ratio.
struct GreenConstants {
  double a1 = 2.0;
  double a2_theta1 = 1.0;
  double a2_theta2 = 1.0 / (std::numbers::pi * std::numbers::sqrt2);
  double a3_theta1 = 0.45;
  double a3_theta2 = 1.2;
  double a5_theta1 = 0.45;
  double a5_theta2 = 0.35;
  double a6_theta1 = 1.25;
  double a6_theta2 = 0.7;
};

/// Shape functions on the right-hand sides.
inline double psi1(double z) { return z * std::log(std::max(std::numbers::e, 1.0 / z)); }
inline double psi2(double z) { return z; }

namespace detail {

inline BoundReport finish(LemmaId id, std::map<std::string, double> params, double lhs,
                          double rhs, double err, bool calibrated) {
  BoundReport r;
  r.lemma_id = id;
  r.params = std::move(params);
  r.lhs = lhs;
  r.rhs_bound = rhs;
  r.margin = rhs - lhs;
  r.quadrature_error = err;
  r.calibrated_constant = calibrated;
  return r;
}

inline double require(const std::map<std::string, double>& p, const char* key) {
  auto it = p.find(key);
  if (it == p.end()) throw ConfigError(std::string("bound check needs parameter '") + key + "'");
  return it->second;
}

inline int require_theta(const std::map<std::string, double>& p) {
  const double th = require(p, "theta");
  if (th != 1.0 && th != 2.0) throw DomainError("theta must be 1 or 2");
  return static_cast<int>(th);
}

// Default x grid for sup over x (the kernels are symmetric about 1/2).
// The quadrature-backed checks use the coarse version.
inline std::vector<double> half_grid(bool coarse = false) {
  std::vector<double> xs;
  const int n = coarse ? 5 : 20;
  for (int i = 1; i <= n; ++i) xs.push_back(0.5 * i / n);
  return xs;
}

// sum_{n>=1} w_n * c(n) with w_n = sin^2-type weights bounded by wmax and
// c(n) ~ cinf / n^2 for large n; tail replaced by mean_weight * cinf / N and
// the error bounded by wmax * cinf / N.
struct SeriesSum {
  double value = 0.0;
  double error = 0.0;
};

template <class Term>
SeriesSum sum_inverse_square_tail(Term term, std::size_t terms, double mean_weight, double wmax,
                                  double cinf) {
  SeriesSum s;
  for (std::size_t n = terms; n >= 1; --n) s.value += term(static_cast<double>(n));
  const double tail_scale = cinf / static_cast<double>(terms);
  s.value += mean_weight * tail_scale;
  s.error = wmax * tail_scale;
  return s;
}

}  // namespace detail

// --- A1: sum_n (w + v n^2)^{-1} <= C / sqrt(vw) -----------------------------

inline BoundReport check_a1(double w, double v, double constant) {
  if (!(w > 0.0 && v > 0.0)) throw DomainError("A1 needs w, v > 0");
  constexpr std::size_t terms = 200000;
  double s = 0.0;
  for (std::size_t n = terms; n >= 1; --n) {
    const double nn = static_cast<double>(n);
    s += 1.0 / (w + v * nn * nn);
  }
  // int_{N+1/2}^inf dn / (w + v n^2) as midpoint-rule tail; error bounded by
  // the gap to the lower integral from N+1.
  const double root = std::sqrt(w * v);
  auto tail_from = [&](double a) { return (std::numbers::pi / 2.0 - std::atan(a * std::sqrt(v / w))) / root; };
  const double tail = tail_from(terms + 0.5);
  s += tail;
  const double err = std::abs(tail - tail_from(terms + 1.0)) + 1e-15 * s;
  return detail::finish(LemmaId::A1, {{"w", w}, {"v", v}, {"constant", constant}}, s,
                        constant / root, err, false);
}

// --- A2: int_0^inf dt int_0^1 dy e^{-beta t} G^theta <= C beta^{-1/theta} ----
//
// theta = 1: exact sine series of int e^{-beta t} (kernel mass) dt.
// theta = 2: the series sum_n sin^2(n pi x) int_0^inf e^{-2 beta t - n^2 pi^2 t} dt,
//            which is the quantity compared against 1/(pi sqrt 2).

inline BoundReport check_a2(double beta, int theta, double x, double constant) {
  if (!(beta > 0.0)) throw DomainError("A2 needs beta > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("A2 needs x in [0, 1]");
  constexpr double pi = std::numbers::pi;
  constexpr std::size_t terms = 400000;
  double lhs = 0.0, err = 0.0;
  if (theta == 1) {
    for (std::size_t n = terms - (terms % 2 == 0 ? 1 : 0); n >= 1; n -= 2) {
      const double nn = static_cast<double>(n);
      lhs += 4.0 * std::sin(nn * pi * x) / (nn * pi) / (beta + nn * nn * pi * pi / 2.0);
      if (n == 1) break;
    }
    err = 8.0 / (pi * pi * pi) / (2.0 * static_cast<double>(terms) * terms);
  } else {
    auto term = [&](double n) {
      const double s = std::sin(n * pi * x);
      return s * s / (2.0 * beta + n * n * pi * pi);
    };
    const auto s = detail::sum_inverse_square_tail(term, terms, 0.5, 1.0, 1.0 / (pi * pi));
    lhs = s.value;
    err = s.error;
  }
  const double rhs = constant * std::pow(beta, -1.0 / theta);
  return detail::finish(LemmaId::A2,
                        {{"beta", beta}, {"theta", double(theta)}, {"x", x}, {"constant", constant}},
                        lhs, rhs, err, false);
}

// --- A3: int_0^inf dt int_0^1 dy |G_t(x,y) - G_t(x',y)|^theta <= C Psi_theta --

namespace detail {

struct TwoLevel {
  double value = 0.0;
  double error = 0.0;
};

// Breakpoints for an integrand in y built from kernels centred at `centres`
// at time t: scale-aware points around each centre plus every sign change.
template <class Diff>
std::vector<double> kernel_breaks(Diff& diff, double t, std::initializer_list<double> centres) {
  std::vector<double> b{0.0, 1.0};
  const double w = std::sqrt(t);
  for (double c : centres) {
    b.push_back(c);
    for (double k : {0.5, 1.5, 3.0, 6.0, 10.0}) {
      b.push_back(std::clamp(c - k * w, 0.0, 1.0));
      b.push_back(std::clamp(c + k * w, 0.0, 1.0));
    }
  }
  for (int i = 1; i < 32; ++i) b.push_back(i / 32.0);
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  std::vector<double> roots;
  for (std::size_t i = 0; i + 1 < b.size(); ++i) {
    const double fa = diff(t, b[i]), fb = diff(t, b[i + 1]);
    if (!(fa * fb < 0.0)) continue;
    std::uintmax_t iters = 100;
    auto g = [&](double y) { return diff(t, y); };
    const auto r = boost::math::tools::toms748_solve(
        g, b[i], b[i + 1], fa, fb, boost::math::tools::eps_tolerance<double>(50), iters);
    roots.push_back(0.5 * (r.first + r.second));
  }
  b.insert(b.end(), roots.begin(), roots.end());
  std::sort(b.begin(), b.end());
  return b;
}

// int_0^horizon dt int_0^1 |diff(t, y)| dy, outer variable s = sqrt(t).
template <class Diff>
TwoLevel time_space_l1(Diff diff, std::initializer_list<double> centres, double horizon) {
  double inner_err_max = 0.0;
  auto outer = [&](double s) {
    if (s <= 0.0) s = 1e-150;
    const double t = s * s;
    const std::vector<double> breaks = kernel_breaks(diff, t, centres);
    auto inner = [&](double y) { return std::abs(diff(t, y)); };
    const quad::Result r = quad::adaptive_pieces(inner, breaks, 1e-10, 12, 1e-13);
    inner_err_max = std::max(inner_err_max, r.error);
    return 2.0 * s * r.value;
  };
  const double s_max = std::sqrt(horizon);
  const std::array<double, 6> s_breaks{0.0, 0.01, 0.05, 0.2, 0.6, s_max};
  const quad::Result r = quad::adaptive_pieces(outer, s_breaks, 1e-9, 16, 1e-12);
  return {r.value, r.error + inner_err_max * horizon};
}

// Beyond t = horizon the kernel masses are below 4/pi e^{-pi^2 t/2}.
inline double large_time_tail(double horizon, double weight = 2.0) {
  constexpr double pi = std::numbers::pi;
  return weight * (4.0 / pi) * (2.0 / (pi * pi)) * std::exp(-pi * pi * horizon / 2.0);
}

}  // namespace detail

inline BoundReport check_a3(const HeatKernel& kernel, double x, double x_prime, int theta,
                            double constant) {
  if (!(x >= 0.0 && x <= 1.0 && x_prime >= 0.0 && x_prime <= 1.0)) {
    throw DomainError("A3 needs x, x' in [0, 1]");
  }
  constexpr double pi = std::numbers::pi;
  const double h = std::abs(x - x_prime);
  std::map<std::string, double> params{
      {"x", x}, {"x_prime", x_prime}, {"theta", double(theta)}, {"constant", constant}};
  if (h == 0.0) return detail::finish(LemmaId::A3, std::move(params), 0.0, 0.0, 0.0, true);
  double lhs = 0.0, err = 0.0;
  if (theta == 2) {
    // int_0^inf dt of 2 sum (sin n pi x - sin n pi x')^2 e^{-n^2 pi^2 t}
    auto term = [&](double n) {
      const double d = std::sin(n * pi * x) - std::sin(n * pi * x_prime);
      return 2.0 * d * d / (n * n * pi * pi);
    };
    const auto s =
        detail::sum_inverse_square_tail(term, std::size_t{1} << 21, 2.0 / (pi * pi), 8.0 / (pi * pi), 1.0);
    lhs = s.value;
    err = s.error;
  } else {
    const double horizon = 8.0;
    auto diff = [&](double t, double y) { return kernel(t, x, y) - kernel(t, x_prime, y); };
    const auto r = detail::time_space_l1(diff, {x, x_prime}, horizon);
    const double tail = detail::large_time_tail(horizon);
    lhs = r.value + 0.5 * tail;
    err = r.error + 0.5 * tail;
  }
  const double rhs = constant * (theta == 1 ? psi1(h) : psi2(h));
  return detail::finish(LemmaId::A3, std::move(params), lhs, rhs, err, true);
}

// --- A5: sup_t sup_x int_0^t ds int dy |G_{t+eps-s} - G_{t-s}|^theta <= C sqrt(eps)
//
// The integrand is nonnegative, so the sup over t is the t -> infinity limit
// int_0^inf dr int dy |G_{r+eps}(x,y) - G_r(x,y)|^theta.

inline BoundReport check_a5(const HeatKernel& kernel, double eps, int theta, double constant,
                            std::vector<double> xs = {}) {
  if (xs.empty()) xs = detail::half_grid(theta == 1);
  if (!(eps > 0.0)) throw DomainError("A5 needs eps > 0");
  constexpr double pi = std::numbers::pi;
  double lhs = 0.0, err = 0.0, x_star = 0.0;
  for (double x : xs) {
    double value = 0.0, e = 0.0;
    if (theta == 2) {
      auto term = [&](double n) {
        const double s = std::sin(n * pi * x);
        const double d = -std::expm1(-n * n * pi * pi * eps / 2.0);
        return 2.0 * s * s * d * d / (n * n * pi * pi);
      };
      const auto s = detail::sum_inverse_square_tail(term, std::size_t{1} << 20, 1.0 / (pi * pi),
                                                     2.0 / (pi * pi), 1.0);
      value = s.value;
      e = s.error;
    } else {
      const double horizon = 8.0;
      auto diff = [&](double r, double y) { return kernel(r + eps, x, y) - kernel(r, x, y); };
      const auto q = detail::time_space_l1(diff, {x}, horizon);
      const double tail = detail::large_time_tail(horizon);
      value = q.value + 0.5 * tail;
      e = q.error + 0.5 * tail;
    }
    if (value > lhs) {
      lhs = value;
      x_star = x;
    }
    err = std::max(err, e);
  }
  const double rhs = constant * std::sqrt(eps);
  return detail::finish(LemmaId::A5,
                        {{"epsilon", eps}, {"theta", double(theta)}, {"x", x_star}, {"constant", constant}},
                        lhs, rhs, err, true);
}

// --- A6: sup_x int_0^eps dr int dy G_r(x,y)^theta <= C eps^{1/theta} ---------

inline BoundReport check_a6(const HeatKernel& kernel, double eps, int theta, double constant,
                            std::vector<double> xs = {}) {
  if (xs.empty()) xs = detail::half_grid();
  if (!(eps > 0.0)) throw DomainError("A6 needs eps > 0");
  constexpr double pi = std::numbers::pi;
  double lhs = 0.0, err = 0.0, x_star = 0.0;
  for (double x : xs) {
    double value = 0.0, e = 0.0;
    if (theta == 1) {
      auto mass = [&](double r) { return r > 0.0 ? kernel.survival(r, x) : 1.0; };
      const std::array<double, 3> breaks{0.0, 0.5 * eps, eps};
      const quad::Result q = quad::adaptive_pieces(mass, breaks, 1e-12, 25);
      value = q.value;
      e = q.error + 1e-14 * eps;
    } else {
      auto term = [&](double n) {
        const double s = std::sin(n * pi * x);
        return 2.0 * s * s * (-std::expm1(-n * n * pi * pi * eps)) / (n * n * pi * pi);
      };
      const auto s = detail::sum_inverse_square_tail(term, std::size_t{1} << 20, 1.0 / (pi * pi),
                                                     2.0 / (pi * pi), 1.0);
      value = s.value;
      e = s.error;
    }
    if (value > lhs) {
      lhs = value;
      x_star = x;
    }
    err = std::max(err, e);
  }
  const double rhs = constant * std::pow(eps, 1.0 / theta);
  return detail::finish(LemmaId::A6,
                        {{"epsilon", eps}, {"theta", double(theta)}, {"x", x_star}, {"constant", constant}},
                        lhs, rhs, err, true);
}

// --- Feller checks on a named test function ----------------------------------

/// Test functions for the Feller checks: 0 = sin(pi x), 1 = min(x, 1-x)^{1/2}.
inline GridFunction feller_test_function(int which, std::size_t intervals = 1024) {
  if (which == 0) return GridFunction::sample(intervals, [](double x) { return std::sin(kPi * x); });
  return GridFunction::sample(intervals, [](double x) { return std::sqrt(std::min(x, 1.0 - x)); });
}

inline BoundReport check_feller(const HeatKernel& kernel, int which, double t, double alpha,
                                bool spatial) {
  const GridFunction f = feller_test_function(which);
  const FellerReport rep = feller_defect(kernel, f, t, alpha);
  std::map<std::string, double> params{{"function", double(which)}, {"t", t}, {"alpha", alpha}};
  if (!spatial) {
    return detail::finish(LemmaId::Feller, std::move(params), rep.defect, rep.bound,
                          rep.quadrature_error, false);
  }
  // the seminorm of G_t f moves by at most 2 err / h^alpha under a pointwise error err
  const double err = 2.0 * rep.quadrature_error / std::pow(f.spacing(), alpha);
  return detail::finish(LemmaId::Feller2, std::move(params), rep.smoothed_seminorm,
                        rep.smoothed_bound, err, false);
}

/// Dispatch by lemma id; parameters named as in the CSV columns.
inline BoundReport verify_green_bound(const HeatKernel& kernel, LemmaId id,
                                      const std::map<std::string, double>& p,
                                      const GreenConstants& c = {}) {
  auto opt = [&](const char* key, double fallback) {
    auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
  };
  switch (id) {
    case LemmaId::A1: {
      const double w = detail::require(p, "w"), v = detail::require(p, "v");
      return check_a1(w, v, opt("constant", c.a1));
    }
    case LemmaId::A2: {
      const int th = detail::require_theta(p);
      return check_a2(detail::require(p, "beta"), th, opt("x", 0.5),
                      opt("constant", th == 1 ? c.a2_theta1 : c.a2_theta2));
    }
    case LemmaId::A3: {
      const int th = detail::require_theta(p);
      return check_a3(kernel, detail::require(p, "x"), detail::require(p, "x_prime"), th,
                      opt("constant", th == 1 ? c.a3_theta1 : c.a3_theta2));
    }
    case LemmaId::A5: {
      const int th = detail::require_theta(p);
      return check_a5(kernel, detail::require(p, "epsilon"), th,
                      opt("constant", th == 1 ? c.a5_theta1 : c.a5_theta2));
    }
    case LemmaId::A6: {
      const int th = detail::require_theta(p);
      return check_a6(kernel, detail::require(p, "epsilon"), th,
                      opt("constant", th == 1 ? c.a6_theta1 : c.a6_theta2));
    }
    case LemmaId::LogSobolev:
      throw ConfigError("log-Sobolev checks take a grid function; use log_sobolev_check");
    case LemmaId::Feller:
    case LemmaId::Feller2: {
      return check_feller(kernel, static_cast<int>(opt("function", 0.0)), detail::require(p, "t"),
                          detail::require(p, "alpha"), id == LemmaId::Feller2);
    }
  }
  throw ConfigError("unhandled lemma id");
}

/// Parameter sweeps of the default battery.
struct BatterySweeps {
  std::vector<double> a1_values{1.0, 10.0, 100.0};
  std::vector<double> a2_betas{1.0, 10.0, 100.0};
  std::vector<std::pair<double, double>> a3_pairs{
      {0.3, 0.35}, {0.3, 0.4}, {0.3, 0.5}, {0.1, 0.2}, {0.45, 0.55}, {0.2, 0.35}};
  std::vector<double> a5_eps{0.01, 0.02, 0.05, 0.1};
  std::vector<double> a6_eps{0.001, 0.01, 0.1};
};

/// Every report of the default battery, in a fixed order.
inline std::vector<BoundReport> default_battery(const HeatKernel& kernel,
                                                const GreenConstants& c = {},
                                                const BatterySweeps& sw = {}) {
  std::vector<BoundReport> out;
  for (double w : sw.a1_values) {
    for (double v : sw.a1_values) out.push_back(check_a1(w, v, c.a1));
  }
  for (int th : {1, 2}) {
    for (double b : sw.a2_betas) out.push_back(check_a2(b, th, 0.5, th == 1 ? c.a2_theta1 : c.a2_theta2));
  }
  for (int th : {1, 2}) {
    for (auto [x, xp] : sw.a3_pairs) {
      out.push_back(check_a3(kernel, x, xp, th, th == 1 ? c.a3_theta1 : c.a3_theta2));
    }
  }
  for (int th : {1, 2}) {
    for (double e : sw.a5_eps) out.push_back(check_a5(kernel, e, th, th == 1 ? c.a5_theta1 : c.a5_theta2));
  }
  for (int th : {1, 2}) {
    for (double e : sw.a6_eps) out.push_back(check_a6(kernel, e, th, th == 1 ? c.a6_theta1 : c.a6_theta2));
  }
  out.push_back(check_feller(kernel, 0, 0.01, 1.0, false));
  out.push_back(check_feller(kernel, 0, 0.01, 1.0, true));
  for (double t : {1e-3, 1e-2, 1e-1}) {
    out.push_back(check_feller(kernel, 1, t, 0.5, false));
    out.push_back(check_feller(kernel, 1, t, 0.5, true));
  }
  return out;
}

/// max/min of lhs/rhs over a group of reports (uniformity of the implied constant).
inline double ratio_spread(const std::vector<BoundReport>& reports) {
  double lo = INFINITY, hi = 0.0;
  for (const auto& r : reports) {
    if (r.rhs_bound <= 0.0) continue;
    lo = std::min(lo, r.ratio());
    hi = std::max(hi, r.ratio());
  }
  return hi / lo;
}

/// Calibrate an implied constant: the largest lhs/shape over the given reports
/// (computed with constant = 1).
inline double calibrate_constant(const std::vector<BoundReport>& unit_constant_reports) {
  double best = 0.0;
  for (const auto& r : unit_constant_reports) best = std::max(best, r.lhs / r.rhs_bound);
  return best;
}

}  // namespace spdelab
