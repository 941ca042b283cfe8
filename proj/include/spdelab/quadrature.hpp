#pragma once

#include <cmath>
#include <algorithm>
#include <cstddef>
#include <span>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "spdelab/errors.hpp"

namespace spdelab::quad {

struct Result {
  double value = 0.0;
  double error = 0.0;  // estimated absolute error
};

namespace detail {

inline double simpson_even(std::span<const double> f, double h, std::size_t stride = 1) {
  const std::size_t n = (f.size() - 1) / stride;
  double odd = 0.0, even = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    (i % 2 ? odd : even) += f[i * stride];
  }
  return (h * stride / 3.0) * (f[0] + f[n * stride] + 4.0 * odd + 2.0 * even);
}

inline double trapezoid(std::span<const double> f, double h) {
  double s = 0.5 * (f.front() + f.back());
  for (std::size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
  return h * s;
}

}  // namespace detail

/// Composite Simpson on uniformly spaced samples f[0..n].
///
/// With n divisible by 4 the error is the Richardson estimate |S_h - S_2h|/15;
/// otherwise it falls back to |S - T| (Simpson against trapezoid), which
/// overestimates. Odd n closes the last three panels with the 3/8 rule.
inline Result simpson(std::span<const double> f, double h) {
  const std::size_t n = f.size() == 0 ? 0 : f.size() - 1;
  if (n < 2) throw DomainError("simpson: need at least two panels");
  Result r;
  if (n % 2 == 0) {
    r.value = detail::simpson_even(f, h);
    if (n % 4 == 0) {
      const double coarse = detail::simpson_even(f, h, 2);
      r.error = std::abs(r.value - coarse) / 15.0;
      return r;
    }
  } else {
    if (n < 3) throw DomainError("simpson: odd panel count needs n >= 3");
    const double head = n > 3 ? detail::simpson_even(f.first(n - 2), h) : 0.0;
    const double* t = f.data() + (n - 3);
    r.value = head + 3.0 * h / 8.0 * (t[0] + 3.0 * t[1] + 3.0 * t[2] + t[3]);
  }
  r.error = std::abs(r.value - detail::trapezoid(f, h));
  return r;
}

namespace detail {

// One 31-point Kronrod panel; error is |K - G| scaled to [a, b].
template <class F>
Result kronrod_panel(F& f, double a, double b) {
  Result r;
  r.value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 0, 0.0,
                                                                          &r.error);
  r.error *= 0.5 * (b - a);
  return r;
}

template <class F>
Result bisect(F& f, double a, double b, Result whole, double abs_tol, unsigned depth) {
  if (depth == 0 || whole.error <= abs_tol) return whole;
  const double mid = 0.5 * (a + b);
  const Result left = kronrod_panel(f, a, mid);
  const Result right = kronrod_panel(f, mid, b);
  const Result l = bisect(f, a, mid, left, 0.5 * abs_tol, depth - 1);
  const Result r = bisect(f, mid, b, right, 0.5 * abs_tol, depth - 1);
  return {l.value + r.value, l.error + r.error};
}

}  // namespace detail

/// Adaptive Gauss-Kronrod (31 points) on [a, b] with an absolute error estimate.
/// Refinement stops when the panel error is below max(abs_tol, rel_tol * |value|).
template <class F>
Result adaptive(F&& f, double a, double b, double rel_tol = 1e-11, unsigned max_depth = 25,
                double abs_tol = 0.0) {
  if (a == b) return {};
  auto& fn = f;
  const Result whole = detail::kronrod_panel(fn, a, b);
  const double tol = std::max(abs_tol, rel_tol * std::abs(whole.value));
  return detail::bisect(fn, a, b, whole, tol, max_depth);
}

/// Adaptive integration over consecutive breakpoints; errors add.
template <class F>
Result adaptive_pieces(F&& f, std::span<const double> breaks, double rel_tol = 1e-11,
                       unsigned max_depth = 25, double abs_tol = 0.0) {
  Result total;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    if (breaks[i + 1] <= breaks[i]) continue;
    const Result piece = adaptive(f, breaks[i], breaks[i + 1], rel_tol, max_depth, abs_tol);
    total.value += piece.value;
    total.error += piece.error;
  }
  return total;
}

}  // namespace spdelab::quad
