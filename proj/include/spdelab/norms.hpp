#pragma once

// Grid norms of interior nodal values with implicit zero boundary values.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>

#include "spdelab/coefficients.hpp"

namespace spdelab {

struct Norms {
  double sup = 0.0;
  double l2 = 0.0;
  double h1 = 0.0;
  double l2logl = 0.0;  // int |u|^2 log_+ |u| dx (the squared L^2 log L quantity)
  bool finite = true;
};

/// Midpoint nodal sums for l2 and l2logl; h1 from forward differences over
/// all nx+1 cells, so that <Delta_h u, u> = -h1^2 exactly.
inline Norms norms(std::span<const double> u) {
  Norms n;
  if (u.empty()) return n;
  const double dx = 1.0 / static_cast<double>(u.size() + 1);
  double sq = 0.0, ll = 0.0, grad = 0.0, prev = 0.0;
  for (double v : u) {
    if (!std::isfinite(v)) n.finite = false;
    const double a = std::abs(v);
    n.sup = std::max(n.sup, a);
    sq += v * v;
    ll += v * v * log_plus(a);
    grad += (v - prev) * (v - prev);
    prev = v;
  }
  grad += prev * prev;
  n.l2 = std::sqrt(sq * dx);
  n.l2logl = ll * dx;
  n.h1 = std::sqrt(grad / dx);
  if (!n.finite) n.sup = std::numeric_limits<double>::infinity();
  return n;
}

/// int_0^1 u(x) sin(pi x) dx by the nodal midpoint sum.
inline double bg_mode_functional(std::span<const double> u) {
  const double dx = 1.0 / static_cast<double>(u.size() + 1);
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * std::sin(std::numbers::pi * dx * static_cast<double>(i + 1));
  return s * dx;
}

inline double sup_norm(std::span<const double> u) {
  double s = 0.0;
  for (double v : u) {
    if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    s = std::max(s, std::abs(v));
  }
  return s;
}

}  // namespace spdelab
