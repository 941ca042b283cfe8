#pragma once

// Dirichlet heat kernel of (1/2) d^2/dx^2 on [0, 1].
//
//   spectral form:      G_t(x,y) = 2 sum_{n>=1} sin(n pi x) sin(n pi y) exp(-n^2 pi^2 t / 2)
//   image-charge form:  G_t(x,y) = sum_{k in Z} [ p_t(y - x - 2k) - p_t(y + x - 2k) ]
//
// where p_t is the N(0, t) density. The image sum is 2-periodic in its
// argument: reflections across 0 and 1 generate translates by 2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "spdelab/errors.hpp"
#include "spdelab/quadrature.hpp"

namespace spdelab {

inline constexpr double kPi = std::numbers::pi;

/// N(0, t) density at z.
inline double gaussian_density(double t, double z) {
  return std::exp(-z * z / (2.0 * t)) / std::sqrt(2.0 * kPi * t);
}

/// Samples of a function on the closed uniform grid {j/n : j = 0..n}.
struct GridFunction {
  std::vector<double> values;

  GridFunction() = default;
  explicit GridFunction(std::vector<double> v) : values(std::move(v)) {}

  template <class F>
  static GridFunction sample(std::size_t intervals, F&& f) {
    std::vector<double> v(intervals + 1);
    for (std::size_t j = 0; j <= intervals; ++j) {
      v[j] = f(static_cast<double>(j) / static_cast<double>(intervals));
    }
    // exact zeros at the ends regardless of roundoff in f(1)
    if (std::abs(v.front()) < 1e-14) v.front() = 0.0;
    if (std::abs(v.back()) < 1e-14) v.back() = 0.0;
    return GridFunction(std::move(v));
  }

  std::size_t intervals() const { return values.empty() ? 0 : values.size() - 1; }
  double spacing() const { return 1.0 / static_cast<double>(intervals()); }
  double x(std::size_t j) const { return static_cast<double>(j) * spacing(); }
};

struct HeatKernelOptions {
  double switch_time = 0.1;
  double tail_tol = 1e-14;
  std::size_t mode_cap = 100000;
  std::size_t image_cap = 100000;
};

class HeatKernel {
 public:
  HeatKernel() = default;
  explicit HeatKernel(HeatKernelOptions opts) : opts_(opts) {
    if (!(opts_.switch_time > 0.0) || !(opts_.tail_tol > 0.0) || opts_.mode_cap == 0 ||
        opts_.image_cap == 0) {
      throw DomainError("HeatKernel: options must be positive");
    }
  }

  const HeatKernelOptions& options() const { return opts_; }

  /// G_t(x, y), clamped to >= 0. Image form below switch_time, spectral above.
  double operator()(double t, double x, double y) const {
    check_args(t, x, y);
    const double g = t < opts_.switch_time ? images_unchecked(t, x, y)
                                           : spectral_unchecked(t, x, y);
    return g > 0.0 ? g : 0.0;
  }

  /// Raw (unclamped) spectral sum, truncated by the explicit tail bound.
  double spectral(double t, double x, double y) const {
    check_args(t, x, y);
    return spectral_unchecked(t, x, y);
  }

  /// Raw (unclamped) image-charge sum.
  double images(double t, double x, double y) const {
    check_args(t, x, y);
    return images_unchecked(t, x, y);
  }

  /// Number of sine modes needed so that sum_{n>N} 2 exp(-n^2 pi^2 t/2) < tail_tol.
  std::size_t spectral_terms(double t) const {
    const double a = kPi * kPi * t / 2.0;
    const double need = std::sqrt(std::log(4.0 / opts_.tail_tol) / a);
    return std::min<std::size_t>(opts_.mode_cap, static_cast<std::size_t>(std::ceil(need)) + 1);
  }

  /// Image index range K: terms with |k| > K are below tail_tol.
  std::size_t image_terms(double t) const {
    const double r2 = 2.0 * t * std::log(4.0 / (opts_.tail_tol * std::sqrt(2.0 * kPi * t)));
    const double reach = std::sqrt(std::max(r2, 0.0));
    return std::min<std::size_t>(opts_.image_cap,
                                 static_cast<std::size_t>(std::ceil((reach + 2.0) / 2.0)));
  }

  /// True when the cap did not cut the series short of tail_tol.
  bool spectral_converged(double t) const {
    const double a = kPi * kPi * t / 2.0;
    return std::sqrt(std::log(4.0 / opts_.tail_tol) / a) + 1.0 <=
           static_cast<double>(opts_.mode_cap);
  }
  bool images_converged(double t) const {
    const double r2 = 2.0 * t * std::log(4.0 / (opts_.tail_tol * std::sqrt(2.0 * kPi * t)));
    return (std::sqrt(std::max(r2, 0.0)) + 2.0) / 2.0 <= static_cast<double>(opts_.image_cap);
  }

  /// Closed-form survival probability int_0^1 G_t(x,y) dy of Brownian motion
  /// killed at {0, 1}: erf sums for small t, sine series otherwise.
  double survival(double t, double x) const {
    check_args(t, x, 0.0);
    if (x == 0.0 || x == 1.0) return 0.0;
    double s = 0.0;
    if (t < opts_.switch_time) {
      const auto k_max = static_cast<long>(image_terms(t));
      const double scale = 1.0 / std::sqrt(2.0 * t);
      // int_0^1 p_t(y - c) dy
      auto box = [&](double c) {
        return 0.5 * (std::erf((1.0 - c) * scale) + std::erf(c * scale));
      };
      for (long k = -k_max; k <= k_max; ++k) {
        s += box(x + 2.0 * k) - box(2.0 * k - x);
      }
    } else {
      const std::size_t n_max = spectral_terms(t);
      for (std::size_t n = 1; n <= n_max; n += 2) {
        const double nn = static_cast<double>(n);
        s += 4.0 * std::sin(nn * kPi * x) / (nn * kPi) * std::exp(-nn * nn * kPi * kPi * t / 2.0);
      }
    }
    return std::clamp(s, 0.0, 1.0);
  }

 private:
  static void check_args(double t, double x, double y) {
    if (!std::isfinite(t) || !(t > 0.0)) throw DomainError("heat kernel: t must be finite and > 0");
    if (!(x >= 0.0 && x <= 1.0) || !(y >= 0.0 && y <= 1.0)) {
      throw DomainError("heat kernel: x, y must lie in [0, 1]");
    }
  }

  double spectral_unchecked(double t, double x, double y) const {
    if (x > y) std::swap(x, y);  // identical summation order for (x,y) and (y,x)
    const std::size_t n_max = spectral_terms(t);
    const double a = kPi * kPi * t / 2.0;
    double s = 0.0;
    for (std::size_t n = 1; n <= n_max; ++n) {
      const double nn = static_cast<double>(n);
      s += (std::sin(nn * kPi * x) * std::sin(nn * kPi * y)) * std::exp(-nn * nn * a);
    }
    return 2.0 * s;
  }

  double images_unchecked(double t, double x, double y) const {
    if (x > y) std::swap(x, y);
    const auto k_max = static_cast<long>(image_terms(t));
    double s = 0.0;
    for (long k = -k_max; k <= k_max; ++k) {
      const double shift = 2.0 * static_cast<double>(k);
      s += gaussian_density(t, y - x - shift) - gaussian_density(t, y + x - shift);
    }
    return s;
  }

  HeatKernelOptions opts_{};
};

struct SemigroupResult {
  GridFunction values;
  double quadrature_error = 0.0;  // max over grid points
};

namespace detail {

inline void require_dirichlet(const GridFunction& f, const char* who) {
  if (f.intervals() < 2) throw DomainError(std::string(who) + ": grid needs at least 2 intervals");
  double scale = 0.0;
  for (double v : f.values) scale = std::max(scale, std::abs(v));
  const double tol = 1e-12 * std::max(scale, 1.0);
  if (std::abs(f.values.front()) > tol || std::abs(f.values.back()) > tol) {
    throw ContractError(std::string(who) + ": grid function must vanish at 0 and 1");
  }
}

}  // namespace detail

/// (G_t f)(x_i) = int_0^1 G_t(x_i, y) f(y) dy by composite Simpson on f's grid.
inline SemigroupResult apply_semigroup(const HeatKernel& kernel, const GridFunction& f, double t) {
  detail::require_dirichlet(f, "apply_semigroup");
  const std::size_t n = f.intervals();
  const double h = f.spacing();
  SemigroupResult out;
  out.values.values.assign(n + 1, 0.0);
  std::vector<double> integrand(n + 1);
  for (std::size_t i = 1; i < n; ++i) {
    const double xi = f.x(i);
    for (std::size_t j = 0; j <= n; ++j) {
      integrand[j] = f.values[j] == 0.0 ? 0.0 : kernel(t, xi, f.x(j)) * f.values[j];
    }
    const quad::Result r = quad::simpson(integrand, h);
    out.values.values[i] = r.value;
    out.quadrature_error = std::max(out.quadrature_error, r.error);
  }
  return out;
}

/// int_0^1 G_t(x, y) dy by composite Simpson; the panel count resolves the
/// kernel's sqrt(t) width.
inline quad::Result kernel_mass(const HeatKernel& kernel, double t, double x) {
  if (!std::isfinite(t) || !(t > 0.0)) throw DomainError("kernel_mass: t must be finite and > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("kernel_mass: x must lie in [0, 1]");
  if (x == 0.0 || x == 1.0) return {};
  const double width = std::sqrt(t);
  std::size_t panels = static_cast<std::size_t>(std::ceil(64.0 / std::min(width, 1.0)));
  panels = std::clamp<std::size_t>((panels + 3) / 4 * 4, 256, 1 << 20);
  const double h = 1.0 / static_cast<double>(panels);
  std::vector<double> integrand(panels + 1);
  for (std::size_t j = 0; j <= panels; ++j) integrand[j] = kernel(t, x, static_cast<double>(j) * h);
  return quad::simpson(integrand, h);
}

/// Discrete C^alpha_0 seminorm: max |f(x_i) - f(x_j)| / |x_i - x_j|^alpha over
/// all grid pairs, endpoints included.
inline double holder_seminorm(const GridFunction& f, double alpha) {
  const std::size_t n = f.intervals();
  if (n < 1) throw DomainError("holder_seminorm: empty grid");
  double best = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    for (std::size_t j = i + 1; j <= n; ++j) {
      const double dist = static_cast<double>(j - i) * f.spacing();
      best = std::max(best, std::abs(f.values[i] - f.values[j]) / std::pow(dist, alpha));
    }
  }
  return best;
}

/// Quantitative Feller check: sup-distance between G_t f and f against
/// (1 + (alpha/e)^{alpha/2}) |f|_{C^alpha} t^{alpha/2}, plus the Holder
/// seminorm of G_t f against 6 |f|_{C^alpha}.
struct FellerReport {
  double defect = 0.0;
  double bound = 0.0;
  double holder_norm_f = 0.0;
  double smoothed_seminorm = 0.0;
  double smoothed_bound = 0.0;
  double quadrature_error = 0.0;
};

inline FellerReport feller_defect(const HeatKernel& kernel, const GridFunction& f, double t,
                                  double alpha) {
  if (f.intervals() < 2) throw DomainError("feller_defect: zero grid");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("feller_defect: alpha must be in (0, 1]");
  const SemigroupResult smoothed = apply_semigroup(kernel, f, t);
  FellerReport rep;
  for (std::size_t j = 0; j <= f.intervals(); ++j) {
    rep.defect = std::max(rep.defect, std::abs(smoothed.values.values[j] - f.values[j]));
  }
  rep.holder_norm_f = holder_seminorm(f, alpha);
  const double c_alpha = 1.0 + std::pow(alpha / std::numbers::e, alpha / 2.0);
  rep.bound = c_alpha * rep.holder_norm_f * std::pow(t, alpha / 2.0);
  rep.smoothed_seminorm = holder_seminorm(smoothed.values, alpha);
  rep.smoothed_bound = 6.0 * rep.holder_norm_f;
  rep.quadrature_error = smoothed.quadrature_error;
  return rep;
}

}  // namespace spdelab
