#pragma once

// Functionals and estimators on fields and path ensembles: the Lyapunov
// function, log-Sobolev checks, weak-form residuals, moment norms and
// Hölder-exponent regression.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spdelab/coefficients.hpp"
#include "spdelab/errors.hpp"
#include "spdelab/green_bounds.hpp"
#include "spdelab/heat_kernel.hpp"
#include "spdelab/noise_field.hpp"
#include "spdelab/norms.hpp"
#include "spdelab/quadrature.hpp"
#include "spdelab/solver.hpp"

namespace spdelab {

// --- Lyapunov function Phi(r) = exp(int_0^r dz / (1 + z log_+ z)) ---

/// log Phi(r). On [0, e] the integral is log(1 + r); beyond e it is computed
/// in s = log z, where the integrand becomes 1 / (e^{-s} + s).
inline double lyapunov_log(double r) {
  if (!(r >= 0.0) || std::isnan(r)) throw DomainError("lyapunov_value needs r >= 0");
  constexpr double e = std::numbers::e;
  if (r <= e) return std::log1p(r);
  if (std::isinf(r)) return std::numeric_limits<double>::infinity();
  const auto q = quad::adaptive([](double s) { return 1.0 / (std::exp(-s) + s); }, 1.0, std::log(r), 1e-14, 30);
  return std::log1p(e) + q.value;
}

inline double lyapunov_value(double r) { return std::exp(lyapunov_log(r)); }

// --- log-Sobolev inequality ---

/// K_eps = 1 + (1/4) log(1/eps)
inline double log_sobolev_constant(double eps) { return 1.0 + 0.25 * std::log(1.0 / eps); }

namespace detail {

inline std::pair<double, double> log_sobolev_sides(std::span<const double> interior, double eps) {
  const Norms n = norms(interior);
  const double l2sq = n.l2 * n.l2;
  const double rhs = eps * n.h1 * n.h1 + log_sobolev_constant(eps) * l2sq + l2sq * log_plus(l2sq) +
                     1.0 / std::numbers::e;
  return {n.l2logl, rhs};
}

}  // namespace detail

/// ||h||^2_{L^2 log L} <= eps ||h'||^2 + K_eps ||h||^2 + ||h||^2 log_+ ||h||^2 + 1/e,
/// both sides by grid quadrature; the error is the Richardson estimate from
/// the every-other-node subgrid.
inline BoundReport log_sobolev_check(const GridFunction& h, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("log-Sobolev check needs eps in (0, 1)");
  detail::require_dirichlet(h, "log_sobolev_check");
  const std::size_t n = h.intervals();
  const std::span<const double> interior(h.values.data() + 1, n - 1);
  const auto [lhs, rhs] = detail::log_sobolev_sides(interior, eps);
  double err = 0.0;
  if (n % 2 == 0 && n >= 4) {
    std::vector<double> coarse;
    for (std::size_t j = 2; j < n; j += 2) coarse.push_back(h.values[j]);
    const auto [lc, rc] = detail::log_sobolev_sides(coarse, eps);
    err = std::abs((rhs - lhs) - (rc - lc)) / 3.0;
  } else {
    err = 1e-6 * std::max(std::abs(lhs), std::abs(rhs));
  }
  BoundReport r;
  r.lemma_id = LemmaId::LogSobolev;
  r.params = {{"epsilon", eps}, {"intervals", double(n)}};
  r.lhs = lhs;
  r.rhs_bound = rhs;
  r.margin = rhs - lhs;
  r.quadrature_error = err;
  return r;
}

// --- weak-form residual ---

struct WeakResidual {
  double value = 0.0;
  bool inconclusive = false;
  std::string reason;
};

/// |<u(t),phi> - <u0,phi> - (1/2) int <u, phi''> - int <b(u), phi> - sum sigma(u) phi W|
/// with phi = sin(mode pi x). Time integrals by the trapezoid rule over the
/// stored fields; the noise term is the left-point sum over every step, which
/// needs fields at every step unless sigma is constant.
inline WeakResidual weak_form_residual(const PathResult& path, const TruncatedCoefficient& coeffs,
                                       const NoisePath& noise, int phi_mode) {
  WeakResidual out;
  const auto& f = path.fields;
  const GridSpec& g = noise.grid();
  if (f.size() < 2 || f.front().time != 0.0) {
    throw ContractError("weak_form_residual needs stored fields starting at t = 0");
  }
  if (path.record.blew_up) {
    out.inconclusive = true;
    out.reason = "path blew up";
    return out;
  }
  const std::size_t nx = g.nx;
  const double dx = g.dx();
  const double k2 = phi_mode * phi_mode * std::numbers::pi * std::numbers::pi;
  std::vector<double> phi(nx);
  for (std::size_t i = 0; i < nx; ++i) phi[i] = std::sin(phi_mode * std::numbers::pi * g.x(i));
  auto inner = [&](std::span<const double> v) {
    double s = 0.0;
    for (std::size_t i = 0; i < nx; ++i) s += v[i] * phi[i];
    return s * dx;
  };
  std::vector<double> b(nx), sg(nx);
  auto integrand = [&](const Field& u) {
    drift_row(coeffs, u.values, b);
    return -0.5 * k2 * inner(u.values) + inner(b);
  };

  const double stride_dt = f[1].time - f[0].time;
  const std::size_t stride = static_cast<std::size_t>(std::llround(stride_dt / g.dt));
  double time_integral = 0.0;
  double prev = integrand(f[0]);
  for (std::size_t k = 1; k < f.size(); ++k) {
    const double cur = integrand(f[k]);
    time_integral += 0.5 * (f[k].time - f[k - 1].time) * (prev + cur);
    prev = cur;
  }

  const std::size_t steps = static_cast<std::size_t>(std::llround(f.back().time / g.dt));
  double noise_term = 0.0;
  std::vector<double> w(nx);
  const bool constant_sigma = is_constant_diffusion(coeffs.base.diffusion);
  if (!constant_sigma && stride != 1) {
    out.inconclusive = true;
    out.reason = "stride too coarse for the noise integral";
    return out;
  }
  for (std::size_t m = 0; m < steps; ++m) {
    noise.increments(m, w);
    if (constant_sigma) {
      std::fill(sg.begin(), sg.end(), std::get<Constant>(coeffs.base.diffusion).sigma0);
    } else {
      diffusion_row(coeffs, f[m].values, sg);
    }
    for (std::size_t i = 0; i < nx; ++i) noise_term += sg[i] * phi[i] * w[i];
  }
  out.value = std::abs(inner(f.back().values) - inner(f.front().values) - time_integral - noise_term);
  if (stride > 1) {
    out.reason = "trapezoid over stride " + std::to_string(stride);
  }
  return out;
}

// --- moment norms ---

struct MomentEstimate {
  double beta = 0.0;
  double k = 2.0;
  double value = 0.0;
  double mc_stderr = 0.0;
  std::size_t n_paths = 0;
  double t_star = 0.0;  // location of the sup
  double x_star = 0.0;
  bool qualitative = false;  // k > 12
};

namespace detail {

// Common stored times across an ensemble, as (path field index) per path.
inline std::size_t common_field_count(const std::vector<PathResult>& ens) {
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& p : ens) n = std::min(n, p.fields.size());
  return n;
}

}  // namespace detail

/// sup over stored (t, x) of e^{-beta t} (mean_paths |u|^k)^{1/k}; standard
/// error from a path-level bootstrap (200 resamples, fixed generator)
/// restricted to the 256 cells with the largest point estimate.
inline MomentEstimate moment_norm_estimate(const std::vector<PathResult>& ens, double beta, double k,
                                           std::uint64_t bootstrap_seed = 0x9e3779b97f4a7c15ull) {
  if (ens.size() < 30) throw ContractError("moment_norm_estimate needs at least 30 paths");
  if (!(k >= 2.0)) throw DomainError("moment order k must be >= 2");
  if (!(beta >= 0.0)) throw DomainError("beta must be >= 0");
  const std::size_t nt = detail::common_field_count(ens);
  if (nt == 0) throw ContractError("paths carry no stored fields");
  const std::size_t nx = ens.front().fields.front().nx();
  const std::size_t cells = nt * nx;
  const std::size_t np = ens.size();

  std::vector<double> mean(cells, 0.0);
  for (const auto& p : ens) {
    for (std::size_t j = 0; j < nt; ++j) {
      const auto& v = p.fields[j].values;
      for (std::size_t i = 0; i < nx; ++i) mean[j * nx + i] += std::pow(std::abs(v[i]), k);
    }
  }
  auto weight = [&](std::size_t cell) { return std::exp(-beta * ens.front().fields[cell / nx].time); };
  MomentEstimate est;
  est.beta = beta;
  est.k = k;
  est.n_paths = np;
  est.qualitative = k > 12.0;
  std::vector<double> score(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    mean[c] /= static_cast<double>(np);
    score[c] = weight(c) * std::pow(mean[c], 1.0 / k);
  }
  const auto best = static_cast<std::size_t>(std::max_element(score.begin(), score.end()) - score.begin());
  est.value = score[best];
  est.t_star = ens.front().fields[best / nx].time;
  est.x_star = static_cast<double>(best % nx + 1) / static_cast<double>(nx + 1);

  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t top = std::min<std::size_t>(256, cells);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                    [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  order.resize(top);
  std::vector<double> contrib(np * top);
  for (std::size_t p = 0; p < np; ++p) {
    for (std::size_t c = 0; c < top; ++c) {
      const std::size_t cell = order[c];
      contrib[p * top + c] = std::pow(std::abs(ens[p].fields[cell / nx].values[cell % nx]), k);
    }
  }
  std::mt19937_64 rng(bootstrap_seed);
  std::uniform_int_distribution<std::size_t> pick(0, np - 1);
  std::vector<double> acc(top);
  double s1 = 0.0, s2 = 0.0;
  constexpr int resamples = 200;
  for (int r = 0; r < resamples; ++r) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < np; ++p) {
      const double* row = contrib.data() + pick(rng) * top;
      for (std::size_t c = 0; c < top; ++c) acc[c] += row[c];
    }
    double sup = 0.0;
    for (std::size_t c = 0; c < top; ++c) {
      sup = std::max(sup, weight(order[c]) * std::pow(acc[c] / static_cast<double>(np), 1.0 / k));
    }
    s1 += sup;
    s2 += sup * sup;
  }
  const double m1 = s1 / resamples;
  est.mc_stderr = std::sqrt(std::max(0.0, s2 / resamples - m1 * m1));
  return est;
}

/// Least-squares C in ratio_k = C sqrt(k), ratio_k = value_k / value_2.
struct GaussianMomentFit {
  std::vector<double> ks;
  std::vector<double> ratios;
  double c_hat = 0.0;
};

inline GaussianMomentFit gaussian_moment_fit(const std::vector<PathResult>& ens, const std::vector<double>& ks,
                                             double beta = 0.0) {
  GaussianMomentFit fit;
  fit.ks = ks;
  const double base = moment_norm_estimate(ens, beta, 2.0).value;
  if (!(base > 0.0)) throw ContractError("second moment vanishes on every stored cell");
  double num = 0.0, den = 0.0;
  for (double k : ks) {
    const double r = moment_norm_estimate(ens, beta, k).value / base;
    fit.ratios.push_back(r);
    num += r * std::sqrt(k);
    den += k;
  }
  fit.c_hat = num / den;
  return fit;
}

// --- Hölder exponents ---

enum class Direction { Space, Time };

inline std::string_view to_string(Direction d) { return d == Direction::Space ? "space" : "time"; }

struct LagMoment {
  double lag = 0.0;
  double moment = 0.0;  // E|increment|^k averaged over positions
  double stderr_ = 0.0;
};

struct HolderFit {
  Direction direction = Direction::Space;
  double k = 2.0;
  double exponent_hat = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::pair<double, double> lag_range{0.0, 0.0};
  double mu_theory = 0.25;
  double eta_theory = 0.5;
  std::vector<LagMoment> lags;
};

struct HolderOptions {
  double t_star = 0.5;
  std::pair<double, double> lag_range{0.0, 0.1};  // lower end 0 means the smallest admissible lag
  std::size_t n_lags = 8;
  double x_lo = 0.25;  // positions restricted to [x_lo, x_hi]
  double x_hi = 0.75;
  double alpha = 1.0;  // Hölder exponent of the initial data
  std::size_t min_paths = 100;
};

namespace detail {

// Geometrically spaced distinct integers in [lo, hi].
inline std::vector<std::size_t> geometric_integers(std::size_t lo, std::size_t hi, std::size_t count) {
  std::vector<std::size_t> out;
  if (hi < lo) return out;
  for (std::size_t j = 0; j < count; ++j) {
    const double f = count == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(count - 1);
    const auto v = static_cast<std::size_t>(std::llround(lo * std::pow(double(hi) / double(lo), f)));
    if (out.empty() || v > out.back()) out.push_back(v);
  }
  return out;
}

inline void least_squares(const std::vector<double>& x, const std::vector<double>& y, double& slope,
                          double& intercept, double& r2) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  slope = sxy / sxx;
  intercept = my - slope * mx;
  r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
}

inline std::size_t nearest_field(const PathResult& p, double t) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < p.fields.size(); ++j) {
    if (std::abs(p.fields[j].time - t) < std::abs(p.fields[best].time - t)) best = j;
  }
  return best;
}

}  // namespace detail

/// Slope of log E|increment|^k against log lag, divided by k. Space lags are
/// multiples of dx in [2dx, 0.1]; time lags multiples of the field spacing in
/// [2 spacing, 0.1], both measured from t_star.
inline HolderFit holder_fit(const std::vector<PathResult>& ens, Direction dir, double k,
                            const HolderOptions& opt = {}) {
  if (ens.empty() || ens.front().fields.size() < 2) throw ContractError("holder_fit needs stored fields");
  if (!(k > 0.0)) throw DomainError("moment order must be positive");
  if (ens.size() < opt.min_paths) throw ContractError("holder_fit needs at least min_paths paths");
  const PathResult& ref = ens.front();
  const std::size_t nx = ref.fields.front().nx();
  const double dx = 1.0 / static_cast<double>(nx + 1);
  const std::size_t j0 = detail::nearest_field(ref, opt.t_star);
  const double spacing = ref.fields[1].time - ref.fields[0].time;

  HolderFit fit;
  fit.direction = dir;
  fit.k = k;
  fit.mu_theory = std::min(0.25, opt.alpha / 2.0);
  fit.eta_theory = std::min(opt.alpha, 0.5);

  const double unit = dir == Direction::Space ? dx : spacing;
  const double lo = std::max(2.0 * unit, opt.lag_range.first);
  const double hi = std::min(0.1, opt.lag_range.second);
  std::size_t lo_n = static_cast<std::size_t>(std::ceil(lo / unit - 1e-9));
  std::size_t hi_n = static_cast<std::size_t>(std::floor(hi / unit + 1e-9));
  if (dir == Direction::Time) {
    std::size_t avail = std::numeric_limits<std::size_t>::max();
    for (const auto& p : ens) avail = std::min(avail, p.fields.size() - 1 - j0);
    hi_n = std::min(hi_n, avail);
  }
  const auto steps = detail::geometric_integers(lo_n, hi_n, opt.n_lags);
  if (steps.size() < 6) throw ContractError("holder_fit needs at least 6 distinct lags in range");

  const std::size_t i_lo = static_cast<std::size_t>(std::ceil(opt.x_lo / dx - 1e-9)) - 1;
  const std::size_t i_hi = static_cast<std::size_t>(std::floor(opt.x_hi / dx + 1e-9)) - 1;
  std::vector<double> lx, ly;
  for (std::size_t s : steps) {
    double total = 0.0, total_sq = 0.0;
    std::size_t count = 0;
    for (const auto& p : ens) {
      double path_sum = 0.0;
      std::size_t path_count = 0;
      if (dir == Direction::Space) {
        const auto& v = p.fields[j0].values;
        for (std::size_t i = i_lo; i + s <= i_hi; ++i) {
          path_sum += std::pow(std::abs(v[i + s] - v[i]), k);
          ++path_count;
        }
      } else {
        const auto& a = p.fields[j0].values;
        const auto& b = p.fields[j0 + s].values;
        for (std::size_t i = i_lo; i <= i_hi; ++i) {
          path_sum += std::pow(std::abs(b[i] - a[i]), k);
          ++path_count;
        }
      }
      const double pm = path_sum / static_cast<double>(path_count);
      total += pm;
      total_sq += pm * pm;
      ++count;
    }
    const double mean = total / static_cast<double>(count);
    const double var = std::max(0.0, total_sq / count - mean * mean);
    fit.lags.push_back({static_cast<double>(s) * unit, mean, std::sqrt(var / static_cast<double>(count))});
    lx.push_back(std::log(static_cast<double>(s) * unit));
    ly.push_back(std::log(mean));
  }
  double slope = 0.0;
  detail::least_squares(lx, ly, slope, fit.intercept, fit.r2);
  fit.exponent_hat = slope / k;
  fit.lag_range = {fit.lags.front().lag, fit.lags.back().lag};
  return fit;
}

}  // namespace spdelab
