#pragma once

// Semi-implicit finite-difference integration of
//   du = (1/2) u'' dt + b(u) dt + sigma(u) dW   on (0,1), u = 0 at x = 0, 1,
// with a localization ladder of truncation levels, blowup detection, and a
// Picard reference solver built on the exact semigroup of the sine modes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spdelab/coefficients.hpp"
#include "spdelab/errors.hpp"
#include "spdelab/noise_field.hpp"
#include "spdelab/norms.hpp"

namespace spdelab {

struct Field {
  std::vector<double> values;  // interior nodes
  double time = 0.0;

  std::size_t nx() const { return values.size(); }
  /// Values on the closed grid, endpoints exactly zero.
  std::vector<double> closed() const {
    std::vector<double> c(values.size() + 2, 0.0);
    std::copy(values.begin(), values.end(), c.begin() + 1);
    return c;
  }
  template <class F>
  static Field sample(std::size_t nx, F f, double time = 0.0) {
    Field u{std::vector<double>(nx), time};
    const double dx = 1.0 / static_cast<double>(nx + 1);
    for (std::size_t i = 0; i < nx; ++i) u.values[i] = f(dx * static_cast<double>(i + 1));
    return u;
  }
};

/// Factorized (I - (dt/2) Delta_h) with Dirichlet closure (Thomas algorithm).
class ImplicitHeatOperator {
 public:
  ImplicitHeatOperator() = default;
  ImplicitHeatOperator(std::size_t nx, double dt) : nx_(nx) {
    const double dx = 1.0 / static_cast<double>(nx + 1);
    const double r = dt / (2.0 * dx * dx);
    diag_ = 1.0 + 2.0 * r;
    off_ = -r;
    cprime_.resize(nx);
    inv_.resize(nx);
    double c = 0.0;
    for (std::size_t i = 0; i < nx; ++i) {
      const double denom = diag_ - off_ * c;
      inv_[i] = 1.0 / denom;
      c = off_ * inv_[i];
      cprime_[i] = c;
    }
  }

  /// Overwrites d with the solution of A u = d.
  void solve(std::span<double> d) const {
    double prev = 0.0;
    for (std::size_t i = 0; i < nx_; ++i) {
      prev = (d[i] - off_ * prev) * inv_[i];
      d[i] = prev;
    }
    for (std::size_t i = nx_ - 1; i-- > 0;) d[i] -= cprime_[i] * d[i + 1];
  }

  /// A u, for residual checks.
  std::vector<double> apply(std::span<const double> u) const {
    std::vector<double> out(nx_);
    for (std::size_t i = 0; i < nx_; ++i) {
      out[i] = diag_ * u[i] + (i > 0 ? off_ * u[i - 1] : 0.0) + (i + 1 < nx_ ? off_ * u[i + 1] : 0.0);
    }
    return out;
  }

 private:
  std::size_t nx_ = 0;
  double diag_ = 1.0, off_ = 0.0;
  std::vector<double> cprime_, inv_;
};

namespace detail {

// rhs = u + dt b_N(u) + sigma_N(u) W / dx, then the implicit solve, in place.
inline void semi_implicit_update(std::span<double> u, const TruncatedCoefficient& c, std::span<const double> w,
                                 double dt, double dx, const ImplicitHeatOperator& op,
                                 std::vector<double>& bbuf, std::vector<double>& sbuf) {
  const std::size_t n = u.size();
  bbuf.resize(n);
  sbuf.resize(n);
  drift_row(c, u, bbuf);
  diffusion_row(c, u, sbuf);
  const double inv_dx = 1.0 / dx;
  for (std::size_t i = 0; i < n; ++i) u[i] = u[i] + dt * bbuf[i] + sbuf[i] * w[i] * inv_dx;
  op.solve(u);
}

}  // namespace detail

/// One semi-implicit step from m dt to (m+1) dt with the noise of step m.
/// Non-finite values propagate; nothing is thrown on overflow.
inline Field step(const Field& field, const TruncatedCoefficient& coeffs, const NoisePath& noise, std::size_t m) {
  const GridSpec& g = noise.grid();
  if (field.nx() != g.nx) throw DomainError("field and noise grids differ");
  if (std::abs(field.time - static_cast<double>(m) * g.dt) > 1e-9 * std::max(1.0, field.time)) {
    throw ContractError("field time does not match the step index");
  }
  Field out = field;
  const auto w = noise.sample_increments(m);
  const ImplicitHeatOperator op(g.nx, g.dt);
  std::vector<double> b, s;
  detail::semi_implicit_update(out.values, coeffs, w, g.dt, g.dx(), op, b, s);
  out.time = static_cast<double>(m + 1) * g.dt;
  return out;
}

inline Field step(const Field& field, const CoefficientSpec& coeffs, const NoisePath& noise, std::size_t m) {
  return step(field, TruncatedCoefficient{coeffs}, noise, m);
}

// --- localized simulation ---

struct SeriesRow {
  double t = 0.0;
  double sup_norm = 0.0;
  double l2_norm = 0.0;
  double h1_norm = 0.0;
  double bg_mode = 0.0;
};

struct BlowupRecord {
  bool blew_up = false;
  double tau_hat = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, double>> threshold_ladder;  // (N, tau_hat_N); inf if never crossed
  double terminal_sup = 0.0;
};

struct PathResult {
  BlowupRecord record;
  std::vector<SeriesRow> series;
  std::optional<Field> final_field;
  std::vector<Field> fields;  // every out_stride steps when requested
  std::string config_hash;
  std::uint64_t seed = 0;
};

struct SolverOptions {
  std::vector<double> ladder{1e2, 1e3, 1e4, 1e5};
  double blowup_threshold = 1e6;
  std::size_t out_stride = 10;
  bool adaptive_dt = true;  // halve dt once per decade of sup above halving_start
  double halving_start = 1e3;
  unsigned max_halvings = 10;
  bool store_fields = false;
  double store_from = 0.0;  // fields before this time are not kept
  StabilityGate gate = StabilityGate::SemiImplicit;
};

namespace detail {

inline SeriesRow make_row(double t, std::span<const double> u) {
  const Norms n = norms(u);
  return {t, n.sup, n.l2, n.h1, bg_mode_functional(u)};
}

inline double crossing_time(double t0, double s0, double t1, double s1, double level) {
  if (!std::isfinite(s1) || s1 == s0) return t1;
  const double w = std::clamp((level - s0) / (s1 - s0), 0.0, 1.0);
  return t0 + w * (t1 - t0);
}

inline unsigned halvings_for(double sup, const SolverOptions& o) {
  if (!o.adaptive_dt || !(sup > o.halving_start)) return 0;
  if (!std::isfinite(sup)) return o.max_halvings;
  const double decades = std::floor(std::log10(sup / o.halving_start)) + 1.0;
  return static_cast<unsigned>(std::min<double>(decades, o.max_halvings));
}

}  // namespace detail

inline void validate_ladder(const std::vector<double>& ladder) {
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    if (!(ladder[i] >= 1.0) || !std::isfinite(ladder[i])) throw ConfigError("ladder levels must be finite and >= 1");
    if (i > 0 && !(ladder[i] > ladder[i - 1])) throw ConfigError("ladder must be strictly increasing");
  }
}

/// Runs the truncated dynamics at the smallest ladder level not yet exceeded,
/// promoting (without restarting) when sup|u| passes a level; beyond the top
/// level the coefficients are untruncated. Blowup: sup >= threshold or a
/// non-finite value.
inline PathResult simulate_localized(const Field& u0, const CoefficientSpec& coeffs, const NoisePath& noise,
                                     const SolverOptions& opt) {
  const GridSpec& g = noise.grid();
  g.validate(opt.gate);
  validate_ladder(opt.ladder);
  if (u0.nx() != g.nx) throw ConfigError("initial data has the wrong number of nodes");
  if (opt.out_stride == 0) throw ConfigError("out_stride must be >= 1");
  const double sup0 = sup_norm(u0.values);
  if (!opt.ladder.empty() && !(opt.ladder.front() > sup0)) {
    throw ConfigError("smallest ladder level must exceed sup|u0|");
  }
  if (!(opt.blowup_threshold > sup0)) throw ConfigError("blowup threshold must exceed sup|u0|");

  PathResult res;
  res.seed = noise.seed();
  for (double n : opt.ladder) res.record.threshold_ladder.emplace_back(n, std::numeric_limits<double>::infinity());

  std::vector<double> u = u0.values;
  const double dx = g.dx();
  const std::size_t steps = g.steps();
  std::size_t level = 0;
  auto current = [&]() {
    return TruncatedCoefficient{coeffs, level < opt.ladder.size() ? opt.ladder[level]
                                                                  : std::numeric_limits<double>::infinity()};
  };
  TruncatedCoefficient active = current();

  std::vector<ImplicitHeatOperator> ops;  // one per halving depth
  auto op_for = [&](unsigned h) -> const ImplicitHeatOperator& {
    while (ops.size() <= h) ops.emplace_back(g.nx, g.dt / static_cast<double>(std::size_t{1} << ops.size()));
    return ops[h];
  };

  res.series.push_back(detail::make_row(0.0, u));
  if (opt.store_fields && opt.store_from <= 0.0) res.fields.push_back(Field{u, 0.0});

  std::vector<double> w(g.nx), sub, bbuf, sbuf;
  double t = 0.0, s_prev = sup0;
  bool done = false;
  for (std::size_t m = 0; m < steps && !done; ++m) {
    const unsigned h = detail::halvings_for(s_prev, opt);
    const std::size_t parts = std::size_t{1} << h;
    const double dt_sub = g.dt / static_cast<double>(parts);
    if (h == 0) {
      noise.increments(m, w);
    } else {
      noise.bridge_increments(m, h, sub);
    }
    const ImplicitHeatOperator& op = op_for(h);
    for (std::size_t j = 0; j < parts; ++j) {
      const std::span<const double> wj =
          h == 0 ? std::span<const double>(w) : std::span<const double>(sub.data() + j * g.nx, g.nx);
      detail::semi_implicit_update(u, active, wj, dt_sub, dx, op, bbuf, sbuf);
      const double t_new = j + 1 == parts ? static_cast<double>(m + 1) * g.dt : t + dt_sub;
      const double s = sup_norm(u);
      while (level < opt.ladder.size() && !(s <= opt.ladder[level])) {
        res.record.threshold_ladder[level].second = detail::crossing_time(t, s_prev, t_new, s, opt.ladder[level]);
        ++level;
        active = current();
      }
      if (!(s < opt.blowup_threshold)) {
        res.record.blew_up = true;
        res.record.tau_hat = detail::crossing_time(t, s_prev, t_new, s, opt.blowup_threshold);
        res.record.terminal_sup = s;
        if (std::isfinite(s)) res.series.push_back(detail::make_row(t_new, u));
        done = true;
        break;
      }
      t = t_new;
      s_prev = s;
    }
    if (done) break;
    if ((m + 1) % opt.out_stride == 0 || m + 1 == steps) {
      res.series.push_back(detail::make_row(t, u));
      if (opt.store_fields && t >= opt.store_from - 1e-12) res.fields.push_back(Field{u, t});
    }
  }
  if (!res.record.blew_up) {
    res.record.terminal_sup = s_prev;
    res.final_field = Field{u, t};
  }
  return res;
}

/// First crossing of sup_norm >= threshold in a series, interpolated linearly
/// between rows; ladder crossings the same way.
inline BlowupRecord detect_blowup(const std::vector<SeriesRow>& series, double threshold,
                                  const std::vector<double>& ladder = {}) {
  if (series.empty()) throw DomainError("detect_blowup needs a nonempty series");
  BlowupRecord r;
  auto first_crossing = [&](double level) {
    if (!(series.front().sup_norm < level)) return series.front().t;
    for (std::size_t i = 1; i < series.size(); ++i) {
      if (!(series[i].sup_norm < level)) {
        return detail::crossing_time(series[i - 1].t, series[i - 1].sup_norm, series[i].t, series[i].sup_norm,
                                     level);
      }
    }
    return std::numeric_limits<double>::infinity();
  };
  for (double n : ladder) r.threshold_ladder.emplace_back(n, first_crossing(n));
  r.tau_hat = first_crossing(threshold);
  r.blew_up = std::isfinite(r.tau_hat);
  r.terminal_sup = series.back().sup_norm;
  return r;
}

/// Ladder crossings strictly increasing in N among those crossed (equal times
/// allowed only when several levels are passed in a single step).
inline bool ladder_monotone(const BlowupRecord& r) {
  for (std::size_t i = 1; i < r.threshold_ladder.size(); ++i) {
    if (r.threshold_ladder[i].second < r.threshold_ladder[i - 1].second) return false;
  }
  return true;
}

// --- Picard reference solver ---

/// exp((dt/2) Delta) on the sine interpolant of interior values: modes
/// k = 1..nx decay by exp(-k^2 pi^2 dt / 2). Stored as a dense nx x nx matrix.
class SineSemigroup {
 public:
  SineSemigroup(std::size_t nx, double dt) : nx_(nx), p_(nx * nx, 0.0) {
    const double n1 = static_cast<double>(nx + 1);
    std::vector<double> q(nx * nx);
    for (std::size_t i = 0; i < nx; ++i) {
      for (std::size_t k = 0; k < nx; ++k) {
        q[i * nx + k] = std::sqrt(2.0 / n1) * std::sin(std::numbers::pi * double(i + 1) * double(k + 1) / n1);
      }
    }
    std::vector<double> lam(nx);
    for (std::size_t k = 0; k < nx; ++k) {
      const double kk = static_cast<double>(k + 1);
      lam[k] = std::exp(-kk * kk * std::numbers::pi * std::numbers::pi * dt / 2.0);
    }
    for (std::size_t i = 0; i < nx; ++i) {
      for (std::size_t j = 0; j < nx; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < nx; ++k) s += q[i * nx + k] * lam[k] * q[j * nx + k];
        p_[i * nx + j] = s;
      }
    }
  }

  void apply(std::span<const double> in, std::span<double> out) const {
    for (std::size_t i = 0; i < nx_; ++i) {
      double s = 0.0;
      const double* row = p_.data() + i * nx_;
      for (std::size_t j = 0; j < nx_; ++j) s += row[j] * in[j];
      out[i] = s;
    }
  }

 private:
  std::size_t nx_;
  std::vector<double> p_;
};

struct PicardResult {
  Field field;
  std::size_t iterations = 0;
  std::vector<double> gaps;  // sup distance between successive trajectories
};

/// Fixed point of the discrete mild map
///   v^{m+1} = S (v^m + dt b(u^m) + sigma(u^m) W_m / dx),  v^0 = u0,
/// iterated over the whole trajectory from u_0 = (S^m u0)_m. Returns u_n with
/// n the first iteration whose gap to u_{n-1} is below tol.
inline PicardResult picard_solve(const Field& u0, const TruncatedCoefficient& trunc, const NoisePath& noise, double t,
                                 double tol, std::size_t max_iters = 200) {
  const GridSpec& g = noise.grid();
  if (u0.nx() != g.nx) throw DomainError("field and noise grids differ");
  if (!(t > 0.0) || t > g.t_end * (1.0 + 1e-12)) throw DomainError("picard horizon outside (0, t_end]");
  if (!std::isfinite(trunc.level)) throw ContractError("picard_solve needs truncated coefficients");
  const std::size_t steps = static_cast<std::size_t>(std::ceil(t / g.dt - 1e-9));
  const std::size_t nx = g.nx;
  const double dx = g.dx();
  const SineSemigroup s(nx, g.dt);

  std::vector<double> noise_rows(steps * nx);
  for (std::size_t m = 0; m < steps; ++m) noise.increments(m, std::span<double>(noise_rows.data() + m * nx, nx));

  // trajectories hold rows 0..steps
  std::vector<double> cur((steps + 1) * nx), next((steps + 1) * nx);
  std::copy(u0.values.begin(), u0.values.end(), cur.begin());
  for (std::size_t m = 0; m < steps; ++m) {
    s.apply(std::span<const double>(cur.data() + m * nx, nx), std::span<double>(cur.data() + (m + 1) * nx, nx));
  }

  PicardResult res;
  std::vector<double> b(nx), sg(nx), tmp(nx);
  for (std::size_t it = 1; it <= max_iters; ++it) {
    std::copy(u0.values.begin(), u0.values.end(), next.begin());
    for (std::size_t m = 0; m < steps; ++m) {
      const std::span<const double> um(cur.data() + m * nx, nx);
      drift_row(trunc, um, b);
      diffusion_row(trunc, um, sg);
      const double* v = next.data() + m * nx;
      const double* w = noise_rows.data() + m * nx;
      for (std::size_t i = 0; i < nx; ++i) tmp[i] = v[i] + g.dt * b[i] + sg[i] * w[i] / dx;
      s.apply(tmp, std::span<double>(next.data() + (m + 1) * nx, nx));
    }
    double gap = 0.0;
    for (std::size_t k = 0; k < next.size(); ++k) gap = std::max(gap, std::abs(next[k] - cur[k]));
    if (!std::isfinite(gap)) gap = std::numeric_limits<double>::infinity();
    res.gaps.push_back(gap);
    cur.swap(next);
    if (gap < tol) {
      res.iterations = it;
      res.field = Field{std::vector<double>(cur.end() - static_cast<std::ptrdiff_t>(nx), cur.end()),
                        static_cast<double>(steps) * g.dt};
      return res;
    }
  }
  throw IterationDiverged("picard iteration did not contract within max_iters", res.gaps);
}

}  // namespace spdelab
