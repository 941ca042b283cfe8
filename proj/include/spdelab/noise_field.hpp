#pragma once

// Space-time white noise on a uniform grid, generated statelessly from
// (seed, step, cell) with a counter-based PRNG. Each interior node owns two
// half-cells of width dx/2; node increments are the sum of their halves, so a
// grid with nx_c = (nx_f - 1) / 2 nodes can be read off a finer one exactly.

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "spdelab/errors.hpp"

namespace spdelab {

/// Philox4x32-10 (Salmon et al., Random123).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter c, Key k) {
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        k[0] += kW0;
        k[1] += kW1;
      }
      const std::uint64_t p0 = std::uint64_t{kM0} * c[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * c[2];
      c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
    }
    return c;
  }

  static Key key_from_seed(std::uint64_t seed) {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

/// Four standard normals from one Philox block (Box-Muller on two pairs).
inline std::array<double, 4> normals_from_block(const Philox4x32::Counter& w) {
  constexpr double scale = 1.0 / 4294967296.0;
  std::array<double, 4> z{};
  for (int p = 0; p < 2; ++p) {
    const double u1 = (static_cast<double>(w[2 * p]) + 0.5) * scale;
    const double u2 = (static_cast<double>(w[2 * p + 1]) + 0.5) * scale;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    z[2 * p] = r * std::cos(a);
    z[2 * p + 1] = r * std::sin(a);
  }
  return z;
}

inline constexpr const char* kGeneratorTag = "philox4x32-10/box-muller/v1";

/// Seed of path i in a block starting at seed_base.
inline std::uint64_t split_seed(std::uint64_t seed_base, std::uint64_t i) { return seed_base + i; }

enum class StabilityGate { Explicit, SemiImplicit, None };

struct GridSpec {
  std::size_t nx = 63;  // interior nodes
  double dt = 1e-4;
  double t_end = 1.0;

  double dx() const { return 1.0 / static_cast<double>(nx + 1); }
  double x(std::size_t i) const { return static_cast<double>(i + 1) * dx(); }
  std::size_t steps() const {
    return static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
  }

  /// Explicit: dt <= dx^2. SemiImplicit: dt <= dx.
  void validate(StabilityGate gate = StabilityGate::SemiImplicit) const {
    if (nx == 0) throw ConfigError("grid needs nx >= 1");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("grid needs dt > 0");
    if (!(t_end > 0.0) || !std::isfinite(t_end)) throw ConfigError("grid needs t_end > 0");
    const double h = dx();
    const double slack = 1.0 + 1e-12;
    if (gate == StabilityGate::Explicit && dt > h * h * slack) {
      throw ConfigError("dt exceeds the dx^2 stability gate");
    }
    if (gate == StabilityGate::SemiImplicit && dt > h * slack) {
      throw ConfigError("dt exceeds the dx gate of the semi-implicit scheme");
    }
  }
};

class NoisePath {
 public:
  NoisePath(std::uint64_t seed, GridSpec grid) : seed_(seed), grid_(grid) {
    if (grid_.nx == 0) throw ConfigError("noise grid needs nx >= 1");
  }

  /// Coarse view of `fine`: nx_c = (nx_f - 1)/2 nodes, dt_c = factor * dt_f.
  /// Coarse cell increments are sums of fine half-cell increments.
  static NoisePath coarsened(const NoisePath& fine, std::size_t time_factor) {
    const GridSpec& f = fine.grid_;
    if (f.nx < 3 || f.nx % 2 == 0) throw ConfigError("coarsening needs an odd fine nx >= 3");
    if (time_factor == 0) throw ConfigError("time factor must be >= 1");
    NoisePath c(fine.seed_, GridSpec{(f.nx - 1) / 2, f.dt * static_cast<double>(time_factor), f.t_end});
    c.parent_ = std::make_shared<const NoisePath>(fine);
    c.time_factor_ = time_factor;
    return c;
  }

  std::uint64_t seed() const { return seed_; }
  const GridSpec& grid() const { return grid_; }
  std::string generator_tag() const { return kGeneratorTag; }
  bool is_coupled() const { return parent_ != nullptr; }

  /// Half-cell increments of step m: 2*nx values, entries 2i and 2i+1 belong to
  /// node i; each has variance dt*dx/2.
  void half_cells(std::size_t m, std::span<double> out) const {
    const std::size_t n = 2 * grid_.nx;
    if (!parent_) {
      const double s = std::sqrt(grid_.dt * grid_.dx() / 2.0);
      const auto key = Philox4x32::key_from_seed(seed_);
      for (std::size_t q = 0; 4 * q < n; ++q) {
        const auto z = normals_from_block(Philox4x32::block(counter(q, m, 0, 0), key));
        for (std::size_t r = 0; r < 4 && 4 * q + r < n; ++r) out[4 * q + r] = s * z[r];
      }
      return;
    }
    std::vector<double> fine(2 * parent_->grid_.nx);
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
    for (std::size_t k = 0; k < time_factor_; ++k) {
      parent_->half_cells(m * time_factor_ + k, fine);
      for (std::size_t i = 0; i < grid_.nx; ++i) {
        out[2 * i] += fine[4 * i + 1] + fine[4 * i + 2];
        out[2 * i + 1] += fine[4 * i + 3] + fine[4 * i + 4];
      }
    }
  }

  /// W(cell(m, i)) for i < nx, without a range check on m.
  void increments(std::size_t m, std::span<double> out) const {
    std::vector<double> h(2 * grid_.nx);
    half_cells(m, h);
    for (std::size_t i = 0; i < grid_.nx; ++i) out[i] = h[2 * i] + h[2 * i + 1];
  }

  std::vector<double> sample_increments(std::size_t m) const {
    if (m >= grid_.steps()) throw DomainError("noise step index out of range");
    std::vector<double> w(grid_.nx);
    increments(m, w);
    return w;
  }

  /// Brownian-bridge refinement of step m into 2^level substeps; out is
  /// row-major (2^level x nx) and each column sums to the step increment.
  /// Splits are keyed by (m, level, parent index) and nest across levels.
  void bridge_increments(std::size_t m, unsigned level, std::vector<double>& out) const {
    const std::size_t nx = grid_.nx;
    out.resize(nx);
    increments(m, out);
    const auto key = Philox4x32::key_from_seed(seed_ ^ 0x5bd1e9955bd1e995ull);
    double var = grid_.dt * grid_.dx();
    std::vector<double> next;
    for (unsigned l = 1; l <= level; ++l) {
      const std::size_t parents = std::size_t{1} << (l - 1);
      next.assign(2 * parents * nx, 0.0);
      const double s = std::sqrt(var / 4.0);
      for (std::size_t j = 0; j < parents; ++j) {
        for (std::size_t q = 0; 4 * q < nx; ++q) {
          const auto z = normals_from_block(Philox4x32::block(counter(q, m, j, 0x80000000u | l), key));
          for (std::size_t r = 0; r < 4 && 4 * q + r < nx; ++r) {
            const std::size_t i = 4 * q + r;
            const double total = out[j * nx + i];
            const double left = 0.5 * total + s * z[r];
            next[2 * j * nx + i] = left;
            next[(2 * j + 1) * nx + i] = total - left;
          }
        }
      }
      out.swap(next);
      var /= 2.0;
    }
  }

 private:
  // m, j and q are below 2^32 for any grid that fits in memory
  static Philox4x32::Counter counter(std::size_t q, std::size_t m, std::size_t j, std::uint32_t domain) {
    return {static_cast<std::uint32_t>(q), static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(j),
            domain};
  }

  std::uint64_t seed_;
  GridSpec grid_;
  std::shared_ptr<const NoisePath> parent_;
  std::size_t time_factor_ = 1;
};

/// W_t(phi) = sum over cells before t of phi(x_i) W(cell(m, i)); phi holds
/// values at the interior nodes.
inline double integrate_test_function(const NoisePath& path, std::span<const double> phi, double t) {
  const GridSpec& g = path.grid();
  if (phi.size() != g.nx) throw DomainError("test function must have nx values");
  if (t > g.t_end * (1.0 + 1e-12)) throw DomainError("t beyond the noise horizon");
  const std::size_t steps = static_cast<std::size_t>(std::floor(t / g.dt + 1e-9));
  std::vector<double> w(g.nx);
  double sum = 0.0;
  for (std::size_t m = 0; m < steps; ++m) {
    path.increments(m, w);
    for (std::size_t i = 0; i < g.nx; ++i) sum += phi[i] * w[i];
  }
  return sum;
}

}  // namespace spdelab
