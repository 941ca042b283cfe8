#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "spdelab/heat_kernel.hpp"
#include "spdelab/quadrature.hpp"
#include "spdelab/solver.hpp"

using namespace spdelab;

namespace {

constexpr double pi = std::numbers::pi;

PathResult run(const CoefficientSpec& c, const GridSpec& g, std::uint64_t seed, double amp,
               std::vector<double> ladder, std::size_t stride = 10, bool fields = false) {
  SolverOptions o;
  o.ladder = std::move(ladder);
  o.out_stride = stride;
  o.store_fields = fields;
  const Field u0 = Field::sample(g.nx, [amp](double x) { return amp * std::sin(pi * x); });
  return simulate_localized(u0, c, NoisePath(seed, g), o);
}

}  // namespace

TEST(Thomas, SolvesTridiagonalSystem) {
  const ImplicitHeatOperator op(17, 0.01);
  std::vector<double> x(17);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::cos(0.3 * i) + 0.1 * i;
  auto d = op.apply(x);
  op.solve(d);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(d[i], x[i], 1e-13);
}

TEST(Step, EigenfunctionDecay) {
  const GridSpec g{255, 1e-4, 0.5};
  const CoefficientSpec c{LogCritical{0.0, 0.0}, Constant{0.0}};
  NoisePath noise(1, g);
  Field u = Field::sample(g.nx, [](double x) { return std::sin(pi * x); });
  for (std::size_t m = 0; m < g.steps(); ++m) u = step(u, c, noise, m);
  EXPECT_NEAR(u.time, 0.5, 1e-12);
  const double decay = std::exp(-pi * pi * 0.5 / 2.0);
  for (std::size_t i = 0; i < g.nx; i += 16) {
    const double exact = decay * std::sin(pi * g.x(i));
    EXPECT_LT(std::abs(u.values[i] - exact), 1e-2 * std::abs(exact));
  }
  const auto closed = u.closed();
  EXPECT_EQ(closed.front(), 0.0);
  EXPECT_EQ(closed.back(), 0.0);
}

TEST(Step, ConstantDriftMatchesKernelMassIntegral) {
  const double cst = 2.0, t_end = 0.2;
  const GridSpec g{127, 1e-4, t_end};
  const CoefficientSpec c{LogCritical{cst, 0.0}, Constant{0.0}};
  NoisePath noise(1, g);
  Field u{std::vector<double>(g.nx, 0.0), 0.0};
  for (std::size_t m = 0; m < g.steps(); ++m) u = step(u, c, noise, m);
  HeatKernel k;
  for (std::size_t i : {15u, 63u, 100u}) {
    const double x = g.x(i);
    const auto q = quad::adaptive([&](double s) { return s > 0 ? k.survival(s, x) : 1.0; }, 0.0, t_end, 1e-12);
    EXPECT_NEAR(u.values[i], cst * q.value, 2e-3 * cst * q.value) << x;
  }
}

TEST(Step, ZeroIsFixedPoint) {
  const GridSpec g{31, 1e-3, 0.1};
  const CoefficientSpec c{LogCritical{0.0, 1.0}, Constant{0.0}};
  NoisePath noise(5, g);
  Field u{std::vector<double>(g.nx, 0.0), 0.0};
  for (std::size_t m = 0; m < g.steps(); ++m) u = step(u, c, noise, m);
  for (double v : u.values) EXPECT_EQ(v, 0.0);
}

TEST(Step, RejectsMismatchedTime) {
  const GridSpec g{31, 1e-3, 0.1};
  Field u{std::vector<double>(g.nx, 0.0), 0.5};
  EXPECT_THROW(step(u, CoefficientSpec{}, NoisePath(1, g), 0), ContractError);
}

TEST(Localized, DeterministicQuadraticBlowup) {
  const GridSpec g{127, 1e-4, 0.5};
  const CoefficientSpec c{PowerBG{2.0, 1.0}, Constant{0.0}};
  const auto a = run(c, g, 1, 50.0, {100.0, 1000.0});
  const auto b = run(c, g, 1, 100.0, {200.0, 1000.0});
  ASSERT_TRUE(a.record.blew_up);
  ASSERT_TRUE(b.record.blew_up);
  EXPECT_LT(a.record.tau_hat, 0.2);
  EXPECT_LT(b.record.tau_hat, a.record.tau_hat);
  EXPECT_GE(a.record.terminal_sup, 1e6);
  EXPECT_FALSE(a.final_field.has_value());
  // grid-stability of tau_hat against a 4x finer time step
  const auto fine = run(c, GridSpec{127, 2.5e-5, 0.5}, 1, 50.0, {100.0, 1000.0});
  EXPECT_NEAR(a.record.tau_hat, fine.record.tau_hat, 0.02 * fine.record.tau_hat);
  EXPECT_TRUE(ladder_monotone(a.record));
}

TEST(Localized, LogCriticalStaysBelowDoubleExponential) {
  const GridSpec g{127, 1e-3, 5.0};
  const CoefficientSpec c{LogCritical{0.0, 1.0}, Constant{0.0}};
  const auto r = run(c, g, 1, 50.0, {100.0, 1e3, 1e4, 1e5}, 50);
  EXPECT_FALSE(r.record.blew_up);
  ASSERT_TRUE(r.final_field.has_value());
  for (const auto& row : r.series) {
    const double bound = std::exp(std::exp(row.t) * std::log(50.0));
    EXPECT_TRUE(std::isfinite(row.sup_norm));
    EXPECT_LE(row.sup_norm, bound * (1.0 + 1e-9)) << row.t;
  }
}

TEST(Localized, LadderInvarianceBitwise) {
  const GridSpec g{63, 1e-3, 2.0};
  const CoefficientSpec c{PowerBG{2.0, 1.0}, Constant{1.0}};
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto a = run(c, g, seed, 5.0, {10.0, 20.0, 40.0}, 1);
    const auto b = run(c, g, seed, 5.0, {40.0}, 1);
    const double tau40 = b.record.threshold_ladder[0].second;
    EXPECT_EQ(a.record.threshold_ladder[2].second, tau40);
    std::size_t compared = 0;
    for (std::size_t i = 0; i < std::min(a.series.size(), b.series.size()); ++i) {
      if (a.series[i].t > tau40) break;
      EXPECT_EQ(a.series[i].sup_norm, b.series[i].sup_norm);
      EXPECT_EQ(a.series[i].bg_mode, b.series[i].bg_mode);
      ++compared;
    }
    EXPECT_GT(compared, 10u);
    EXPECT_TRUE(ladder_monotone(a.record));
  }
}

TEST(Localized, ComparisonSandwich) {
  const GridSpec g{63, 0.5 / (64.0 * 64.0), 0.3};
  const double th1 = 0.5, th2 = 1.0;
  Custom mid;
  for (int i = -400; i <= 400; ++i) {
    const double z = 0.25 * i;
    mid.z.push_back(z);
    mid.values.push_back(th1 + 0.5 * th2 * std::abs(z) * log_plus(std::abs(z)));
  }
  const CoefficientSpec lo{LogCritical{th1, -th2}, Constant{1.0}};
  const CoefficientSpec md{mid, Constant{1.0}};
  const CoefficientSpec hi{LogCritical{th1, th2}, Constant{1.0}};
  for (std::uint64_t seed : {11u, 12u}) {
    const auto a = run(lo, g, seed, 3.0, {1e3}, 1, true);
    const auto b = run(md, g, seed, 3.0, {1e3}, 1, true);
    const auto c = run(hi, g, seed, 3.0, {1e3}, 1, true);
    ASSERT_EQ(a.fields.size(), c.fields.size());
    for (std::size_t k = 0; k < a.fields.size(); ++k) {
      for (std::size_t i = 0; i < g.nx; ++i) {
        ASSERT_LE(a.fields[k].values[i], b.fields[k].values[i] + 1e-9);
        ASSERT_LE(b.fields[k].values[i], c.fields[k].values[i] + 1e-9);
      }
    }
  }
}

TEST(Localized, RejectsBadLadders) {
  const GridSpec g{15, 1e-3, 0.1};
  EXPECT_THROW(run(CoefficientSpec{}, g, 1, 1.0, {10.0, 5.0}), ConfigError);
  EXPECT_THROW(run(CoefficientSpec{}, g, 1, 20.0, {10.0}), ConfigError);
}

TEST(Localized, SeriesTimesIncreaseAndDeterministic) {
  const GridSpec g{31, 1e-3, 1.0};
  const CoefficientSpec c{SuperLog{0.5, 1.0, 0.0}, Constant{1.0}};
  const auto a = run(c, g, 9, 2.0, {100.0}, 7);
  const auto b = run(c, g, 9, 2.0, {100.0}, 7);
  for (std::size_t i = 1; i < a.series.size(); ++i) EXPECT_GT(a.series[i].t, a.series[i - 1].t);
  ASSERT_EQ(a.series.size(), b.series.size());
  for (std::size_t i = 0; i < a.series.size(); ++i) EXPECT_EQ(a.series[i].l2_norm, b.series[i].l2_norm);
}

TEST(DetectBlowup, CrossingsAndInterpolation) {
  std::vector<SeriesRow> s;
  for (int i = 0; i <= 10; ++i) s.push_back({0.1 * i, std::pow(10.0, i), 0, 0, 0});
  const auto r = detect_blowup(s, 1e6, {10.0, 20.0});
  EXPECT_TRUE(r.blew_up);
  EXPECT_NEAR(r.tau_hat, 0.6, 1e-12);
  EXPECT_LE(r.threshold_ladder[0].second, r.threshold_ladder[1].second);
  EXPECT_GT(r.threshold_ladder[1].second, 0.1);
  EXPECT_LT(r.threshold_ladder[1].second, 0.2);
  std::vector<SeriesRow> flat{{0.0, 1.0}, {1.0, 2.0}};
  const auto q = detect_blowup(flat, 1e6);
  EXPECT_FALSE(q.blew_up);
  EXPECT_TRUE(std::isinf(q.tau_hat));
  EXPECT_THROW(detect_blowup({}, 1.0), DomainError);
}

TEST(Picard, NoCoefficientsGivesSemigroup) {
  const GridSpec g{31, 1e-3, 0.1};
  const CoefficientSpec c{LogCritical{0.0, 0.0}, Constant{0.0}};
  const Field u0 = Field::sample(g.nx, [](double x) { return std::sin(pi * x); });
  const auto r = picard_solve(u0, truncate(c, 10.0), NoisePath(1, g), 0.1, 1e-12);
  EXPECT_EQ(r.iterations, 1u);
  for (std::size_t i = 0; i < g.nx; ++i) {
    EXPECT_NEAR(r.field.values[i], std::exp(-pi * pi * 0.05) * std::sin(pi * g.x(i)), 1e-12);
  }
}

TEST(Picard, GeometricContraction) {
  const GridSpec g{63, 1e-4, 0.05};
  const CoefficientSpec c{LogCritical{0.0, 1.0}, Constant{1.0}};
  const Field u0 = Field::sample(g.nx, [](double x) { return 2.0 * std::sin(pi * x); });
  const auto r = picard_solve(u0, truncate(c, 10.0), NoisePath(21, g), 0.05, 1e-11);
  ASSERT_GE(r.gaps.size(), 3u);
  double worst = 0.0;
  for (std::size_t n = 1; n < r.gaps.size() && r.gaps[n - 1] > 1e-13; ++n) {
    worst = std::max(worst, r.gaps[n] / r.gaps[n - 1]);
  }
  EXPECT_LT(worst, 1.0);
}

// Pathwise O(dt + dx^2) agreement needs sigma = 0: the two schemes damp the
// highest noise modes differently (1/(1 + dt lambda) against exp(-dt lambda)).
TEST(Picard, AgreesWithStepSolver) {
  const GridSpec g{63, 1e-4, 0.05};
  const CoefficientSpec c{LogCritical{0.5, 1.0}, Constant{0.0}};
  const auto trunc = truncate(c, 10.0);
  const Field u0 = Field::sample(g.nx, [](double x) { return 4.0 * x * (1.0 - x) + std::sin(3.0 * pi * x); });
  const NoisePath noise(21, g);
  const auto r = picard_solve(u0, trunc, noise, 0.05, 1e-12);
  Field u = u0;
  for (std::size_t m = 0; m < g.steps(); ++m) u = step(u, trunc, noise, m);
  const double scale = std::max(1.0, sup_norm(u.values));
  double diff = 0.0;
  for (std::size_t i = 0; i < g.nx; ++i) diff = std::max(diff, std::abs(u.values[i] - r.field.values[i]));
  EXPECT_LT(diff, 5.0 * (g.dt + g.dx() * g.dx()) * scale);
}

TEST(Picard, DivergenceCarriesGapHistory) {
  const GridSpec g{15, 1e-2, 1.0};
  const CoefficientSpec c{Cubic{1.0}, Constant{0.0}};
  const Field u0 = Field::sample(g.nx, [](double x) { return 5.0 * std::sin(pi * x); });
  try {
    picard_solve(u0, truncate(c, 1e3), NoisePath(1, g), 1.0, 1e-12, 5);
    FAIL() << "expected divergence";
  } catch (const IterationDiverged& e) {
    EXPECT_EQ(e.gaps().size(), 5u);
  }
}
