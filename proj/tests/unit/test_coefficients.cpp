#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "spdelab/coefficients.hpp"

using namespace spdelab;

TEST(Coefficients, LogCriticalValues) {
  const DriftFamily b = LogCritical{0.0, 1.0};
  EXPECT_DOUBLE_EQ(eval_drift(b, std::numbers::e), std::numbers::e);
  EXPECT_DOUBLE_EQ(eval_drift(b, 0.5), 0.5);  // log_+ = 1 below e
  EXPECT_DOUBLE_EQ(eval_drift(b, 100.0), 100.0 * std::log(100.0));
  EXPECT_DOUBLE_EQ(eval_drift(LogCritical{2.0, 0.0}, 123.0), 2.0);
  EXPECT_THROW(eval_drift(b, NAN), DomainError);
  EXPECT_THROW(eval_diffusion(Constant{1.0}, INFINITY), DomainError);
}

TEST(Coefficients, SuperLogFrozenValue) {
  const double z = std::exp(2.0) - 1.0;
  EXPECT_NEAR(eval_drift(SuperLog{1.0, 1.0, 0.0}, z), 29.556224395722601, 1e-12);
}

TEST(Coefficients, FamilyShapes) {
  EXPECT_DOUBLE_EQ(eval_drift(PowerBG{2.0, 1.5}, -3.0), 1.5 * 16.0);
  EXPECT_DOUBLE_EQ(eval_drift(Cubic{-1.0}, 2.0), -8.0);
  EXPECT_DOUBLE_EQ(eval_diffusion(Bounded{BoundedShape::SineShift, 2.0}, 0.0), 2.0);
  EXPECT_DOUBLE_EQ(eval_diffusion(Bounded{BoundedShape::Tanh, 1.0}, 0.0), 0.0);
  const Custom c{{-1.0, 0.0, 2.0}, {1.0, 0.0, 4.0}};
  EXPECT_DOUBLE_EQ(eval_drift(c, -5.0), 1.0);
  EXPECT_DOUBLE_EQ(eval_drift(c, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(eval_drift(c, 9.0), 4.0);
}

TEST(Coefficients, LogCriticalEven) {
  const DriftFamily b = LogCritical{0.7, 1.3};
  for (double z : {0.1, 1.0, 3.0, 50.0, 1e5}) EXPECT_EQ(eval_drift(b, -z), eval_drift(b, z));
}

TEST(Truncation, FrozenValueAndIdentityRegion) {
  const CoefficientSpec spec{LogCritical{0.0, 1.0}, Constant{1.0}};
  const auto t = truncate(spec, 10.0);
  EXPECT_NEAR(t.drift(25.0), 10.0 * std::log(10.0), 1e-12);
  EXPECT_NEAR(t.drift(-25.0), 10.0 * std::log(10.0), 1e-12);
  for (double z = -10.0; z <= 10.0; z += 0.37) EXPECT_EQ(t.drift(z), eval_drift(spec, z));
  EXPECT_EQ(t.drift(std::nextafter(10.0, 11.0)), t.drift(10.0));
  EXPECT_THROW(truncate(spec, 0.5), DomainError);
}

TEST(Truncation, NestedLevelsAgree) {
  const CoefficientSpec spec{PowerBG{2.0, 1.0}, SubQuarterLog{1.0}};
  const auto a = truncate(spec, 5.0), b = truncate(spec, 50.0);
  for (double z = -5.0; z <= 5.0; z += 0.01) {
    EXPECT_EQ(a.drift(z), b.drift(z));
    EXPECT_EQ(a.diffusion(z), b.diffusion(z));
  }
}

TEST(Truncation, RowMatchesScalar) {
  const CoefficientSpec spec{SuperLog{0.5, 1.0, 0.1}, Bounded{BoundedShape::Tanh, 1.0}};
  const auto t = truncate(spec, 20.0);
  std::vector<double> in{-30.0, -1.0, 0.0, 2.5, 19.0, 40.0}, out(in.size()), sig(in.size());
  drift_row(t, in, out);
  diffusion_row(t, in, sig);
  for (std::size_t i = 0; i < in.size(); ++i) {
    EXPECT_EQ(out[i], t.drift(in[i]));
    EXPECT_EQ(sig[i], t.diffusion(in[i]));
  }
}

TEST(Envelope, LogCriticalClosedForm) {
  const CoefficientSpec spec{LogCritical{-2.0, 1.0}, Constant{0.5}};
  const auto env = drift_envelope(truncate(spec, std::exp(3.0)));
  EXPECT_DOUBLE_EQ(env.c, 2.0);
  EXPECT_NEAR(env.L, 3.0, 1e-14);
}

TEST(Envelope, ConstantDiffusionIsDegenerate) {
  const CoefficientSpec spec{LogCritical{}, Constant{0.5}};
  const auto env = diffusion_envelope(truncate(spec, 10.0));
  EXPECT_EQ(env.c, 0.5);
  EXPECT_GT(env.L, 0.0);
  EXPECT_TRUE(env.degenerate);
}

TEST(Envelope, CubicBracketsMaxDerivative) {
  const CoefficientSpec spec{Cubic{1.0}, Constant{}};
  const auto env = drift_envelope(truncate(spec, 10.0));
  EXPECT_FALSE(env.inconclusive);
  EXPECT_GE(env.L, 300.0);
  EXPECT_LE(env.L, 1.2 * 300.0);
}

TEST(Envelope, UntruncatedSweepIsInconclusive) {
  const CoefficientSpec spec{PowerBG{}, Constant{}};
  EXPECT_TRUE(drift_envelope(TruncatedCoefficient{spec}).inconclusive);
  EXPECT_THROW(lipschitz_envelope(TruncatedCoefficient{spec}), DomainError);
}

namespace spdelab {
void PrintTo(const CoefficientSpec& c, std::ostream* os) { *os << to_string(c.drift) << " / " << to_string(c.diffusion); }
}  // namespace spdelab

class EnvelopeSoundness : public ::testing::TestWithParam<CoefficientSpec> {};

TEST_P(EnvelopeSoundness, QuasiRandomPoints) {
  const auto t = truncate(GetParam(), 1000.0);
  const auto env = lipschitz_envelope(t);
  // additive Weyl sequence over [-1e6, 1e6]
  const double golden = 0.6180339887498949;
  double u = 0.5;
  for (int i = 0; i < 1'000'000; ++i) {
    u += golden;
    u -= std::floor(u);
    const double z = (2.0 * u - 1.0) * 1e6;
    ASSERT_LE(std::abs(t.drift(z)), env.c_b + env.L_b * std::abs(z) + 1e-9) << z;
    ASSERT_LE(std::abs(t.diffusion(z)), env.c_sigma + env.L_sigma * std::abs(z) + 1e-9) << z;
  }
}

INSTANTIATE_TEST_SUITE_P(
    Families, EnvelopeSoundness,
    ::testing::Values(CoefficientSpec{LogCritical{1.0, 2.0}, Constant{1.0}},
                      CoefficientSpec{SuperLog{0.5, 1.0, 0.0}, Bounded{BoundedShape::SineShift, 1.0}},
                      CoefficientSpec{PowerBG{2.0, 1.0}, SubQuarterLog{1.0}},
                      CoefficientSpec{Cubic{-1.0}, Bounded{BoundedShape::Tanh, 2.0}},
                      CoefficientSpec{Custom{{-1.0, 0.0, 3.0}, {2.0, 0.0, -6.0}}, Constant{0.0}}),
    [](const ::testing::TestParamInfo<CoefficientSpec>& info) {
      return describe(info.param.drift).first + "_" + describe(info.param.diffusion).first;
    });

TEST(Coefficients, SubQuarterLogGrowthGate) {
  const DiffusionFamily s = SubQuarterLog{1.0};
  double prev = INFINITY;
  for (int j = 2; j <= 8; ++j) {
    const double z = std::pow(10.0, j);
    const double r = eval_diffusion(s, z) / (z * std::pow(std::log(z), 0.25));
    EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(Coefficients, MomentCondition) {
  EXPECT_TRUE(moment_condition_holds({0.0, 4.0, 0.0, 1.0}));
  EXPECT_FALSE(moment_condition_holds({0.0, 3.9, 0.0, 1.0}));
  CoefficientSpec spec{LogCritical{}, Constant{}, Envelope{0.0, 1.0, 0.0, 1.0}, true};
  EXPECT_THROW(validate(spec), ConfigError);
  spec.envelope->L_b = 4.0;
  EXPECT_NO_THROW(validate(spec));
}

TEST(Coefficients, SpecStringsRoundTrip) {
  for (const char* s : {"log_critical:theta1=0,theta2=1", "super_log:epsilon=0.25,scale=1,offset=0",
                        "power_bg:power=2,scale=1", "cubic:sign=-1", "custom:z=-1|0|1,values=1|0|1"}) {
    EXPECT_EQ(to_string(parse_drift(s)), s);
  }
  for (const char* s : {"constant:sigma0=1", "bounded:shape=tanh,amplitude=0.5", "sub_quarter_log:scale=2"}) {
    EXPECT_EQ(to_string(parse_diffusion(s)), s);
  }
  EXPECT_EQ(to_string(parse_drift("log_critical:theta2=0.1")), "log_critical:theta1=0,theta2=0.1");
  EXPECT_THROW(parse_drift("log_critical:theta3=1"), ConfigError);
  EXPECT_THROW(parse_drift("quartic"), ConfigError);
  EXPECT_THROW(parse_drift("custom:z=1|0,values=1|2"), ConfigError);
  const double x = 0.1 + 0.2;
  EXPECT_EQ(parse_double(format_double(x), "x"), x);
}
