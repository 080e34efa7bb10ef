#include "homoscale/frozen.hpp"
#include "homoscale/presets.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace homoscale;
using nlohmann::json;

namespace {

MultiscaleSystem gaussian_scalar_with_H(std::function<double(double)> H) {
  MultiscaleSystem s = test::scalar_fast([](double x) { return -x; }, std::move(H));
  s.A = CoefficientField::constant(Mat::Identity(1, 1));
  s.A.grad_y = [](const double*, const double*, double* o) { o[0] = 0.0; };
  s.flags.linear_fast = true;
  finalize_system(s);
  return s;
}

}  // namespace

TEST(FrozenEquilibrium, UnitFrictionGivesStandardGaussian) {
  const MultiscaleSystem s = make_preset("langevin-scalar", {{"dim", 2}, {"hbar1", 0.0}});
  const FrozenEquilibrium eq = frozen_equilibrium(s, Vec::Zero(2));
  EXPECT_EQ(eq.kind, FrozenEquilibrium::Kind::Gaussian);
  EXPECT_LT((eq.cov - Mat::Identity(2, 2)).norm(), 1e-13);
}

TEST(FrozenEquilibrium, ScalarFrictionTwoHalvesCovariance) {
  const MultiscaleSystem s = make_preset("langevin-scalar", {{"hbar0", 2.0}, {"hbar1", 0.0}});
  const FrozenEquilibrium eq = frozen_equilibrium(s, Vec::Constant(1, 0.4));
  EXPECT_NEAR(eq.cov(0, 0), 0.5, 1e-14);
}

TEST(FrozenEquilibrium, NonlinearDriftMatchesDensityQuadrature) {
  const MultiscaleSystem s = test::scalar_fast([](double x) { return -x * x * x - x; });
  const FrozenEquilibrium eq = frozen_equilibrium(s, Vec::Zero(1), 4000, 20.0, 3);
  EXPECT_EQ(eq.kind, FrozenEquilibrium::Kind::Empirical);
  // generator x'' + b x' has density exp(-x^4/4 - x^2/2)
  auto rho = [](double x) { return std::exp(-0.25 * x * x * x * x - 0.5 * x * x); };
  const double Z = test::simpson(rho, -8, 8);
  const double m2 = test::simpson([&](double x) { return x * x * rho(x); }, -8, 8) / Z;
  const Estimate e = eq.expect([](const double* x) { return x[0] * x[0]; });
  EXPECT_GT(e.stderr_, 0.0);
  EXPECT_NEAR(e.mean, m2, 3.5 * e.stderr_);
}

TEST(Centering, LangevinVelocityHasZeroMean) {
  const MultiscaleSystem s = make_preset("langevin-scalar");
  const Vec y = Vec::Constant(1, 0.8);
  const Estimate c = centering_residual(s, y, frozen_equilibrium(s, y));
  EXPECT_LT(c.mean, 1e-12);
}

TEST(Centering, ShiftedMeanAndOddMoment) {
  const MultiscaleSystem shifted = gaussian_scalar_with_H([](double x) { return x - 1.0; });
  const FrozenEquilibrium eq = frozen_equilibrium(shifted, Vec::Zero(1));
  ASSERT_EQ(eq.kind, FrozenEquilibrium::Kind::Gaussian);
  EXPECT_NEAR(centering_residual(shifted, Vec::Zero(1), eq).mean, 1.0, 1e-12);
  const MultiscaleSystem cubic = gaussian_scalar_with_H([](double x) { return x * x * x; });
  EXPECT_LT(centering_residual(cubic, Vec::Zero(1), frozen_equilibrium(cubic, Vec::Zero(1))).mean, 1e-12);
}

TEST(Mixing, OuRateRecovered) {
  const double kappa = 2.0;
  const MultiscaleSystem s = make_preset("langevin-scalar", {{"hbar0", kappa}, {"hbar1", 0.0}});
  std::vector<double> lags;
  for (int i = 1; i <= 12; ++i) lags.push_back(0.1 * i);
  const MixingProfile m = estimate_mixing(s, Vec::Zero(1), {[](const double* x) { return x[0]; }}, lags, 4000, 5);
  ASSERT_EQ(m.model, "exponential");
  EXPECT_GE(m.rate, 0.7 * kappa);
  EXPECT_LE(m.rate, 1.3 * kappa);
}

TEST(Mixing, ConstantBankUnresolved) {
  const MultiscaleSystem s = make_preset("averaging-ou");
  const MixingProfile m =
      estimate_mixing(s, Vec::Zero(1), {[](const double*) { return 3.0; }}, {0.1, 0.5, 1.0}, 200, 5);
  EXPECT_FALSE(m.resolved());
  for (double v : m.decay) EXPECT_EQ(v, 0.0);
}

TEST(MomentScan, ZeroDynamicsConstantTable) {
  const MultiscaleSystem s = test::zero_system(1, 1);
  Vec z0(2);
  z0 << 1.0, 2.0;
  const MomentTable t = moment_scan(s, {0.5, 0.1}, {0.0, 1.0, 2.0}, 2.0, z0, 10, 1);
  for (double v : t.moment) EXPECT_NEAR(v, 6.0, 1e-12);
}

TEST(MomentScan, StationaryOuTableBounded) {
  const MultiscaleSystem s = make_preset("averaging-ou");
  std::vector<double> ts;
  for (int i = 0; i <= 10; ++i) ts.push_back(5.0 * i);
  const MomentTable t = moment_scan(s, {0.5, 0.1}, ts, 4.0, Vec::Ones(2), 4000, 2);
  // stationary law of the joint OU pair is Gaussian; 1 + (tr S)^2 + 2 tr S^2
  const double stat[2] = {24.000000000000014, 10.965983727085582};
  for (int e = 0; e < 2; ++e) {
    const std::size_t i = static_cast<std::size_t>(e) * ts.size() + ts.size() - 1;
    EXPECT_NEAR(t.moment[i], stat[e], 5.0 * t.stderr_[i]);
  }
  EXPECT_LE(t.max, 30.0);
  EXPECT_GE(t.min, 1.0);
}
