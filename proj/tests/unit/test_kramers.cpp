#include "homoscale/kramers.hpp"
#include "homoscale/linalg.hpp"
#include "homoscale/presets.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace homoscale;

TEST(TraceIdentity, IdentityAndScalarFriction) {
  EXPECT_NEAR(solve_lyapunov(Mat::Identity(3, 3), Mat::Identity(3, 3)).trace(), 3.0, 1e-14);
  EXPECT_LT(trace_identity_check(Mat::Identity(3, 3), Mat::Identity(3, 3)), 1e-14);
  Mat s(2, 2);
  s << 1.0, 0.2, -0.4, 0.7;
  EXPECT_LT(trace_identity_check(3.0 * Mat::Identity(2, 2), s), 1e-14);
}

TEST(MakeLangevin, RejectsNonLangevin) {
  EXPECT_THROW(make_langevin(make_preset("averaging-ou")), Error);
}

TEST(MakeLangevin, ProbesConstants) {
  const LangevinSystem ls = make_langevin(make_preset("langevin-scalar", {{"hbar0", 1.0}, {"hbar1", 0.5}}));
  EXPECT_NEAR(ls.kappa0, 1.0, 0.05);
  EXPECT_TRUE(ls.has_h);
  EXPECT_LT(ls.h_consistency, 1e-6);
}

TEST(Thermo, QuiescentCurvesVanish) {
  const MultiscaleSystem s =
      make_preset("langevin-scalar", {{"sigma", 0.0}, {"stiffness", 0.0}, {"hbar1", 0.0}});
  const LangevinSystem ls = make_langevin(s);
  const std::vector<double> grid{0.0, 0.5, 1.0};
  const auto ens = sk_simulate(ls, 0.1, Vec::Zero(1), Vec::Zero(1), 1.0, 0.0, 8, 1, grid);
  const auto ref = sk_homogenized(ls, Vec::Zero(1), 1.0, 0.01, 8, 2, grid);
  for (const auto& c : {energy_curve(ens, ls, ref), entropy_production_curve(ens, ls, ref)})
    for (std::size_t i = 0; i < grid.size(); ++i) {
      EXPECT_EQ(c.value[i], 0.0);
      EXPECT_EQ(c.reference[i], 0.0);
    }
}

TEST(Thermo, UnitNoiseReferenceLevels) {
  const MultiscaleSystem s = make_preset("langevin-scalar", {{"dim", 2}, {"hbar1", 0.0}});
  const LangevinSystem ls = make_langevin(s);
  const std::vector<double> grid{0.0, 0.5, 1.0};
  const auto ens = sk_simulate(ls, 0.1, Vec::Zero(2), Vec::Zero(2), 1.0, 0.0, 500, 1, grid);
  const auto ref = sk_homogenized(ls, Vec::Zero(2), 1.0, 0.01, 500, 2, grid);
  const ThermoCurve e = entropy_production_curve(ens, ls, ref);
  const ThermoCurve en = energy_curve(ens, ls, ref);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_NEAR(e.reference[i], 2.0, 1e-14);
    // kinetic part is tr(I)/2 = 1, the rest is E U(Ybar) = E|Ybar|^2 / 2
    double u = 0;
    for (std::size_t p = 0; p < ref.n_paths; ++p) {
      const double* y = ref.state(p, i);
      u += 0.5 * (y[0] * y[0] + y[1] * y[1]);
    }
    EXPECT_NEAR(en.reference[i], 1.0 + u / ref.n_paths, 1e-12);
  }
}

TEST(SkSimulate, LocalEquilibriumCovariance) {
  const MultiscaleSystem s = make_preset("langevin-matrix");
  const LangevinSystem ls = make_langevin(s);
  const double eps = 0.05;
  const std::vector<double> grid{0.0, 0.1};
  Vec y0(2);
  y0 << 0.5, -0.5;
  const auto ens = sk_simulate(ls, eps, Vec::Zero(2), y0, 0.1, 0.0, 20000, 6, grid);
  const Mat Sigma = ls.Sigma(y0);
  Mat C = Mat::Zero(2, 2), C2 = Mat::Zero(2, 2);
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    const double* z = ens.state(p, 1);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        C(i, j) += z[i] * z[j];
        C2(i, j) += z[i] * z[j] * z[i] * z[j];
      }
  }
  const double n = static_cast<double>(ens.n_paths);
  C /= n;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double se = std::sqrt((C2(i, j) / n - C(i, j) * C(i, j)) / n);
      // the slow variable moves by O(eps) over the window, so Sigma(Y) shifts slightly
      EXPECT_NEAR(C(i, j), Sigma(i, j), 4.0 * se + 0.05 * std::abs(Sigma(i, j)));
    }
}

TEST(SkSimulate, UnitEpsMatchesGenericIntegrator) {
  const MultiscaleSystem s = make_preset("langevin-scalar");
  const LangevinSystem ls = make_langevin(s);
  const std::vector<double> grid{0.0, 0.5, 1.0};
  Vec v(1), y0(1);
  v << 0.5;
  y0 << 0.2;
  const auto a = sk_simulate(ls, 1.0, v, y0, 1.0, 0.01, 16, 4, grid);
  IntegrationOptions o;
  o.dt = 0.01;
  o.output_times = grid;
  Vec z0(2);
  z0 << 0.5, 0.2;
  const auto b = integrate_multiscale(s, 1.0, z0, 1.0, 16, 4, o);
  ASSERT_EQ(a.data.size(), b.data.size());
  for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_EQ(a.data[i], b.data[i]);
}
