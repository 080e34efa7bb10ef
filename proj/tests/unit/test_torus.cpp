#include "homoscale/torus.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace homoscale;

namespace {

const double kTwoPi = 2.0 * M_PI;

// a = a0 + a1 sin 2 pi x in d = 1
FourierField sine_field(double a0, double a1, int N = 1) {
  FourierField f = FourierField::constant(1, N, {a0});
  f.set(0, {1}, cplx(0.0, -0.5 * a1));
  f.set(0, {-1}, cplx(0.0, 0.5 * a1));
  return f;
}

}  // namespace

TEST(InvariantDensity, LaplacianIsLebesgue) {
  const FourierField a = FourierField::constant(2, 0, {1.0, 0.0, 0.0, 1.0});
  const FourierField b = FourierField::constant(2, 0, {0.0, 0.0});
  const FourierField mu = invariant_density_torus(a, b, 4);
  for (std::size_t i = 0; i < mu.n_modes(); ++i) {
    int k[2];
    mu.mode(i, k);
    EXPECT_NEAR(std::abs(mu.at(0, i)), (k[0] == 0 && k[1] == 0) ? 1.0 : 0.0, 1e-14);
  }
}

TEST(InvariantDensity, VariableDiffusivity) {
  const FourierField mu = invariant_density_torus(sine_field(2.0, 1.0), sine_field(0.0, 0.0), 32);
  const double c = std::sqrt(3.0);  // 1 / int 1/(2 + sin)
  for (double x : {0.0, 0.13, 0.5, 0.77}) EXPECT_NEAR(mu.eval(0, &x), c / (2.0 + std::sin(kTwoPi * x)), 1e-8);
}

TEST(InvariantDensity, SineDrift) {
  const double beta = 1.7, kap = beta / kTwoPi;
  const FourierField mu = invariant_density_torus(sine_field(1.0, 0.0), sine_field(0.0, beta), 24);
  const double Z = std::cyl_bessel_i(0.0, kap);
  for (double x : {0.0, 0.21, 0.5, 0.9})
    EXPECT_NEAR(mu.eval(0, &x), std::exp(-kap * std::cos(kTwoPi * x)) / Z, 1e-10);
}

TEST(CellProblem, ZeroForcing) {
  const FourierField a = sine_field(2.0, 0.5);
  const FourierField b = sine_field(0.0, 1.0);
  const FourierField mu = invariant_density_torus(a, b, 12);
  const FourierField phi = cell_problem_torus(a, b, FourierField(1, 12, 1), mu, 12);
  EXPECT_LT(phi.l2_norm(), 1e-15);
}

TEST(CellProblem, SineDriftClosedFormDerivative) {
  const double beta = 1.3, kap = beta / kTwoPi;
  const FourierField a = sine_field(1.0, 0.0), b = sine_field(0.0, beta);
  const int N = 24;
  const FourierField mu = invariant_density_torus(a, b, N);
  // rhs = b - bbar with bbar = 0 by symmetry of mu
  const FourierField phi = cell_problem_torus(a, b, b, mu, N);
  EXPECT_LE(cell_residual(a, b, phi, b), 1e-8);
  const FourierField dphi = phi.derivative(0);
  const double I0 = std::cyl_bessel_i(0.0, kap);
  for (double x : {0.0, 0.3, 0.5, 0.85})
    EXPECT_NEAR(dphi.eval(0, &x), std::exp(kap * std::cos(kTwoPi * x)) / I0 - 1.0, 1e-9);
  EXPECT_NEAR(pairing(phi, 0, mu, 0), 0.0, 1e-13);
}

TEST(CellProblem, UncenteredForcingRejected) {
  const FourierField a = sine_field(1.0, 0.0), b = sine_field(0.0, 0.0);
  const FourierField mu = invariant_density_torus(a, b, 4);
  EXPECT_THROW(cell_problem_torus(a, b, FourierField::constant(1, 4, {1.0}), mu, 4), PreconditionError);
}

TEST(AdjointPairing, VanishesForBandLimitedTests) {
  const TorusProblem p = torus_problem_preset("torus-2d-shear", {{"shear", 1.2}});
  const FourierField mu = invariant_density_torus(p.a, p.b, 12);
  FourierField psi(2, 3, 1);
  int k[2];
  for (std::size_t i = 0; i < psi.n_modes(); ++i) {
    psi.mode(i, k);
    psi.at(0, i) = cplx(1.0 / (1 + k[0] * k[0] + 2 * k[1] * k[1]), 0.0);
  }
  psi.symmetrize();
  EXPECT_LT(std::abs(adjoint_pairing(p.a, p.b, mu, psi)), 1e-10);
}

TEST(EffectiveTorus, PureDiffusionWithDrift) {
  const FourierField a = FourierField::constant(2, 0, {1.0, 0.0, 0.0, 1.0});
  const FourierField b = FourierField::constant(2, 0, {0.0, 0.0});
  const FourierField c = FourierField::constant(2, 0, {0.4, -0.2});
  const TorusHomogData h = effective_torus(a, b, c, 4);
  EXPECT_LT(h.bbar.norm(), 1e-15);
  EXPECT_NEAR(h.F(0), 0.4, 1e-14);
  EXPECT_NEAR(h.F(1), -0.2, 1e-14);
  EXPECT_LT((h.G - Mat::Identity(2, 2)).norm(), 1e-14);
}

TEST(EffectiveTorus, HarmonicMean) {
  const TorusHomogData h = effective_torus(sine_field(2.0, 1.0), sine_field(0.0, 0.0), sine_field(0.0, 0.0), 32);
  EXPECT_NEAR(h.G(0, 0), std::sqrt(3.0), 1e-8);
}

TEST(EffectiveTorus, SineDriftBesselOracle) {
  const double beta = 1.0, kap = beta / kTwoPi;
  const TorusHomogData h = effective_torus(sine_field(1.0, 0.0), sine_field(0.0, beta), sine_field(0.0, 0.0), 24);
  const double I0 = std::cyl_bessel_i(0.0, kap);
  EXPECT_NEAR(h.G(0, 0), 1.0 / (I0 * I0), 1e-10);
  EXPECT_NEAR(h.F(0), 0.0, 1e-14);
}

TEST(EffectiveTorus, ShearEnhancesAlongFlow) {
  const TorusProblem p = torus_problem_preset("torus-2d-shear", {{"shear", 1.0}});
  const TorusHomogData h = effective_torus(p.a, p.b, p.c, 16);
  const Mat D = h.G - Mat::Identity(2, 2);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Mat>(D).eigenvalues().minCoeff(), -1e-12);
  EXPECT_GT(D(0, 0), 1e-3);
  EXPECT_NEAR(D(1, 1), 0.0, 1e-10);
}

TEST(EffectiveTorus, CutoffRefinementStable) {
  for (const char* name : {"torus-1d", "torus-2d-shear"}) {
    const TorusProblem p = torus_problem_preset(name, nlohmann::json::object());
    const TorusHomogData a = effective_torus(p.a, p.b, p.c, 12), b = effective_torus(p.a, p.b, p.c, 24);
    EXPECT_LE((a.G - b.G).cwiseAbs().maxCoeff(), 1e-4) << name;
    EXPECT_LE((a.F - b.F).cwiseAbs().maxCoeff(), 1e-4) << name;
  }
}

TEST(TorusReference, LongTimeTendsToMean) {
  FourierField phi = FourierField::constant(1, 1, {0.3});
  phi.set(0, {1}, cplx(0.5, 0.0));
  phi.set(0, {-1}, cplx(0.5, 0.0));
  const Vec y0 = Vec::Constant(1, 0.1), F = Vec::Constant(1, 0.7);
  const Mat G = Mat::Constant(1, 1, 0.5);
  EXPECT_NEAR(torus_reference_expectation(phi, y0, F, G, 50.0), 0.3, 1e-12);
  // closed form at finite t: cos(2 pi m) exp(-4 pi^2 G t)
  const double t = 0.05, m = 0.1 + 0.7 * t;
  EXPECT_NEAR(torus_reference_expectation(phi, y0, F, G, t),
              0.3 + std::cos(kTwoPi * m) * std::exp(-kTwoPi * kTwoPi * 0.5 * t), 1e-14);
}

TEST(TorusSystem, MultiscaleFormFlags) {
  const MultiscaleSystem s = torus_preset_system("torus-1d", {{"a0", 1.0}, {"a1", 0.0}, {"beta", 1.0}, {"c0", 0.0}, {"N", 8}});
  EXPECT_TRUE(s.flags.periodic);
  EXPECT_TRUE(s.flags.nondegenerate_fast);
  EXPECT_EQ(s.d, 1);
  EXPECT_EQ(s.vartheta, 1);
}
