#include "homoscale/effective.hpp"
#include "homoscale/presets.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace homoscale;

TEST(Gamma, ZeroCorrectorGivesZeroTerms) {
  const MultiscaleSystem s = make_preset("averaging-ou");
  const GammaTerms g = assemble_gamma(s, corrector_linear(s, Vec::Zero(1)));
  Vec x(1);
  x << 0.8;
  EXPECT_EQ(g.gamma1(x).norm(), 0.0);
  EXPECT_EQ(g.gamma2(x).norm(), 0.0);
}

TEST(Gamma, ConstantFrictionTerms) {
  const double h = 2.0, k = 1.5;
  const MultiscaleSystem s = make_preset("langevin-scalar", {{"hbar0", h}, {"hbar1", 0.0}, {"stiffness", k}});
  const Vec y = Vec::Constant(1, 0.9);
  const GammaTerms g = assemble_gamma(s, corrector_linear(s, y));
  Vec x(1);
  x << -0.7;
  EXPECT_NEAR(g.gamma1(x)(0), -k * y(0) / h, 1e-13);
  EXPECT_NEAR(g.gamma2(x)(0, 0), x(0) * x(0) / h, 1e-13);
}

TEST(Effective, AveragingOu) {
  const MultiscaleSystem s = make_preset("averaging-ou", {{"dim", 2}});
  Vec y(2);
  y << 0.4, -1.0;
  const FrozenEquilibrium eq = frozen_equilibrium(s, y);
  const EffectiveDynamics e = effective_coefficients(s, assemble_gamma(s, corrector_linear(s, y)), eq, y);
  EXPECT_LT((e.F + y).norm(), 1e-12);
  EXPECT_LT((e.G - Mat::Identity(2, 2)).norm(), 1e-12);
  EXPECT_EQ(e.provenance, "averaging");
}

TEST(Effective, ScalarSmoluchowskiKramersFormulas) {
  const double h0 = 1.0, h1 = 0.5, sig = 1.3, k = 0.8;
  const MultiscaleSystem s =
      make_preset("langevin-scalar", {{"hbar0", h0}, {"hbar1", h1}, {"sigma", sig}, {"stiffness", k}});
  for (double yv : {-1.5, 0.0, 0.4, 2.0}) {
    const Vec y = Vec::Constant(1, yv);
    const double sq = yv * yv;
    const double h = h0 + h1 * sq / (1 + sq);
    const double dh = h1 * 2 * yv / ((1 + sq) * (1 + sq));
    const EffectiveDynamics e = effective_sk(s, y);
    EXPECT_NEAR(e.G(0, 0), sig * sig / (h * h), 1e-14);
    EXPECT_NEAR(e.F(0), -k * yv / h - sig * sig * dh / (h * h * h), 1e-14);
  }
}

TEST(Effective, ConstantFrictionHasNoNoiseInducedDrift) {
  const MultiscaleSystem s = make_preset("langevin-scalar", {{"hbar1", 0.0}});
  EXPECT_LT(effective_sk(s, Vec::Constant(1, 1.2)).B.norm(), 1e-15);
}

TEST(Effective, GeneralRouteMatchesClosedForm) {
  for (const char* name : {"langevin-scalar", "langevin-matrix"}) {
    const MultiscaleSystem s = make_preset(name);
    for (double t : {-1.2, 0.0, 0.5, 1.7}) {
      const Vec y = Vec::Constant(s.vartheta, t) + Vec::LinSpaced(s.vartheta, 0.0, 0.3);
      const FrozenEquilibrium eq = frozen_equilibrium(s, y);
      const EffectiveDynamics g = effective_coefficients(s, assemble_gamma(s, corrector_linear(s, y)), eq, y);
      const EffectiveDynamics c = effective_sk(s, y);
      EXPECT_LT((g.F - c.F).cwiseAbs().maxCoeff(), 1e-6) << name << " y=" << t;
      EXPECT_LT((g.G - c.G).cwiseAbs().maxCoeff(), 1e-6) << name << " y=" << t;
    }
  }
}

TEST(FloorPsd, ClampsRoundoffAndRejectsIndefinite) {
  Mat G(2, 2);
  G << 1.0, 0.0, 0.0, -1e-9;
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Mat>(floor_psd(G)).eigenvalues().minCoeff(), 0.0);
  G(1, 1) = -0.1;
  EXPECT_THROW(floor_psd(G), NumericalError);
}

TEST(PsdIdentity, AveragingOuIsSquaredNorm) {
  const MultiscaleSystem s = make_preset("averaging-ou", {{"dim", 2}});
  Vec xi(2);
  xi << 0.6, -1.1;
  const Vec y = Vec::Zero(2);
  const PsdIdentity p = verify_psd_identity(s, corrector_linear(s, y), frozen_equilibrium(s, y), y, xi);
  EXPECT_NEAR(p.lhs, xi.squaredNorm(), 1e-12);
  EXPECT_NEAR(p.rhs, xi.squaredNorm(), 1e-12);
}

TEST(PsdIdentity, LangevinIsProjectedNoise) {
  const MultiscaleSystem s = make_preset("langevin-matrix");
  Vec y(2), xi(2);
  y << 0.5, -0.3;
  xi << 1.0, 2.0;
  const Corrector c = corrector_linear(s, y);
  const PsdIdentity p = verify_psd_identity(s, c, frozen_equilibrium(s, y), y, xi);
  Mat A = s.A(Vec::Zero(2), y), sig = s.sigma(Vec::Zero(2), y);
  const double expected = (sig.transpose() * A.inverse().transpose() * xi).squaredNorm();
  // lhs carries x through Gamma_2 and is a sample mean; rhs does not
  EXPECT_NEAR(p.lhs, expected, 5.0 * p.lhs_se);
  EXPECT_NEAR(p.rhs, expected, 1e-10);
  EXPECT_LE(std::abs(p.lhs - p.rhs), 5.0 * p.diff_se);
}

TEST(EffectiveModel, AutoRouteAndCacheConsistency) {
  auto sys = std::make_shared<MultiscaleSystem>(make_preset("langevin-matrix"));
  const EffectiveModel m(sys);
  EXPECT_EQ(m.route(), EffectiveModel::Route::SK);
  Vec y(2);
  y << 0.2, 0.1;
  const EffectiveDynamics a = m.at(y), b = m.at(y);
  EXPECT_EQ((a.F - b.F).norm(), 0.0);
  double sb[4];
  m.sigma_bar(y.data(), sb);
  Eigen::Map<const Eigen::Matrix<double, 2, 2, Eigen::RowMajor>> S(sb);
  EXPECT_LT((S * S.transpose() - a.G).norm(), 1e-10);
}
