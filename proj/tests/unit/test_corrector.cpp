#include "homoscale/corrector.hpp"
#include "homoscale/frozen.hpp"
#include "homoscale/presets.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace homoscale;

TEST(CorrectorLinear, UnitFrictionIsIdentity) {
  const MultiscaleSystem s = make_preset("langevin-scalar", {{"dim", 2}, {"hbar1", 0.0}});
  const Corrector c = corrector_linear(s, Vec::Zero(2));
  EXPECT_LT((c.R - Mat::Identity(2, 2)).norm(), 1e-14);
  Vec x(2);
  x << 0.3, -1.2;
  EXPECT_LT((c.phi(x) - x).norm(), 1e-14);
}

TEST(CorrectorLinear, ScalarFrictionAndSlowDerivative) {
  const double h0 = 1.0, h1 = 0.5;
  const MultiscaleSystem s = make_preset("langevin-scalar", {{"dim", 2}, {"hbar0", h0}, {"hbar1", h1}});
  Vec y(2), x(2);
  y << 0.7, -0.4;
  x << 1.1, 0.5;
  const double sq = y.squaredNorm();
  const double h = h0 + h1 * sq / (1 + sq);
  const Vec gh = h1 * 2.0 * y / ((1 + sq) * (1 + sq));
  const CorrectorEval e = corrector_linear(s, y).eval(x);
  EXPECT_LT((e.phi - x / h).norm(), 1e-14);
  ASSERT_TRUE(e.has_dy);
  const Mat expected = -(x * gh.transpose()) / (h * h);
  EXPECT_LT((e.dy - expected).norm(), 1e-10);
}

TEST(CorrectorLinear, GeneratorResidualOnMatrixFriction) {
  const MultiscaleSystem s = make_preset("langevin-matrix");
  const RowMat probes = probe_grid(2, 50);
  for (double t : {-1.0, 0.3, 2.0}) {
    Vec y(2);
    y << t, 0.5 * t;
    EXPECT_LE(generator_residual(s, corrector_linear(s, y), probes), 1e-6);
  }
}

TEST(CorrectorFeynmanKac, ZeroForcingGivesZero) {
  const MultiscaleSystem s = test::scalar_fast([](double x) { return -x * x * x - x; });
  FeynmanKacOptions o;
  o.n_paths = 200;
  o.T_trunc = 2.0;
  const Corrector c = corrector_feynman_kac(s, Vec::Zero(1), o, 1);
  for (std::size_t i = 0; i < c.n_nodes(); ++i) EXPECT_EQ(c.values(static_cast<Eigen::Index>(i), 0), 0.0);
}

TEST(CorrectorFeynmanKac, MatchesLinearClosedForm) {
  const MultiscaleSystem s = make_preset("langevin-scalar");
  const Vec y = Vec::Constant(1, 0.6);
  FeynmanKacOptions o;
  o.n_paths = 4000;
  const Corrector fk = corrector_feynman_kac(s, y, o, 21);
  const Corrector lin = corrector_linear(s, y);
  for (std::size_t i = 0; i < fk.n_nodes(); ++i) {
    const Vec x = fk.node(i);
    const double se = fk.stderr_(static_cast<Eigen::Index>(i), 0);
    EXPECT_NEAR(fk.values(static_cast<Eigen::Index>(i), 0), lin.phi(x)(0), 4.0 * se + fk.tail_bound + 1e-9)
        << "x=" << x(0);
  }
}

TEST(CorrectorFeynmanKac, QuadraticForcingClosedForm) {
  // x'' - x x' = -(x^2 - 1) is solved by (x^2 - 1)/2
  const MultiscaleSystem s = test::scalar_fast([](double x) { return -x; }, [](double x) { return x * x - 1.0; });
  FeynmanKacOptions o;
  o.n_paths = 4000;
  o.T_trunc = 8.0;
  const Corrector c = corrector_feynman_kac(s, Vec::Zero(1), o, 4);
  for (std::size_t i = 0; i < c.n_nodes(); ++i) {
    const double x = c.node(i)(0);
    const double se = c.stderr_(static_cast<Eigen::Index>(i), 0);
    EXPECT_NEAR(c.values(static_cast<Eigen::Index>(i), 0), 0.5 * (x * x - 1.0), 4.0 * se + c.tail_bound + 1e-6)
        << "x=" << x;
  }
}
