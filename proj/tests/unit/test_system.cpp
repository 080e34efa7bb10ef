#include "homoscale/presets.hpp"
#include "homoscale/system.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace homoscale;
using nlohmann::json;

TEST(Presets, LangevinScalarFlags) {
  const MultiscaleSystem s = make_preset("langevin-scalar");
  EXPECT_TRUE(s.flags.linear_fast);
  EXPECT_TRUE(s.flags.langevin);
  EXPECT_FALSE(s.flags.averaging);
  EXPECT_GT(s.lambda_hat, 0.0);
}

TEST(Presets, AveragingOuZeroCoupling) {
  const MultiscaleSystem s = make_preset("averaging-ou", {{"dim", 2}});
  EXPECT_TRUE(s.flags.averaging);
  EXPECT_TRUE(s.structure.fully_linear);
  const RowMat probes = probe_grid(4, 100);
  for (int i = 0; i < probes.rows(); ++i) {
    const Vec x = probes.row(i).head(2).transpose(), y = probes.row(i).tail(2).transpose();
    EXPECT_EQ(s.c(x, y).norm(), 0.0);
    EXPECT_EQ(s.H(x, y).norm(), 0.0);
    EXPECT_LT((s.b(x, y) + s.A(x, y) * x).norm(), 1e-14);
  }
}

TEST(Presets, AllBuild) {
  for (const auto& name : preset_names()) {
    const MultiscaleSystem s = make_preset(name);
    EXPECT_GT(s.d, 0) << name;
    EXPECT_GT(s.vartheta, 0) << name;
  }
}

TEST(Presets, UnknownParameterRejected) {
  EXPECT_THROW(make_preset("langevin-scalar", {{"stifness", 2.0}}), ConfigError);
  EXPECT_THROW(make_preset("no-such-preset"), ConfigError);
}

TEST(Presets, AnalyticGradientsAgreeWithDifferences) {
  for (const char* name : {"langevin-scalar", "langevin-matrix"}) {
    const MultiscaleSystem s = make_preset(name);
    const RowMat probes = probe_grid(s.d + s.vartheta, 200);
    EXPECT_LT(gradient_check(s.A, s.d, s.vartheta, probes), 1e-6) << name;
  }
}

TEST(BuildSystem, DegenerateNoiseRejectedWhenDeclared) {
  const json spec = {{"dims", {{"d", 1}, {"vartheta", 1}, {"m", 1}}},
                     {"coefficients",
                      {{"b", {{"affine", {{"x", {{-1.0}}}}}}},
                       {"c", {{"zero", true}}},
                       {"sigma", {{"zero", true}}},
                       {"F", {{"zero", true}}},
                       {"H", {{"zero", true}}},
                       {"G", {{"constant", {{1.0}}}}}}},
                     {"flags", {{"nondegenerate_fast", true}}}};
  EXPECT_THROW(build_system(spec), Error);
}

TEST(BuildSystem, ShapeMismatchRejected) {
  const json spec = {{"dims", {{"d", 2}, {"vartheta", 1}, {"m", 2}}},
                     {"coefficients",
                      {{"b", {{"zero", true}}},
                       {"c", {{"zero", true}}},
                       {"sigma", {{"constant", {{1.0, 0.0}}}}},
                       {"F", {{"zero", true}}},
                       {"H", {{"zero", true}}},
                       {"G", {{"zero", true}}}}}};
  EXPECT_THROW(build_system(spec), ShapeError);
}

TEST(BuildSystem, UnknownKeyNamed) {
  try {
    build_system({{"preset", "averaging-ou"}, {"coeficients", json::object()}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("coeficients"), std::string::npos);
  }
}

TEST(Finalize, AveragingFlagViolationRejected) {
  MultiscaleSystem s = test::zero_system(1, 1);
  s.c = CoefficientField::constant(Mat::Ones(1, 1));
  s.flags.averaging = true;
  EXPECT_THROW(finalize_system(s), Error);
}

TEST(Finalize, LinearFastViolationRejected) {
  MultiscaleSystem s = test::zero_system(1, 1);
  s.b.eval = [](const double* x, const double*, double* o) { o[0] = -x[0] - x[0] * x[0] * x[0]; };
  s.b.zero = false;
  s.A = CoefficientField::constant(Mat::Identity(1, 1));
  s.flags.linear_fast = true;
  EXPECT_THROW(finalize_system(s), Error);
}

TEST(ShapeCheck, DetectsMissingEntries) {
  CoefficientField f;
  f.rows = 2;
  f.eval = [](const double*, const double*, double* o) { o[0] = 1.0; };
  EXPECT_THROW(shape_check(f, "f", 1, 1, probe_grid(2, 10)), ShapeError);
}

TEST(ProbeGrid, DeterministicAndBounded) {
  const RowMat a = probe_grid(3, 64), b = probe_grid(3, 64);
  EXPECT_EQ((a - b).norm(), 0.0);
  EXPECT_LE(a.cwiseAbs().maxCoeff(), 5.0);
}

TEST(PolynomialWeight, ValuesAndShiftBound) {
  EXPECT_DOUBLE_EQ(PolynomialWeight{2.0}(2.0), 5.0);
  EXPECT_DOUBLE_EQ(PolynomialWeight{-2.0}(2.0), 0.2);
  for (double r : {-3.0, -0.5, 0.0, 0.5, 2.0, 4.0}) {
    const PolynomialWeight w{r};
    const double C = w.shift_constant();
    const RowMat p = probe_grid(4, 500);
    for (int i = 0; i < p.rows(); ++i) {
      const Vec x = p.row(i).head(2).transpose();
      Vec h = p.row(i).tail(2).transpose();
      h /= std::max(1.0, h.norm());
      const double ratio = w(Vec(x + h)) / w(x);
      EXPECT_LE(ratio, C * (1 + 1e-12));
      EXPECT_GE(ratio, 1.0 / C * (1 - 1e-12));
    }
  }
}
