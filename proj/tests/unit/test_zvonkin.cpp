#include "homoscale/zvonkin.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace homoscale;

TEST(Zvonkin, DiagonalResolventWithoutDrift) {
  const FourierField b(2, 4, 2);
  FourierField f(2, 4, 2);
  f.set(0, {1, 2}, cplx(0.5, 0.25));
  f.set(0, {-1, -2}, cplx(0.5, -0.25));
  const ZvonkinTransform z = zvonkin_solve(b, f);
  const double k2 = 1.0 + 4.0;
  const cplx expected = cplx(0.5, 0.25) / (-4.0 * M_PI * M_PI * k2 - z.lambda);
  EXPECT_LT(std::abs(z.u.get(0, {1, 2}) - expected), 1e-15);
  EXPECT_LT(std::abs(z.u.get(1, {1, 2})), 1e-15);
  EXPECT_LT(std::abs(z.u.get(0, {2, 1})), 1e-15);
}

TEST(SynthDrift, DivergenceFreeAndHermitian) {
  const FourierField b = synth_divergence_free_drift(2, -0.7, 16, 1.0, 3);
  EXPECT_LT(divergence_defect(b), 1e-12);
  EXPECT_TRUE(b.is_hermitian(1e-14));
  int k[2];
  for (std::size_t i = 0; i < b.n_modes(); ++i) {
    b.mode(i, k);
    EXPECT_LT(std::abs(double(k[0]) * b.at(0, i) + double(k[1]) * b.at(1, i)), 1e-14);
  }
}

TEST(SynthDrift, ZeroAmplitude) {
  EXPECT_EQ(synth_divergence_free_drift(2, -0.7, 8, 0.0, 3).l2_norm(), 0.0);
}

TEST(SynthDrift, SpectralDecaySlope) {
  const double alpha = -0.5;
  const FourierField b = synth_divergence_free_drift(2, alpha, 24, 1.0, 5);
  // regress log|b_k| on log|k|
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  int k[2];
  for (std::size_t i = 0; i < b.n_modes(); ++i) {
    b.mode(i, k);
    const double kn = std::hypot(k[0], k[1]);
    if (kn < 2 || kn > 24) continue;
    const double m = std::hypot(std::abs(b.at(0, i)), std::abs(b.at(1, i)));
    const double x = std::log(kn), y = std::log(m);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  EXPECT_NEAR(slope, -(alpha + 1.0), 0.1);  // |k|^-(alpha + d/2), d = 2
}

TEST(Zvonkin, SynthesizedDriftFixedPoint) {
  const FourierField b = synth_divergence_free_drift(2, -0.7, 16, 1.0, 0);
  FourierField f = b;
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < f.n_modes(); ++i) f.at(c, i) = -b.at(c, i);
  const ZvonkinTransform z = zvonkin_solve(b, f);
  EXPECT_LE(z.residual, 1e-8 * f.l2_norm());
  EXPECT_LT(z.q_hat, 1.0);
  EXPECT_LE(z.grad_sup, 0.5);
  EXPECT_LT(z.u_norm_doubled, z.u_norm);
}

TEST(ZvonkinTransformSystem, IdentityWhenUVanishes) {
  const FourierField b(1, 4, 1);
  FourierField c = FourierField::constant(1, 4, {0.3});
  const ZvonkinTransform z = zvonkin_solve(b, FourierField(1, 4, 1));
  const TransformedSystem t = zvonkin_transform_system(b, c, z);
  EXPECT_LT(t.b_hat.l2_norm(), 1e-15);
  EXPECT_LT(t.c_hat.max_abs_diff(c.with_cutoff(t.c_hat.cutoff())), 1e-14);
  EXPECT_NEAR(t.ellipticity_min, 1.0, 1e-14);
  EXPECT_NEAR(t.ellipticity_max, 1.0, 1e-14);
}

TEST(ZvonkinTransformSystem, EllipticityBracket) {
  const FourierField b = synth_divergence_free_drift(2, -0.7, 8, 1.0, 2);
  FourierField f = b;
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < f.n_modes(); ++i) f.at(c, i) = -b.at(c, i);
  const ZvonkinTransform z = zvonkin_solve(b, f);
  ASSERT_LE(z.grad_sup, 0.5);
  const TransformedSystem t = zvonkin_transform_system(b, FourierField(2, 0, 2), z);
  EXPECT_GE(t.ellipticity_min, 0.25);
  EXPECT_LE(t.ellipticity_max, 2.25);
  EXPECT_LE(t.roundtrip, 1e-10);
}

TEST(ZvonkinTransform, InverseMap) {
  const FourierField b = synth_divergence_free_drift(2, -0.7, 8, 1.0, 2);
  FourierField f = b;
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < f.n_modes(); ++i) f.at(c, i) = -b.at(c, i);
  const ZvonkinTransform z = zvonkin_solve(b, f);
  Vec x(2);
  x << 0.3, 0.71;
  EXPECT_LT((z.inverse(z.map(x)) - x).norm(), 1e-11);
}
