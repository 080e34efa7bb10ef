#pragma once

#include "homoscale/common.hpp"
#include "homoscale/fourier.hpp"

#include <cstdint>
#include <vector>

namespace homoscale {

// Periodic map Phi_Z(x) = x + u(x) where each component of u solves
// Delta u - lambda u + b . grad u = f.
struct ZvonkinTransform {
  double lambda = 0.0;
  double theta = 0.0;
  FourierField u;                  // d components
  std::vector<FourierField> grad;  // grad[a] = d_a u
  double q_hat = 0.0;              // empirical contraction factor
  double residual = 0.0;           // grid residual relative to max |f|
  double grad_sup = 0.0;           // max spectral norm of grad u on the evaluation grid
  int iterations = 0;
  int doublings = 0;
  // Norm trend under lambda -> 2 lambda.
  double u_norm = 0.0;
  double u_norm_doubled = 0.0;
  double trend_expected = 0.0;  // 2^(-theta/2)

  int dim() const { return u.dim(); }
  Vec map(const Vec& x) const;
  Mat jacobian(const Vec& x) const;
  // Newton inverse; throws NumericalError without convergence.
  Vec inverse(const Vec& y, int max_iter = 20, double tol = 1e-12) const;
};

struct ZvonkinOptions {
  double lambda0 = 16.0;
  double tol = 1e-13;
  int max_doublings = 5;
  int max_iter = 5000;
  double theta = 0.15;
  // Enforce |grad u| <= 1/2; by default when f = -b.
  int require_grad_bound = -1;
  bool trend = true;
};

// Divergence of b in the sup norm of the modes, relative to the largest coefficient.
double divergence_defect(const FourierField& b);

ZvonkinTransform zvonkin_solve(const FourierField& b, const FourierField& f, const ZvonkinOptions& opts = {});

struct TransformedSystem {
  int M = 0;
  FourierField b_hat;      // d components
  FourierField c_hat;      // d components
  FourierField sigma_hat;  // d*d components
  FourierField a_hat;      // sigma_hat sigma_hat^T
  std::vector<std::vector<double>> b_grid, c_grid, sigma_grid;
  double roundtrip = 0.0;
  double ellipticity_min = 0.0;
  double ellipticity_max = 0.0;
};

// Evaluates the transformed coefficients on an M^d grid (default 4N+1) and
// re-projects them to cutoff 2N.
TransformedSystem zvonkin_transform_system(const FourierField& b, const FourierField& c, const ZvonkinTransform& zv,
                                           int M = 0);

// Random divergence-free field with |b_k| ~ |k|^-(alpha + d/2), RMS equal to amplitude.
FourierField synth_divergence_free_drift(int d, double alpha, int N, double amplitude, std::uint64_t seed);

}  // namespace homoscale
