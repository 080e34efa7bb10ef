#pragma once

#include "homoscale/common.hpp"
#include "homoscale/system.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace homoscale {

using XFn = std::function<double(const double* x)>;

// Invariant law mu_y of the frozen fast process at a fixed y.
struct FrozenEquilibrium {
  enum class Kind { Gaussian, Empirical };
  Kind kind = Kind::Gaussian;
  Vec y;
  Mat cov;           // Gaussian: covariance (mean 0)
  RowMat particles;  // Empirical: n x d
  double ess = 0.0;  // effective sample size (Empirical)
  std::size_t thinning = 1;
  std::string provenance;

  int dim() const;
  // mu_y(f) with a standard error (0 for quadrature). Gaussian laws use a
  // tensor Gauss-Hermite rule for d <= 3 and sampling above.
  Estimate expect(const XFn& f) const;
  // Vector version with per-component standard errors.
  std::vector<Estimate> expect_vec(const std::function<void(const double* x, double* out)>& f, int n_out) const;
  // Samples (n x d): fresh Gaussian draws, or the particles cycled.
  RowMat sample(std::size_t n, std::uint64_t seed) const;
};

// Frozen system at fixed y: c, F, H and G removed, slow row held still.
MultiscaleSystem frozen_system(const MultiscaleSystem& sys);

// Gaussian with Sigma(y) from the Lyapunov equation for linear_fast
// systems, otherwise thinned states of the simulated frozen SDE.
FrozenEquilibrium frozen_equilibrium(const MultiscaleSystem& sys, const Vec& y, std::size_t n = 4000,
                                     double burn_in = 20.0, std::uint64_t seed = 1);

// |mu_y(H(., y))| (Euclidean norm) with a standard error.
Estimate centering_residual(const MultiscaleSystem& sys, const Vec& y, const FrozenEquilibrium& eq);

struct MixingProfile {
  std::vector<double> lags;
  std::vector<double> decay;
  std::vector<double> stderr_;
  std::string model = "unresolved";  // exponential | polynomial | unresolved
  double rate = 0.0;
  double residual = 0.0;
  bool resolved() const { return model != "unresolved"; }
};

// max over the bank and a fixed set of dispersed starts of
// |E phi(X_t^y(x)) - mu_y(phi)|, with exponential and polynomial tail fits.
MixingProfile estimate_mixing(const MultiscaleSystem& sys, const Vec& y, const std::vector<XFn>& bank,
                              const std::vector<double>& lags, std::size_t n_paths, std::uint64_t seed,
                              const FrozenEquilibrium* eq = nullptr);

struct MomentTable {
  std::vector<double> eps;
  std::vector<double> t;
  std::vector<double> moment;  // eps-major
  std::vector<double> stderr_;
  std::vector<std::size_t> failed;  // per eps
  double max = 0.0;
  double min = 0.0;
  bool within_bound = true;
};

// Sample E(1 + |Z_t|^r) (or |Y_t| only) per (eps, t).
MomentTable moment_scan(const MultiscaleSystem& sys, const std::vector<double>& eps_grid,
                        const std::vector<double>& t_grid, double r, const Vec& z0, std::size_t n_paths,
                        std::uint64_t seed, bool slow_only = false,
                        double bound = std::numeric_limits<double>::infinity());

}  // namespace homoscale
