#pragma once

#include "homoscale/common.hpp"
#include "homoscale/sde.hpp"
#include "homoscale/system.hpp"

#include <optional>
#include <string>
#include <vector>

namespace homoscale {

// Law of the homogenized process used on the reference side.
struct HomogenizedReference {
  enum class Kind { MonteCarlo, GaussianLinear, Closed };
  Kind kind = Kind::MonteCarlo;
  int vartheta = 1;
  // MonteCarlo: Euler-Maruyama on dY = F dt + sqrt(2) SigmaBar dW.
  VecFn F;
  VecFn sigma_bar;
  double dt = 1e-3;
  std::size_t n_paths = 0;  // 0: same as the multiscale side
  // GaussianLinear: F(y) = drift * y + offset, constant G = SigmaBar SigmaBar^T.
  Mat drift;
  Vec offset;
  Mat G;
  // Closed: E phibar(Ybar_t) supplied directly (stderr 0).
  std::function<double(double t)> closed;
};

struct ErrorCell {
  double eps = 0.0;
  double t = 0.0;
  double value = 0.0;  // E phi(Z_t^eps)
  double value_se = 0.0;
  double reference = 0.0;  // E phibar(Ybar_t)
  double reference_se = 0.0;
  double error = 0.0;
  double stderr_ = 0.0;
};

struct RateFit {
  double beta = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double log_c = 0.0;
  std::size_t n_used = 0;
};

struct BoundaryLayerFit {
  bool resolved = false;
  double kappa = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::string message;
  std::vector<double> t_over_eps2;
  std::vector<double> gap;
  std::vector<double> gap_se;
};

struct ConvergenceReport {
  std::string system;
  std::string observable;
  std::vector<double> eps;
  std::vector<double> t;
  std::vector<ErrorCell> cells;  // eps-major
  std::vector<double> sup_error;
  std::vector<double> sup_stderr;
  std::vector<double> sup_t;
  std::optional<RateFit> rate;
  std::string rate_message;
  std::optional<BoundaryLayerFit> layer;
  std::uint64_t seed = 0;
  std::size_t n_paths = 0;
  std::size_t n_failed = 0;

  const ErrorCell& cell(std::size_t ie, std::size_t it) const { return cells[ie * t.size() + it]; }
};

// phibar from the observable's closed form, else Gauss-Hermite against the
// Gaussian frozen equilibrium, else nested Monte Carlo with inner samples.
std::function<double(const double* y)> resolve_phibar(const MultiscaleSystem& sys, const TestObservable& phi,
                                                      std::size_t inner = 64, std::uint64_t seed = 7);

// E phibar(Ybar_t) with standard errors on a time grid.
std::vector<Estimate> reference_curve(const HomogenizedReference& ref, const std::function<double(const double*)>& phibar,
                                      const Vec& y0, const std::vector<double>& t_grid, std::size_t n_paths,
                                      std::uint64_t seed);

// Per-t |E phi(Z_t^eps) - E phibar(Ybar_t)| with delta-method stderr. The
// reference side uses noise independent of the multiscale side.
std::vector<ErrorCell> joint_law_error(const MultiscaleSystem& sys, const TestObservable& phi,
                                       const HomogenizedReference& ref, double eps, const std::vector<double>& t_grid,
                                       const Vec& z0, std::size_t n_paths, std::uint64_t seed,
                                       const IntegrationOptions& opts = {});

// Error surface over an eps grid (common Brownian skeleton across eps),
// sup over the t grid and a rate fit when enough cells clear the noise floor.
ConvergenceReport convergence_study(const MultiscaleSystem& sys, const TestObservable& phi,
                                    const HomogenizedReference& ref, const std::vector<double>& eps_grid,
                                    const std::vector<double>& t_grid, const Vec& z0, std::size_t n_paths,
                                    std::uint64_t seed, const IntegrationOptions& opts = {});

// Fills sup_error/sup_stderr/sup_t from the cells and attempts a rate fit.
void summarize_report(ConvergenceReport& report);

// Slope of log sup-error against log eps over points with error > 2 stderr;
// 95% interval from 200 residual-bootstrap resamples. Throws
// InsufficientData with fewer than 3 usable points.
RateFit fit_rate(const std::vector<double>& eps, const std::vector<double>& err, const std::vector<double>& se,
                 std::uint64_t seed = 2024);

// Fits log|E phi(X_t) - E phibar(Y_t)| against -kappa t/eps^2 for a
// fast-only observable over the window where the gap clears 2 stderr.
BoundaryLayerFit boundary_layer_fit(const MultiscaleSystem& sys, const TestObservable& phi, double eps,
                                    const std::vector<double>& t_grid, const Vec& z0, std::size_t n_paths,
                                    std::uint64_t seed, const IntegrationOptions& opts = {});

struct StationaryGap {
  double gap = 0.0;
  double stderr_ = 0.0;
  double multiscale = 0.0;
  double multiscale_se = 0.0;
  double reference = 0.0;
  double reference_se = 0.0;
};

struct StationaryOptions {
  double T_long = 200.0;
  double burn_frac = 0.2;
  double sample_dt = 0.5;
  std::size_t ref_paths = 0;  // 0: same as multiscale
};

// Time-space average of phi(Z^eps) over [burn T, T] against the time-space
// average of phibar(Ybar) under the reference law. Paths act as batches.
StationaryGap stationary_gap(const MultiscaleSystem& sys, const TestObservable& phi, double eps,
                             const HomogenizedReference& ref, const Vec& z0, std::size_t n_paths, std::uint64_t seed,
                             const StationaryOptions& sopts, const IntegrationOptions& opts = {});

struct CommutativityResult {
  double A = 0.0;  // t -> inf then eps -> 0 (extrapolated in eps)
  double A_se = 0.0;
  double B = 0.0;  // eps -> 0 then t -> inf
  double B_se = 0.0;
  double discrepancy = 0.0;
  double combined_se = 0.0;
  std::vector<double> eps;
  std::vector<double> eps_means;
  std::vector<double> eps_se;
};

CommutativityResult commutativity_check(const MultiscaleSystem& sys, const TestObservable& phi,
                                        const std::vector<double>& eps_grid, const HomogenizedReference& ref,
                                        const Vec& z0, std::size_t n_paths, std::uint64_t seed,
                                        const StationaryOptions& sopts, const IntegrationOptions& opts = {});

}  // namespace homoscale
