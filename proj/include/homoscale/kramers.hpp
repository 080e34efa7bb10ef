#pragma once

#include "homoscale/common.hpp"
#include "homoscale/sde.hpp"
#include "homoscale/system.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace homoscale {

// Kinetic Langevin system in first-order form: fast scaled velocity x,
// slow position y, friction A(y), potential U(y), noise sigma(y).
struct LangevinSystem {
  std::shared_ptr<const MultiscaleSystem> sys;
  double kappa0 = 0.0;  // min eigenvalue of sym A over probes
  double kappa1 = 0.0;  // max |d_y A| entry over probes
  bool has_h = false;
  double h_consistency = 0.0;  // max |grad h - supplied gradient| over probes

  int dim() const { return sys->d; }
  Mat A(const Vec& y) const;
  Mat sigma(const Vec& y) const;
  double U(const Vec& y) const;
  Mat Sigma(const Vec& y) const;  // Lyapunov covariance
  Vec A_h(const Vec& y) const;    // A^-T grad h
};

// Validates a langevin preset and probes its constants.
LangevinSystem make_langevin(const MultiscaleSystem& sys);

// Paths of (X, Y) from X_0 = eps v, Y_0 = y0 using the exact OU step for X.
TrajectoryEnsemble sk_simulate(const LangevinSystem& ls, double eps, const Vec& v, const Vec& y0, double T,
                               double dt, std::size_t n_paths, std::uint64_t seed,
                               const std::vector<double>& output_times = {});

// Homogenized positions under the closed-form effective coefficients.
TrajectoryEnsemble sk_homogenized(const LangevinSystem& ls, const Vec& y0, double T, double dt, std::size_t n_paths,
                                  std::uint64_t seed, const std::vector<double>& output_times);

struct ThermoCurve {
  std::vector<double> t;
  std::vector<double> value;
  std::vector<double> value_se;
  std::vector<double> reference;
  std::vector<double> reference_se;
  std::vector<double> gap;
  std::vector<double> gap_se;
};

// E[|X|^2/2 + U(Y)] against E[tr Sigma(Ybar)/2 + U(Ybar)].
ThermoCurve energy_curve(const TrajectoryEnsemble& ens, const LangevinSystem& ls, const TrajectoryEnsemble& ref);

// E<A(Y) X, X> against E tr(sigma sigma^T)(Ybar).
ThermoCurve entropy_production_curve(const TrajectoryEnsemble& ens, const LangevinSystem& ls,
                                     const TrajectoryEnsemble& ref);

// |tr(A Sigma) - tr(sigma sigma^T)| with Sigma from the Lyapunov equation.
double trace_identity_check(const Mat& A, const Mat& sigma);

// (tr Sigma - log det Sigma - d) / 2.
double kl_correction(const Mat& Sigma);

}  // namespace homoscale
