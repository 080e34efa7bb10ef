#pragma once

#include "homoscale/common.hpp"
#include "homoscale/corrector.hpp"
#include "homoscale/frozen.hpp"
#include "homoscale/linalg.hpp"
#include "homoscale/system.hpp"

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace homoscale {

// Pointwise Gamma_1 (vartheta) and Gamma_2 (vartheta x vartheta).
struct GammaTerms {
  std::shared_ptr<const MultiscaleSystem> sys;
  Corrector corr;
  Vec gamma1(const Vec& x) const;
  Mat gamma2(const Vec& x) const;
};

GammaTerms assemble_gamma(const MultiscaleSystem& sys, const Corrector& corr);

struct EffectiveDynamics {
  Vec y;
  Vec F;
  Mat G;
  Mat sigma_bar;
  Vec B;  // noise-induced drift when known
  Vec F_se;
  Mat G_se;
  std::string provenance;  // general-quadrature | sk-closed-form | averaging | torus
};

// F = mu_y(F + Gamma_1), G = mu_y(G G^T + sym Gamma_2).
EffectiveDynamics effective_coefficients(const MultiscaleSystem& sys, const GammaTerms& gamma,
                                         const FrozenEquilibrium& eq, const Vec& y);

// Closed form for A(y) x fast dynamics: G = A^-1 s s^T A^-T,
// F = -A^-1 grad U + B with B_i = sum_jk Sigma_jk d_{y_j}(A^-1)_ik.
EffectiveDynamics effective_sk(const MultiscaleSystem& sys, const Vec& y);

// Symmetrizes, floors eigenvalues in [-1e-6, 0] at 0 and throws below.
Mat floor_psd(const Mat& G);

struct PsdIdentity {
  double lhs = 0.0;
  double lhs_se = 0.0;
  double rhs = 0.0;
  double rhs_se = 0.0;
  double diff_se = 0.0;  // paired standard error of lhs - rhs
};

// <xi, G xi> against mu_y(|G^T xi + sigma^T grad_x Phi_xi|^2), both by
// Monte Carlo on the same equilibrium samples.
PsdIdentity verify_psd_identity(const MultiscaleSystem& sys, const Corrector& corr, const FrozenEquilibrium& eq,
                                const Vec& y, const Vec& xi, std::size_t n_samples = 20000, std::uint64_t seed = 5);

// Effective coefficients as functions of y for the homogenized integrator.
// The general route keeps a small nearest-y cache; the closed-form route is
// evaluated directly.
class EffectiveModel {
 public:
  enum class Route { Auto, General, SK };
  EffectiveModel(std::shared_ptr<const MultiscaleSystem> sys, Route route = Route::Auto);
  EffectiveDynamics at(const Vec& y) const;
  void drift(const double* y, double* out) const;
  void sigma_bar(const double* y, double* out) const;
  int vartheta() const { return sys_->vartheta; }
  Route route() const { return route_; }

 private:
  EffectiveDynamics compute(const Vec& y) const;
  const EffectiveDynamics& at_point(const double* y) const;
  std::shared_ptr<const MultiscaleSystem> sys_;
  Route route_;
  mutable std::mutex mu_;
  mutable std::vector<std::pair<Vec, std::shared_ptr<EffectiveDynamics>>> cache_;
};

}  // namespace homoscale
