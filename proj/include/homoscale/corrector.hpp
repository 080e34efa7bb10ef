#pragma once

#include "homoscale/common.hpp"
#include "homoscale/frozen.hpp"
#include "homoscale/system.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace homoscale {

struct CorrectorEval {
  Vec phi;                // vartheta
  Mat dx;                 // vartheta x d, dx(i, k) = d Phi_i / d x_k
  Mat dy;                 // vartheta x vartheta, dy(i, j) = d Phi_i / d y_j
  std::vector<Mat> dxdy;  // per j: vartheta x d
  bool has_dy = false;
};

// Solution of L1 Phi = -H(., y) at a fixed y, centered against mu_y.
struct Corrector {
  enum class Kind { LinearClosedForm, FeynmanKac };
  Kind kind = Kind::LinearClosedForm;
  int d = 0;
  int vartheta = 0;
  Vec y;
  bool has_dy = false;

  // LinearClosedForm: Phi = R x with R = P(y) A(y)^-1 where H = P(y) x.
  Mat R;
  std::vector<Mat> dR;  // d R / d y_j

  // FeynmanKac: values on a tensor lattice, first axis slowest.
  std::vector<std::vector<double>> axes;
  RowMat values;                // n_nodes x vartheta
  RowMat stderr_;               // n_nodes x vartheta
  std::vector<RowMat> d1;       // per x axis k: first derivatives at nodes
  std::vector<RowMat> d2;       // per (k, l): second derivatives at nodes
  std::vector<RowMat> dy_vals;  // per y_j: d Phi / d y_j at nodes
  std::vector<RowMat> dy_se;
  std::vector<RowMat> dxdy_vals;  // per (j, k)
  double T_trunc = 0.0;
  double tail_bound = 0.0;
  std::size_t n_paths = 0;

  std::size_t n_nodes() const;
  Vec node(std::size_t i) const;
  // Multilinear interpolation of the node tables for FeynmanKac.
  CorrectorEval eval(const Vec& x) const;
  Vec phi(const Vec& x) const { return eval(x).phi; }
};

// Phi(x, y) = P(y) A(y)^-1 x for H = P(y) x (H = x gives A^-1 x).
Corrector corrector_linear(const MultiscaleSystem& sys, const Vec& y);

struct FeynmanKacOptions {
  double T_trunc = 10.0;
  double dt_out = 0.02;  // trapezoid grid
  double dt = 0.0;       // fine step (0: scheme default, capped at dt_out)
  std::size_t n_paths = 2000;
  bool y_derivatives = false;
  double y_step = 1e-3;  // relative
  // Probe lattice axes; empty selects the default lattice.
  std::vector<std::vector<double>> axes;
};

// Gauss-Hermite nodes scaled by sqrt(Sigma_kk) per axis when mu_y is
// Gaussian, else 7 uniform points on [-3, 3] per axis.
std::vector<std::vector<double>> default_probe_axes(const FrozenEquilibrium& eq, int points = 7);

// Phi(x, y) = int_0^T E H(X_t^y(x), y) dt with common random numbers
// across probes. Throws PreconditionError when H is not centered.
Corrector corrector_feynman_kac(const MultiscaleSystem& sys, const Vec& y, const FeynmanKacOptions& opts,
                                std::uint64_t seed, const FrozenEquilibrium* eq = nullptr);

// Mean over probes of |L1 Phi + H| with L1 applied by central differences
// (closed form) or the lattice difference tables (Feynman-Kac, interior nodes).
double generator_residual(const MultiscaleSystem& sys, const Corrector& corr, const RowMat& probes,
                          double h = 1e-4);

// Columns y..., x..., phi..., stderr...
void export_corrector_csv(const Corrector& corr, const std::string& path);

}  // namespace homoscale
