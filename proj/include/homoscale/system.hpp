#pragma once

#include "homoscale/common.hpp"

#include <map>
#include <string>
#include <vector>

namespace homoscale {

// Evaluator writing a row-major rows x cols block into out. x may be null
// for fields declared independent of x.
using FieldFn = std::function<void(const double* x, const double* y, double* out)>;

struct CoefficientField {
  int rows = 0;
  int cols = 1;
  FieldFn eval;
  // Optional analytic gradients: out[(r*cols + c)*dim + k].
  FieldFn grad_x;
  FieldFn grad_y;
  bool zero = false;
  bool x_free = false;  // declared independent of x
  double holder_x = 1.0;
  double holder_y = 1.0;

  int size() const { return rows * cols; }
  bool has_grad_x() const { return static_cast<bool>(grad_x); }
  bool has_grad_y() const { return static_cast<bool>(grad_y); }

  Mat operator()(const Vec& x, const Vec& y) const;

  static CoefficientField zeros(int rows, int cols);
  static CoefficientField constant(const Mat& value);
};

struct SystemFlags {
  bool linear_fast = false;
  bool averaging = false;
  bool langevin = false;
  bool periodic = false;
  bool nondegenerate_fast = false;
};

// Affine representation z -> Mx x + My y + v of a vector field.
struct AffineMap {
  Mat Mx;
  Mat My;
  Vec v;
};

// Structure inferred on the probe grid.
struct SystemStructure {
  bool fully_linear = false;   // b, c, F, H affine in (x, y); sigma, G constant
  bool slow_affine_x = false;  // F, H affine in x for each y; G independent of x
  bool fast_x_free_noise = false;  // sigma independent of x
  bool c_x_free = false;
  bool A_constant = false;
  bool sigma_constant = false;
  AffineMap b, c, F, H;  // filled when fully_linear
  Mat sigma0, G0;        // filled when fully_linear
};

struct MultiscaleSystem {
  std::string name;
  int d = 0;
  int vartheta = 0;
  int m = 0;
  CoefficientField b, c, sigma, F, H, G;
  CoefficientField A;  // d x d, function of y only; set when linear_fast
  SystemFlags flags;
  SystemStructure structure;
  double lambda_hat = 0.0;  // min eigenvalue of sigma sigma^T over probes
  double Lambda_hat = 0.0;  // max eigenvalue of sigma sigma^T over probes
  // Auxiliary preset fields, e.g. "U", "gradU", "friction", "lyap_h", "lyap_h_grad".
  std::map<std::string, CoefficientField> aux;
  std::map<std::string, double> params;

  bool has_aux(const std::string& key) const { return aux.count(key) > 0; }
  const CoefficientField& aux_field(const std::string& key) const;
};

// Quasi-random probe points in [-5, 5]^dim (Sobol), n x dim.
RowMat probe_grid(int dim, int n = 1000);

// Validates shapes, flags and ellipticity and infers structure. Throws on
// shape mismatch, flag violation or degenerate noise when non-degeneracy is
// declared.
void finalize_system(MultiscaleSystem& sys);

// Central-difference check of analytic gradients; returns the largest
// relative error over the probes (0 when no gradients are supplied).
double gradient_check(const CoefficientField& f, int d, int vartheta, const RowMat& probes,
                      double h = 1e-5);

// Checks output shape on probes using guard sentinels: every declared entry
// written and finite, nothing written past the declared block.
void shape_check(const CoefficientField& f, const std::string& label, int d, int vartheta,
                 const RowMat& probes);

// rho(x) = 1 + |x|^r for r >= 0 and 1/(1 + |x|^|r|) for r < 0.
struct PolynomialWeight {
  double r = 0.0;
  double operator()(const Vec& x) const;
  double operator()(double norm) const;
  // C with rho(x+h)/rho(x) in [1/C, C] whenever |h| <= 1; C = 2^max(1,|r|).
  double shift_constant() const;
};

struct TestObservable {
  std::string name;
  std::function<double(const double* x, const double* y)> phi;
  std::function<double(const double* y)> phibar;  // closed-form mu_y(phi(., y)), optional
  double alpha = 1.0;  // declared regularity in x
  double gamma = 1.0;  // declared regularity in y
  PolynomialWeight rho0;
  PolynomialWeight omega0;
  bool fast_only = false;
  bool slow_only = false;

  double operator()(const double* x, const double* y) const { return phi(x, y); }
};

}  // namespace homoscale
