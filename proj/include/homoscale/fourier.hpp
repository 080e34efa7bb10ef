#pragma once

#include "homoscale/common.hpp"

#include <json.hpp>

#include <complex>
#include <vector>

namespace homoscale {

using cplx = std::complex<double>;

// Truncated Fourier series on the unit torus T^d with modes k in {-N..N}^d,
// one coefficient block per component. Modes are stored row-major with the
// first axis slowest, each index shifted by N.
class FourierField {
 public:
  FourierField() = default;
  FourierField(int d, int N, int ncomp);

  int dim() const { return d_; }
  int cutoff() const { return N_; }
  int components() const { return ncomp_; }
  std::size_t n_modes() const { return n_modes_; }

  std::size_t index(const int* k) const;
  void mode(std::size_t idx, int* k) const;
  bool in_range(const int* k) const;

  cplx& at(int comp, std::size_t idx) { return coef_[static_cast<std::size_t>(comp) * n_modes_ + idx]; }
  const cplx& at(int comp, std::size_t idx) const { return coef_[static_cast<std::size_t>(comp) * n_modes_ + idx]; }
  cplx get(int comp, std::initializer_list<int> k) const;
  void set(int comp, std::initializer_list<int> k, cplx v);

  // Real part of the truncated series at x.
  double eval(int comp, const double* x) const;
  void eval_all(const double* x, double* out) const;

  // Evaluator over the nonzero modes only, for hot loops.
  std::function<double(const double*)> evaluator(int comp) const;

  bool is_hermitian(double tol = 1e-14) const;
  void symmetrize();
  FourierField with_cutoff(int N2) const;
  FourierField derivative(int axis) const;
  FourierField component(int comp) const;
  // Largest cutoff carrying a nonzero coefficient.
  int effective_cutoff() const;
  double l2_norm() const;
  double max_abs_diff(const FourierField& other) const;

  // Values at the M^d grid points j/M (first axis slowest).
  std::vector<double> to_grid(int comp, int M) const;
  std::vector<cplx> to_grid_complex(int comp, int M) const;
  // Inverse of to_grid for band-limited data; requires M >= 2N+1.
  static FourierField from_grid(const std::vector<std::vector<double>>& comps, int d, int M, int N);

  nlohmann::json to_json() const;
  static FourierField from_json(const nlohmann::json& j);

  static FourierField constant(int d, int N, const std::vector<double>& values);

 private:
  int d_ = 1;
  int N_ = 0;
  int ncomp_ = 1;
  std::size_t n_modes_ = 1;
  std::vector<cplx> coef_;
};

// Separable DFT helpers on tensors with the first axis slowest.
// Maps (2N+1)^d mode coefficients to M^d grid values.
std::vector<cplx> modes_to_grid(const std::vector<cplx>& modes, int d, int N, int M);
// Maps M^d grid values to (2N+1)^d coefficients (M >= 2N+1).
std::vector<cplx> grid_to_modes(const std::vector<cplx>& grid, int d, int M, int N);

}  // namespace homoscale
