#pragma once

#include "homoscale/common.hpp"

namespace homoscale {

// Solves A S + S A^T = 2 M for S. Requires the symmetric part of A to be
// positive definite; output is symmetrized.
Mat solve_lyapunov(const Mat& A, const Mat& M);

// Frobenius norm of A S + S A^T - 2 M.
double lyapunov_residual(const Mat& A, const Mat& S, const Mat& M);

// Smallest eigenvalue of (A + A^T)/2.
double min_sym_eigenvalue(const Mat& A);

// Symmetric PSD square root; eigenvalues are clipped at 0. Throws when the
// input is asymmetric beyond sym_tol (relative to 1 + |G|_F).
Mat psd_sqrt(const Mat& G, double sym_tol = 1e-10);

// Factor L with L L^T = S for symmetric PSD S (eigen-based, tolerant of
// singular S).
Mat psd_factor(const Mat& S);

Mat expm(const Mat& A);

// Probabilists' Gauss-Hermite rule (weight exp(-x^2/2)/sqrt(2 pi)); weights sum to 1.
struct GaussHermite {
  Vec nodes;
  Vec weights;
};
GaussHermite gauss_hermite(int n);

struct QuadratureRule {
  RowMat points;  // n_points x d
  Vec weights;
};

// Tensor Gauss-Hermite rule for N(mean, cov); d <= 3.
QuadratureRule gaussian_tensor_rule(const Vec& mean, const Mat& cov, int order = 20);

// Exact transition of dz = (M z + m0) dt + B dW over a step h:
// z_h = E z + g + xi with Cov(xi) = Q and Cov(xi, W_h - W_0) = K.
struct LinearTransition {
  Mat E;
  Vec g;
  Mat Q;
  Mat K;
};
LinearTransition linear_transition(const Mat& M, const Vec& m0, const Mat& B, double h);

}  // namespace homoscale
