#include "homoscale/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>

namespace homoscale {

double min_sym_eigenvalue(const Mat& A) {
  Mat S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

namespace {

Mat lyapunov_kronecker(const Mat& A, const Mat& M) {
  const Eigen::Index d = A.rows();
  const Eigen::Index n = d * d;
  Mat K = Mat::Zero(n, n);
  // column-major vec: vec(A S) = (I kron A) vec S, vec(S A^T) = (A kron I) vec S
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) {
      const Eigen::Index row = j * d + i;
      for (Eigen::Index k = 0; k < d; ++k) {
        K(row, j * d + k) += A(i, k);
        K(row, k * d + i) += A(j, k);
      }
    }
  Vec rhs(n);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) rhs(j * d + i) = 2.0 * M(i, j);
  Vec s = K.partialPivLu().solve(rhs);
  Mat S(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) S(i, j) = s(j * d + i);
  return S;
}

Mat lyapunov_schur(const Mat& A, const Mat& M) {
  using CMat = Eigen::MatrixXcd;
  using CVec = Eigen::VectorXcd;
  Eigen::ComplexSchur<Mat> schur(A);
  const CMat& T = schur.matrixT();
  const CMat& U = schur.matrixU();
  const Eigen::Index d = A.rows();
  CMat C = U.adjoint() * (2.0 * M).cast<std::complex<double>>() * U;
  CMat Y = CMat::Zero(d, d);
  // T Y + Y T^H = C, solved column by column from the last one.
  for (Eigen::Index j = d - 1; j >= 0; --j) {
    CVec r = C.col(j);
    for (Eigen::Index k = j + 1; k < d; ++k) r -= std::conj(T(j, k)) * Y.col(k);
    CMat Tj = T;
    Tj.diagonal().array() += std::conj(T(j, j));
    Y.col(j) = Tj.triangularView<Eigen::Upper>().solve(r);
  }
  return (U * Y * U.adjoint()).real();
}

}  // namespace

Mat solve_lyapunov(const Mat& A, const Mat& M) {
  if (A.rows() != A.cols() || M.rows() != A.rows() || M.cols() != A.cols())
    throw ShapeError("solve_lyapunov: A and M must be square of equal size");
  if (min_sym_eigenvalue(A) <= 0.0)
    throw NumericalError("solve_lyapunov: symmetric part of A is not positive definite");
  Mat S = A.rows() <= 8 ? lyapunov_kronecker(A, M) : lyapunov_schur(A, M);
  return 0.5 * (S + S.transpose());
}

double lyapunov_residual(const Mat& A, const Mat& S, const Mat& M) {
  return (A * S + S * A.transpose() - 2.0 * M).norm();
}

Mat psd_sqrt(const Mat& G, double sym_tol) {
  if (G.rows() != G.cols()) throw ShapeError("psd_sqrt: matrix not square");
  if ((G - G.transpose()).norm() > sym_tol * (1.0 + G.norm()))
    throw PreconditionError("psd_sqrt: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (G + G.transpose()));
  Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Mat R = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (R + R.transpose());
}

Mat psd_factor(const Mat& S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()));
  Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

Mat expm(const Mat& A) {
  if (A.rows() == 1) return Mat::Constant(1, 1, std::exp(A(0, 0)));
  return A.exp();
}

GaussHermite gauss_hermite(int n) {
  if (n < 1) throw PreconditionError("gauss_hermite: order must be positive");
  // Golub-Welsch on the Jacobi matrix of the monic probabilists' Hermite recurrence.
  Mat J = Mat::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  GaussHermite gh;
  gh.nodes = es.eigenvalues();
  gh.weights = es.eigenvectors().row(0).transpose().array().square();
  gh.weights /= gh.weights.sum();
  // exact symmetry of the rule
  for (int i = 0; i < n / 2; ++i) {
    double x = 0.5 * (gh.nodes(n - 1 - i) - gh.nodes(i));
    double w = 0.5 * (gh.weights(i) + gh.weights(n - 1 - i));
    gh.nodes(i) = -x;
    gh.nodes(n - 1 - i) = x;
    gh.weights(i) = gh.weights(n - 1 - i) = w;
  }
  if (n % 2 == 1) gh.nodes(n / 2) = 0.0;
  return gh;
}

QuadratureRule gaussian_tensor_rule(const Vec& mean, const Mat& cov, int order) {
  const Eigen::Index d = mean.size();
  if (d < 1 || d > 3) throw PreconditionError("gaussian_tensor_rule: tensor quadrature requires 1 <= d <= 3");
  GaussHermite gh = gauss_hermite(order);
  Mat L = psd_factor(cov);
  Eigen::Index total = 1;
  for (Eigen::Index k = 0; k < d; ++k) total *= order;
  QuadratureRule rule;
  rule.points.resize(total, d);
  rule.weights.resize(total);
  Vec g(d);
  for (Eigen::Index p = 0; p < total; ++p) {
    Eigen::Index rem = p;
    double w = 1.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      Eigen::Index i = rem % order;
      rem /= order;
      g(k) = gh.nodes(i);
      w *= gh.weights(i);
    }
    rule.points.row(p) = (mean + L * g).transpose();
    rule.weights(p) = w;
  }
  return rule;
}

LinearTransition linear_transition(const Mat& M, const Vec& m0, const Mat& B, double h) {
  const Eigen::Index n = M.rows();
  const Eigen::Index m = B.cols();
  if (M.cols() != n || m0.size() != n || B.rows() != n) throw ShapeError("linear_transition: shape mismatch");
  // Base step small enough for the block exponentials, then doubling.
  const double norm = M.cwiseAbs().rowwise().sum().maxCoeff();
  int k = 0;
  double s = h;
  while (norm * s > 0.25 && k < 60) {
    s *= 0.5;
    ++k;
  }
  // E, g, K from expm([[M, m0, B], [0, 0, 0]] s)
  Mat C = Mat::Zero(n + 1 + m, n + 1 + m);
  C.topLeftCorner(n, n) = M;
  C.block(0, n, n, 1) = m0;
  C.block(0, n + 1, n, m) = B;
  Mat eC = (C * s).exp();
  LinearTransition tr;
  tr.E = eC.topLeftCorner(n, n);
  tr.g = eC.block(0, n, n, 1);
  tr.K = eC.block(0, n + 1, n, m);
  // Q by Van Loan: expm([[-M, B B^T], [0, M^T]] s) = [[., F12], [0, F22]], Q = F22^T F12
  Mat V = Mat::Zero(2 * n, 2 * n);
  V.topLeftCorner(n, n) = -M;
  V.topRightCorner(n, n) = B * B.transpose();
  V.bottomRightCorner(n, n) = M.transpose();
  Mat eV = (V * s).exp();
  tr.Q = eV.bottomRightCorner(n, n).transpose() * eV.topRightCorner(n, n);
  tr.Q = 0.5 * (tr.Q + tr.Q.transpose());
  for (int i = 0; i < k; ++i) {
    Mat E1 = tr.E;
    tr.g = E1 * tr.g + tr.g;
    tr.Q = E1 * tr.Q * E1.transpose() + tr.Q;
    tr.Q = 0.5 * (tr.Q + tr.Q.transpose());
    tr.K = E1 * tr.K + tr.K;
    tr.E = E1 * E1;
  }
  return tr;
}

}  // namespace homoscale
