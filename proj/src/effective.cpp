#include "homoscale/effective.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace homoscale {

namespace {

Vec col0(const Mat& m) { return m.col(0); }

std::vector<Mat> dA_dy(const CoefficientField& f, const Vec& x, const Vec& y) {
  const int vt = static_cast<int>(y.size());
  std::vector<Mat> out(static_cast<std::size_t>(vt), Mat::Zero(f.rows, f.cols));
  if (f.has_grad_y()) {
    std::vector<double> g(static_cast<std::size_t>(f.size() * vt));
    f.grad_y(x.data(), y.data(), g.data());
    for (int r = 0; r < f.rows; ++r)
      for (int c = 0; c < f.cols; ++c)
        for (int j = 0; j < vt; ++j)
          out[static_cast<std::size_t>(j)](r, c) = g[static_cast<std::size_t>((r * f.cols + c) * vt + j)];
    return out;
  }
  for (int j = 0; j < vt; ++j) {
    const double h = 1e-4 * std::max(1.0, std::abs(y(j)));
    Vec yp = y, ym = y;
    yp(j) += h;
    ym(j) -= h;
    out[static_cast<std::size_t>(j)] = (f(x, yp) - f(x, ym)) / (2.0 * h);
  }
  return out;
}

}  // namespace

Vec GammaTerms::gamma1(const Vec& x) const {
  const MultiscaleSystem& s = *sys;
  const Vec& y = corr.y;
  const CorrectorEval e = corr.eval(x);
  Vec g = e.dx * col0(s.c(x, y));
  const bool need_dy = !s.H.zero || !(s.G.zero || s.sigma.zero);
  if (need_dy && !e.has_dy) throw PreconditionError("assemble_gamma: corrector lacks y-derivatives");
  if (!e.has_dy) return g;
  if (!s.H.zero) g += e.dy * col0(s.H(x, y));
  if (!s.G.zero) {
    const Mat sg = s.sigma(x, y) * s.G(x, y).transpose();  // d x vartheta
    for (int j = 0; j < s.vartheta; ++j)
      for (int k = 0; k < s.d; ++k)
        if (sg(k, j) != 0.0) g += 2.0 * sg(k, j) * e.dxdy[static_cast<std::size_t>(j)].col(k);
  }
  return g;
}

Mat GammaTerms::gamma2(const Vec& x) const {
  const MultiscaleSystem& s = *sys;
  const Vec& y = corr.y;
  const CorrectorEval e = corr.eval(x);
  Mat g = col0(s.H(x, y)) * e.phi.transpose();
  if (!s.G.zero) g += 2.0 * s.G(x, y) * s.sigma(x, y).transpose() * e.dx.transpose();
  return g;
}

GammaTerms assemble_gamma(const MultiscaleSystem& sys, const Corrector& corr) {
  if (corr.d != sys.d || corr.vartheta != sys.vartheta) throw ShapeError("assemble_gamma: corrector shape mismatch");
  GammaTerms g;
  g.sys = std::make_shared<MultiscaleSystem>(sys);
  g.corr = corr;
  return g;
}

Mat floor_psd(const Mat& G) {
  Mat S = 0.5 * (G + G.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  Vec ev = es.eigenvalues();
  if (ev.size() && ev.minCoeff() < -1e-6 * std::max(1.0, ev.cwiseAbs().maxCoeff()))
    throw NumericalError("effective diffusion has a negative eigenvalue " + std::to_string(ev.minCoeff()));
  if (ev.size() && ev.minCoeff() >= 0.0) return S;
  ev = ev.cwiseMax(0.0);
  Mat out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

EffectiveDynamics effective_coefficients(const MultiscaleSystem& sys, const GammaTerms& gamma,
                                         const FrozenEquilibrium& eq, const Vec& y) {
  if ((eq.y - y).norm() > 1e-12 || (gamma.corr.y - y).norm() > 1e-12)
    throw PreconditionError("effective_coefficients: equilibrium and corrector must be built at the same y");
  const int vt = sys.vartheta, d = sys.d;
  const int n_out = vt + vt * vt;
  auto integrand = [&](const double* xp, double* out) {
    const Vec x = Eigen::Map<const Vec>(xp, d);
    const Vec f = col0(sys.F(x, y)) + gamma.gamma1(x);
    const Mat Gm = sys.G(x, y);
    const Mat g2 = gamma.gamma2(x);
    const Mat q = Gm * Gm.transpose() + 0.5 * (g2 + g2.transpose());
    for (int i = 0; i < vt; ++i) out[i] = f(i);
    for (int i = 0; i < vt; ++i)
      for (int j = 0; j < vt; ++j) out[vt + i * vt + j] = q(i, j);
  };
  const auto est = eq.expect_vec(integrand, n_out);
  EffectiveDynamics e;
  e.y = y;
  e.F.resize(vt);
  e.F_se.resize(vt);
  e.G.resize(vt, vt);
  e.G_se.resize(vt, vt);
  for (int i = 0; i < vt; ++i) {
    e.F(i) = est[static_cast<std::size_t>(i)].mean;
    e.F_se(i) = est[static_cast<std::size_t>(i)].stderr_;
    for (int j = 0; j < vt; ++j) {
      e.G(i, j) = est[static_cast<std::size_t>(vt + i * vt + j)].mean;
      e.G_se(i, j) = est[static_cast<std::size_t>(vt + i * vt + j)].stderr_;
    }
  }
  e.G = floor_psd(e.G);
  e.sigma_bar = psd_sqrt(e.G, 1e-8);
  const bool averaging = sys.c.zero && sys.H.zero;
  e.provenance = averaging ? "averaging" : "general-quadrature";
  return e;
}

EffectiveDynamics effective_sk(const MultiscaleSystem& sys, const Vec& y) {
  if (!sys.flags.linear_fast) throw PreconditionError("effective_sk requires a linear_fast system");
  if (sys.d != sys.vartheta) throw PreconditionError("effective_sk requires d = vartheta");
  const int d = sys.d;
  const Vec x0 = Vec::Zero(d);
  const Mat A = sys.A(x0, y);
  Eigen::FullPivLU<Mat> lu(A);
  if (!lu.isInvertible()) throw NumericalError("effective_sk: A(y) is singular");
  const Mat Ai = lu.inverse();
  const Mat s = sys.sigma(x0, y);
  const Mat ss = s * s.transpose();
  const Mat Sigma = solve_lyapunov(A, ss);
  Vec gradU = Vec::Zero(d);
  if (sys.has_aux("gradU")) gradU = col0(sys.aux_field("gradU")(x0, y));
  const auto dA = dA_dy(sys.A, x0, y);
  Vec B = Vec::Zero(d);
  for (int j = 0; j < d; ++j) {
    const Mat dAi = -Ai * dA[static_cast<std::size_t>(j)] * Ai;
    for (int i = 0; i < d; ++i)
      for (int k = 0; k < d; ++k) B(i) += Sigma(j, k) * dAi(i, k);
  }
  EffectiveDynamics e;
  e.y = y;
  e.G = Ai * ss * Ai.transpose();
  e.G = 0.5 * (e.G + e.G.transpose());
  e.B = B;
  e.F = -Ai * gradU + B;
  e.F_se = Vec::Zero(d);
  e.G_se = Mat::Zero(d, d);
  e.sigma_bar = psd_sqrt(e.G, 1e-8);
  e.provenance = "sk-closed-form";
  return e;
}

PsdIdentity verify_psd_identity(const MultiscaleSystem& sys, const Corrector& corr, const FrozenEquilibrium& eq,
                                const Vec& y, const Vec& xi, std::size_t n_samples, std::uint64_t seed) {
  if (xi.size() != sys.vartheta) throw ShapeError("verify_psd_identity: xi has wrong dimension");
  const GammaTerms gamma = assemble_gamma(sys, corr);
  const RowMat xs = eq.sample(eq.kind == FrozenEquilibrium::Kind::Gaussian ? n_samples
                                                                            : static_cast<std::size_t>(eq.particles.rows()),
                              seed);
  const Eigen::Index n = xs.rows();
  Vec l(n), r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec x = xs.row(i).transpose();
    const Mat Gm = sys.G(x, y);
    const Mat g2 = gamma.gamma2(x);
    const Mat q = Gm * Gm.transpose() + 0.5 * (g2 + g2.transpose());
    l(i) = xi.dot(q * xi);
    const Vec v = Gm.transpose() * xi + sys.sigma(x, y).transpose() * (corr.eval(x).dx.transpose() * xi);
    r(i) = v.squaredNorm();
  }
  auto mean_se = [n](const Vec& v, double& m, double& se) {
    m = v.mean();
    se = n > 1 ? std::sqrt((v.array() - m).square().sum() / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
  };
  PsdIdentity out;
  mean_se(l, out.lhs, out.lhs_se);
  mean_se(r, out.rhs, out.rhs_se);
  double dm;
  mean_se(l - r, dm, out.diff_se);
  out.diff_se = std::max(out.diff_se, 1e-12 * (1.0 + std::abs(out.lhs)));
  return out;
}

EffectiveModel::EffectiveModel(std::shared_ptr<const MultiscaleSystem> sys, Route route)
    : sys_(std::move(sys)), route_(route) {
  if (route_ == Route::Auto)
    route_ = (sys_->flags.langevin && sys_->flags.linear_fast && sys_->d == sys_->vartheta) ? Route::SK : Route::General;
}

EffectiveDynamics EffectiveModel::compute(const Vec& y) const {
  if (route_ == Route::SK) return effective_sk(*sys_, y);
  const FrozenEquilibrium eq = frozen_equilibrium(*sys_, y);
  Corrector corr;
  if (sys_->flags.linear_fast) {
    corr = corrector_linear(*sys_, y);
  } else if (sys_->H.zero && sys_->c.zero) {
    corr.kind = Corrector::Kind::LinearClosedForm;
    corr.d = sys_->d;
    corr.vartheta = sys_->vartheta;
    corr.y = y;
    corr.R = Mat::Zero(sys_->vartheta, sys_->d);
    corr.dR.assign(static_cast<std::size_t>(sys_->vartheta), Mat::Zero(sys_->vartheta, sys_->d));
    corr.has_dy = true;
  } else {
    FeynmanKacOptions fo;
    fo.y_derivatives = true;
    corr = corrector_feynman_kac(*sys_, y, fo, 17, &eq);
  }
  return effective_coefficients(*sys_, assemble_gamma(*sys_, corr), eq, y);
}

EffectiveDynamics EffectiveModel::at(const Vec& y) const {
  if (route_ == Route::SK) return compute(y);
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& [k, v] : cache_)
      if ((k - y).lpNorm<Eigen::Infinity>() <= 1e-8) return *v;
  }
  auto e = std::make_shared<EffectiveDynamics>(compute(y));
  std::lock_guard<std::mutex> lock(mu_);
  if (cache_.size() >= 64) cache_.erase(cache_.begin());
  cache_.emplace_back(y, e);
  return *e;
}

namespace {

// drift and sigma_bar are called back to back at the same state
struct LastEval {
  const void* owner = nullptr;
  Vec y;
  EffectiveDynamics e;
};
thread_local LastEval last_eval;

}  // namespace

const EffectiveDynamics& EffectiveModel::at_point(const double* y) const {
  const Eigen::Map<const Vec> yy(y, sys_->vartheta);
  LastEval& l = last_eval;
  if (l.owner != this || l.y.size() != yy.size() || l.y != yy) {
    l.e = at(yy);
    l.y = yy;
    l.owner = this;
  }
  return l.e;
}

void EffectiveModel::drift(const double* y, double* out) const {
  const EffectiveDynamics& e = at_point(y);
  std::copy(e.F.data(), e.F.data() + e.F.size(), out);
}

void EffectiveModel::sigma_bar(const double* y, double* out) const {
  const EffectiveDynamics& e = at_point(y);
  const int n = sys_->vartheta;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out[i * n + j] = e.sigma_bar(i, j);
}

}  // namespace homoscale
