#include "homoscale/zvonkin.hpp"

#include "homoscale/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace homoscale {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Separable evaluation of selected components at one point.
class PointEvaluator {
 public:
  PointEvaluator(int d, int N) : d_(d), N_(N), L_(2 * N + 1), phase_(static_cast<std::size_t>(d * (2 * N + 1))) {}

  void set_point(const double* x) {
    for (int a = 0; a < d_; ++a)
      for (int k = -N_; k <= N_; ++k)
        phase_[static_cast<std::size_t>(a * L_ + k + N_)] = std::polar(1.0, kTwoPi * k * x[a]);
  }

  double value(const FourierField& f, int comp) const {
    const std::size_t n = f.n_modes();
    const cplx* c = &f.at(comp, 0);
    if (d_ == 1) {
      cplx s(0.0, 0.0);
      for (std::size_t i = 0; i < n; ++i) s += c[i] * phase_[i];
      return s.real();
    }
    // contract the last axis first, then the rest by recursion over the leading index
    return contract(c, 0).real();
  }

 private:
  cplx contract(const cplx* c, int axis) const {
    const std::size_t L = static_cast<std::size_t>(L_);
    cplx s(0.0, 0.0);
    if (axis == d_ - 1) {
      const cplx* ph = phase_.data() + static_cast<std::size_t>(axis) * L;
      for (std::size_t k = 0; k < L; ++k) s += c[k] * ph[k];
      return s;
    }
    std::size_t stride = 1;
    for (int a = axis + 1; a < d_; ++a) stride *= L;
    const cplx* ph = phase_.data() + static_cast<std::size_t>(axis) * L;
    for (std::size_t k = 0; k < L; ++k) s += ph[k] * contract(c + k * stride, axis + 1);
    return s;
  }

  int d_, N_, L_;
  std::vector<cplx> phase_;
};

std::vector<cplx> grid_of(const FourierField& f, int comp, int M) { return f.to_grid_complex(comp, M); }

std::vector<cplx> modes_of(const FourierField& f, int comp) {
  return std::vector<cplx>(&f.at(comp, 0), &f.at(comp, 0) + f.n_modes());
}

double coef_norm(const FourierField& f) {
  double s = 0.0;
  for (int c = 0; c < f.components(); ++c)
    for (std::size_t i = 0; i < f.n_modes(); ++i) s += std::norm(f.at(c, i));
  return std::sqrt(s);
}

struct SolveOutcome {
  FourierField u;
  bool converged = false;
  double q_hat = 0.0;
  int iterations = 0;
};

SolveOutcome fixed_point(const FourierField& b, const FourierField& f, double lambda, const ZvonkinOptions& opts) {
  const int d = b.dim(), N = b.cutoff();
  const int M = 2 * N + 1;
  const std::size_t n = b.n_modes();
  std::vector<std::vector<double>> bg(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) bg[static_cast<std::size_t>(i)] = b.to_grid(i, M);
  std::vector<double> denom(n);
  std::vector<int> k(static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < n; ++i) {
    b.mode(i, k.data());
    double k2 = 0.0;
    for (int a = 0; a < d; ++a) k2 += static_cast<double>(k[static_cast<std::size_t>(a)] * k[static_cast<std::size_t>(a)]);
    denom[i] = -kTwoPi * kTwoPi * k2 - lambda;
  }
  SolveOutcome out;
  out.u = FourierField(d, N, d);
  std::vector<double> ratios;
  double prev = -1.0;
  int growing = 0;
  for (int it = 1; it <= opts.max_iter; ++it) {
    FourierField next(d, N, d);
    double delta2 = 0.0;
    for (int c = 0; c < d; ++c) {
      FourierField uc = out.u.component(c);
      std::vector<cplx> conv(bg[0].size(), cplx(0.0, 0.0));
      for (int a = 0; a < d; ++a) {
        const auto g = grid_of(uc.derivative(a), 0, M);
        for (std::size_t p = 0; p < conv.size(); ++p) conv[p] += bg[static_cast<std::size_t>(a)][p] * g[p].real();
      }
      const auto pm = grid_to_modes(conv, d, M, N);
      for (std::size_t i = 0; i < n; ++i) {
        const cplx v = (f.at(c, i) - pm[i]) / denom[i];
        delta2 += std::norm(v - out.u.at(c, i));
        next.at(c, i) = v;
      }
    }
    next.symmetrize();
    out.u = next;
    out.iterations = it;
    const double delta = std::sqrt(delta2);
    if (prev > 0.0) {
      ratios.push_back(delta / prev);
      growing = delta > prev ? growing + 1 : 0;
    }
    prev = delta;
    const double scale = std::max(coef_norm(out.u), 1e-300);
    if (delta <= opts.tol * scale || delta == 0.0) {
      out.converged = true;
      break;
    }
    if (growing >= 3 || !std::isfinite(delta)) break;
  }
  if (!ratios.empty()) {
    const std::size_t m = std::min<std::size_t>(5, ratios.size());
    double lg = 0.0;
    std::size_t used = 0;
    for (std::size_t i = ratios.size() - m; i < ratios.size(); ++i)
      if (ratios[i] > 0.0) {
        lg += std::log(ratios[i]);
        ++used;
      }
    out.q_hat = used ? std::exp(lg / static_cast<double>(used)) : 0.0;
  }
  if (!out.converged) out.q_hat = std::max(out.q_hat, 1.0);
  return out;
}

double grid_residual(const FourierField& b, const FourierField& f, const FourierField& u, double lambda) {
  const int d = b.dim(), M = 2 * b.cutoff() + 1;
  double worst = 0.0, fmax = 0.0;
  for (int c = 0; c < d; ++c) {
    FourierField uc = u.component(c);
    std::vector<double> r = uc.to_grid(0, M);
    for (auto& v : r) v *= -lambda;
    for (int a = 0; a < d; ++a) {
      FourierField da = uc.derivative(a);
      const auto g = da.to_grid(0, M);
      const auto gaa = da.derivative(a).to_grid(0, M);
      const auto ba = b.to_grid(a, M);
      for (std::size_t p = 0; p < r.size(); ++p) r[p] += gaa[p] + ba[p] * g[p];
    }
    const auto fg = f.to_grid(c, M);
    for (std::size_t p = 0; p < r.size(); ++p) {
      worst = std::max(worst, std::abs(r[p] - fg[p]));
      fmax = std::max(fmax, std::abs(fg[p]));
    }
  }
  return fmax > 0.0 ? worst / fmax : worst;
}

double grad_sup_norm(const std::vector<FourierField>& grad, int M) {
  const int d = static_cast<int>(grad.size());
  std::vector<std::vector<double>> g(static_cast<std::size_t>(d * d));
  for (int a = 0; a < d; ++a)
    for (int c = 0; c < d; ++c) g[static_cast<std::size_t>(c * d + a)] = grad[static_cast<std::size_t>(a)].to_grid(c, M);
  double worst = 0.0;
  Mat J(d, d);
  for (std::size_t p = 0; p < g[0].size(); ++p) {
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) J(i, j) = g[static_cast<std::size_t>(i * d + j)][p];
    Eigen::JacobiSVD<Mat> svd(J);
    worst = std::max(worst, svd.singularValues()(0));
  }
  return worst;
}

std::vector<FourierField> gradients(const FourierField& u) {
  std::vector<FourierField> g;
  for (int a = 0; a < u.dim(); ++a) g.push_back(u.derivative(a));
  return g;
}

}  // namespace

double divergence_defect(const FourierField& b) {
  const int d = b.dim();
  if (b.components() != d) throw ShapeError("divergence: vector field expected");
  std::vector<int> k(static_cast<std::size_t>(d));
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < b.n_modes(); ++i) {
    b.mode(i, k.data());
    cplx s(0.0, 0.0);
    for (int a = 0; a < d; ++a) {
      s += static_cast<double>(k[static_cast<std::size_t>(a)]) * b.at(a, i);
      scale = std::max(scale, std::abs(b.at(a, i)));
    }
    worst = std::max(worst, std::abs(s));
  }
  return scale > 0.0 ? worst / scale : 0.0;
}

Vec ZvonkinTransform::map(const Vec& x) const {
  PointEvaluator ev(u.dim(), u.cutoff());
  ev.set_point(x.data());
  Vec out = x;
  for (int c = 0; c < u.dim(); ++c) out(c) += ev.value(u, c);
  return out;
}

Mat ZvonkinTransform::jacobian(const Vec& x) const {
  const int d = u.dim();
  PointEvaluator ev(d, u.cutoff());
  ev.set_point(x.data());
  Mat J = Mat::Identity(d, d);
  for (int a = 0; a < d; ++a)
    for (int c = 0; c < d; ++c) J(c, a) += ev.value(grad[static_cast<std::size_t>(a)], c);
  return J;
}

Vec ZvonkinTransform::inverse(const Vec& y, int max_iter, double tol) const {
  const int d = u.dim();
  PointEvaluator ev(d, u.cutoff());
  Vec x = y;
  Mat J(d, d);
  Vec r(d);
  for (int it = 0; it < max_iter; ++it) {
    ev.set_point(x.data());
    for (int c = 0; c < d; ++c) {
      r(c) = x(c) + ev.value(u, c) - y(c);
      for (int a = 0; a < d; ++a)
        J(c, a) = (a == c ? 1.0 : 0.0) + ev.value(grad[static_cast<std::size_t>(a)], c);
    }
    if (r.lpNorm<Eigen::Infinity>() <= tol) return x;
    x -= J.partialPivLu().solve(r);
  }
  ev.set_point(x.data());
  for (int c = 0; c < d; ++c) r(c) = x(c) + ev.value(u, c) - y(c);
  if (r.lpNorm<Eigen::Infinity>() <= tol) return x;
  throw NumericalError("Zvonkin inverse: Newton did not converge");
}

ZvonkinTransform zvonkin_solve(const FourierField& b, const FourierField& f, const ZvonkinOptions& opts) {
  const int d = b.dim();
  if (b.components() != d || f.dim() != d || f.components() != d)
    throw ShapeError("zvonkin: b and f must be d-component fields on T^d");
  if (opts.lambda0 < 1.0) throw PreconditionError("zvonkin: lambda must be at least 1");
  if (divergence_defect(b) > 1e-12) throw PreconditionError("zvonkin: drift is not divergence free");
  const FourierField fN = f.with_cutoff(b.cutoff());
  bool need_grad = opts.require_grad_bound > 0;
  if (opts.require_grad_bound < 0) {
    FourierField negb = b;
    for (int c = 0; c < d; ++c)
      for (std::size_t i = 0; i < b.n_modes(); ++i) negb.at(c, i) = -b.at(c, i);
    need_grad = fN.max_abs_diff(negb) == 0.0;
  }
  const int Meval = 4 * b.cutoff() + 1;
  double lambda = opts.lambda0;
  for (int dbl = 0; dbl <= opts.max_doublings; ++dbl, lambda *= 2.0) {
    SolveOutcome s = fixed_point(b, fN, lambda, opts);
    if (!s.converged || s.q_hat >= 1.0) continue;
    ZvonkinTransform zv;
    zv.lambda = lambda;
    zv.theta = opts.theta;
    zv.u = s.u;
    zv.grad = gradients(zv.u);
    zv.q_hat = s.q_hat;
    zv.iterations = s.iterations;
    zv.doublings = dbl;
    zv.grad_sup = grad_sup_norm(zv.grad, Meval);
    if (need_grad && zv.grad_sup > 0.5) continue;
    zv.residual = grid_residual(b, fN, zv.u, lambda);
    zv.u_norm = coef_norm(zv.u);
    zv.trend_expected = std::pow(2.0, -opts.theta / 2.0);
    if (opts.trend) {
      SolveOutcome s2 = fixed_point(b, fN, 2.0 * lambda, opts);
      zv.u_norm_doubled = coef_norm(s2.u);
    }
    return zv;
  }
  throw NumericalError("zvonkin: no contraction with |grad u| <= 1/2 within the lambda budget");
}

TransformedSystem zvonkin_transform_system(const FourierField& b, const FourierField& c, const ZvonkinTransform& zv,
                                           int M) {
  const int d = zv.dim();
  if (b.dim() != d || c.dim() != d || c.components() != d) throw ShapeError("zvonkin transform: dimension mismatch");
  const int N = zv.u.cutoff();
  if (M <= 0) M = 4 * N + 1;
  TransformedSystem out;
  out.M = M;
  std::size_t npts = 1;
  for (int a = 0; a < d; ++a) npts *= static_cast<std::size_t>(M);
  out.b_grid.assign(static_cast<std::size_t>(d), std::vector<double>(npts));
  out.c_grid.assign(static_cast<std::size_t>(d), std::vector<double>(npts));
  out.sigma_grid.assign(static_cast<std::size_t>(d * d), std::vector<double>(npts));
  std::vector<std::vector<double>> a_grid(static_cast<std::size_t>(d * d), std::vector<double>(npts));
  PointEvaluator ev(d, N);
  PointEvaluator evc(d, c.cutoff());
  Vec y(d), cv(d);
  double rt = 0.0, emin = 1e300, emax = 0.0;
  for (std::size_t p = 0; p < npts; ++p) {
    std::size_t rem = p;
    for (int a = d - 1; a >= 0; --a) {
      y(a) = static_cast<double>(rem % static_cast<std::size_t>(M)) / static_cast<double>(M);
      rem /= static_cast<std::size_t>(M);
    }
    const Vec x = zv.inverse(y);
    ev.set_point(x.data());
    evc.set_point(x.data());
    Mat K = Mat::Identity(d, d);
    for (int i = 0; i < d; ++i) {
      out.b_grid[static_cast<std::size_t>(i)][p] = zv.lambda * ev.value(zv.u, i);
      cv(i) = evc.value(c, i);
      for (int a = 0; a < d; ++a) K(i, a) += ev.value(zv.grad[static_cast<std::size_t>(a)], i);
    }
    rt = std::max(rt, (zv.map(x) - y).lpNorm<Eigen::Infinity>());
    const Vec kc = K * cv;
    const Mat A = K * K.transpose();
    for (int i = 0; i < d; ++i) {
      out.c_grid[static_cast<std::size_t>(i)][p] = kc(i);
      for (int j = 0; j < d; ++j) {
        out.sigma_grid[static_cast<std::size_t>(i * d + j)][p] = K(i, j);
        a_grid[static_cast<std::size_t>(i * d + j)][p] = A(i, j);
      }
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(A, Eigen::EigenvaluesOnly);
    emin = std::min(emin, es.eigenvalues()(0));
    emax = std::max(emax, es.eigenvalues()(d - 1));
  }
  out.roundtrip = rt;
  out.ellipticity_min = emin;
  out.ellipticity_max = emax;
  const int N2 = std::min(2 * N, (M - 1) / 2);
  out.b_hat = FourierField::from_grid(out.b_grid, d, M, N2);
  out.c_hat = FourierField::from_grid(out.c_grid, d, M, N2);
  out.sigma_hat = FourierField::from_grid(out.sigma_grid, d, M, N2);
  out.a_hat = FourierField::from_grid(a_grid, d, M, N2);
  return out;
}

FourierField synth_divergence_free_drift(int d, double alpha, int N, double amplitude, std::uint64_t seed) {
  if (d < 2) throw PreconditionError("divergence-free synthesis needs d >= 2");
  if (!(alpha > -1.0 && alpha < 0.0)) throw PreconditionError("divergence-free synthesis needs alpha in (-1, 0)");
  FourierField b(d, N, d);
  if (amplitude == 0.0) return b;
  RngStream rng(seed, 0, 0);
  std::vector<int> k(static_cast<std::size_t>(d)), nk(static_cast<std::size_t>(d));
  Eigen::VectorXcd z(d);
  Vec kv(d);
  for (std::size_t i = 0; i < b.n_modes(); ++i) {
    b.mode(i, k.data());
    int first = 0;
    for (int a = 0; a < d; ++a)
      if (k[static_cast<std::size_t>(a)] != 0) {
        first = k[static_cast<std::size_t>(a)];
        break;
      }
    if (first <= 0) continue;
    for (int a = 0; a < d; ++a) {
      kv(a) = k[static_cast<std::size_t>(a)];
      const double re = rng.normal();
      const double im = rng.normal();
      z(a) = cplx(re, im);
    }
    const double k2 = kv.squaredNorm();
    z -= kv.cast<cplx>() * (kv.cast<cplx>().dot(z) / k2);
    z *= std::pow(std::sqrt(k2), -(alpha + d / 2.0));
    for (int a = 0; a < d; ++a) nk[static_cast<std::size_t>(a)] = -k[static_cast<std::size_t>(a)];
    const std::size_t j = b.index(nk.data());
    for (int a = 0; a < d; ++a) {
      b.at(a, i) = z(a);
      b.at(a, j) = std::conj(z(a));
    }
  }
  const double rms = coef_norm(b);
  for (int a = 0; a < d; ++a)
    for (std::size_t i = 0; i < b.n_modes(); ++i) b.at(a, i) *= amplitude / rms;
  return b;
}

}  // namespace homoscale
