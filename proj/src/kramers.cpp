#include "homoscale/kramers.hpp"

#include "homoscale/effective.hpp"
#include "homoscale/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace homoscale {

namespace {

Estimate mean_se(const std::vector<double>& v) {
  std::vector<double> g;
  for (double e : v)
    if (std::isfinite(e)) g.push_back(e);
  if (g.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  const double n = static_cast<double>(g.size());
  double m = 0.0;
  for (double e : g) m += e;
  m /= n;
  double s = 0.0;
  for (double e : g) s += (e - m) * (e - m);
  return {m, n > 1 ? std::sqrt(s / (n - 1.0) / n) : 0.0};
}

ThermoCurve paired_curves(const TrajectoryEnsemble& ens, const TrajectoryEnsemble& ref,
                          const std::function<double(const double* x, const double* y)>& f,
                          const std::function<double(const double* y)>& fref) {
  if (ens.times != ref.times) throw PreconditionError("thermodynamic curves need matching time grids");
  if (ref.d != 0 || ens.d == 0) throw PreconditionError("expected a multiscale ensemble and a homogenized one");
  ThermoCurve c;
  c.t = ens.times;
  const std::size_t nt = ens.times.size();
  std::vector<double> v(ens.n_paths), r(ref.n_paths);
  for (std::size_t ti = 0; ti < nt; ++ti) {
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
      const double* z = ens.state(p, ti);
      v[p] = ens.failed[p] ? std::numeric_limits<double>::quiet_NaN() : f(z, z + ens.d);
    }
    for (std::size_t p = 0; p < ref.n_paths; ++p)
      r[p] = ref.failed[p] ? std::numeric_limits<double>::quiet_NaN() : fref(ref.state(p, ti));
    const Estimate a = mean_se(v), b = mean_se(r);
    c.value.push_back(a.mean);
    c.value_se.push_back(a.stderr_);
    c.reference.push_back(b.mean);
    c.reference_se.push_back(b.stderr_);
    c.gap.push_back(std::abs(a.mean - b.mean));
    c.gap_se.push_back(std::hypot(a.stderr_, b.stderr_));
  }
  return c;
}

}  // namespace

Mat LangevinSystem::A(const Vec& y) const { return sys->A(Vec::Zero(sys->d), y); }

Mat LangevinSystem::sigma(const Vec& y) const { return sys->sigma(Vec::Zero(sys->d), y); }

double LangevinSystem::U(const Vec& y) const {
  if (!sys->has_aux("U")) return 0.0;
  return sys->aux_field("U")(Vec::Zero(sys->d), y)(0, 0);
}

Mat LangevinSystem::Sigma(const Vec& y) const {
  const Mat s = sigma(y);
  return solve_lyapunov(A(y), s * s.transpose());
}

Vec LangevinSystem::A_h(const Vec& y) const {
  if (!sys->has_aux("lyap_h_grad")) throw PreconditionError("system declares no h");
  const Vec g = sys->aux_field("lyap_h_grad")(Vec::Zero(sys->d), y).col(0);
  return A(y).transpose().partialPivLu().solve(g);
}

LangevinSystem make_langevin(const MultiscaleSystem& sys) {
  if (!sys.flags.langevin || !sys.flags.linear_fast) throw PreconditionError("system is not a langevin preset");
  if (sys.d != sys.vartheta) throw PreconditionError("langevin systems need d = vartheta");
  LangevinSystem ls;
  ls.sys = std::make_shared<MultiscaleSystem>(sys);
  const int d = sys.d;
  const RowMat probes = probe_grid(d, 200);
  ls.kappa0 = std::numeric_limits<double>::infinity();
  ls.has_h = sys.has_aux("lyap_h") && sys.has_aux("lyap_h_grad");
  for (Eigen::Index i = 0; i < probes.rows(); ++i) {
    const Vec y = probes.row(i).transpose();
    ls.kappa0 = std::min(ls.kappa0, min_sym_eigenvalue(ls.A(y)));
    for (int j = 0; j < d; ++j) {
      const double h = 1e-5 * std::max(1.0, std::abs(y(j)));
      Vec yp = y, ym = y;
      yp(j) += h;
      ym(j) -= h;
      ls.kappa1 = std::max(ls.kappa1, ((ls.A(yp) - ls.A(ym)) / (2.0 * h)).cwiseAbs().maxCoeff());
    }
    if (ls.has_h) {
      const auto& hf = sys.aux_field("lyap_h");
      const Vec g = sys.aux_field("lyap_h_grad")(Vec::Zero(d), y).col(0);
      for (int j = 0; j < d; ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(y(j)));
        Vec yp = y, ym = y;
        yp(j) += h;
        ym(j) -= h;
        const double fd = (hf(Vec::Zero(d), yp)(0, 0) - hf(Vec::Zero(d), ym)(0, 0)) / (2.0 * h);
        ls.h_consistency = std::max(ls.h_consistency, std::abs(fd - g(j)) / (1.0 + std::abs(g(j))));
      }
    }
  }
  if (!(ls.kappa0 > 0.0)) throw PreconditionError("friction is not uniformly positive on the probes");
  return ls;
}

TrajectoryEnsemble sk_simulate(const LangevinSystem& ls, double eps, const Vec& v, const Vec& y0, double T,
                               double dt, std::size_t n_paths, std::uint64_t seed,
                               const std::vector<double>& output_times) {
  const int d = ls.dim();
  if (v.size() != d || y0.size() != d) throw ShapeError("sk_simulate: v and y0 need dimension d");
  Vec z0(2 * d);
  z0.head(d) = eps * v;
  z0.tail(d) = y0;
  IntegrationOptions o;
  o.dt = dt;
  o.output_times = output_times;
  return integrate_multiscale(*ls.sys, eps, z0, T, n_paths, seed, o);
}

TrajectoryEnsemble sk_homogenized(const LangevinSystem& ls, const Vec& y0, double T, double dt, std::size_t n_paths,
                                  std::uint64_t seed, const std::vector<double>& output_times) {
  auto model = std::make_shared<EffectiveModel>(ls.sys, EffectiveModel::Route::SK);
  IntegrationOptions o;
  o.output_times = output_times;
  return integrate_homogenized([model](const double* y, double* out) { model->drift(y, out); },
                               [model](const double* y, double* out) { model->sigma_bar(y, out); }, ls.dim(), y0, T,
                               dt, n_paths, seed, o);
}

ThermoCurve energy_curve(const TrajectoryEnsemble& ens, const LangevinSystem& ls, const TrajectoryEnsemble& ref) {
  const int d = ls.dim();
  return paired_curves(
      ens, ref,
      [&](const double* x, const double* y) {
        double k = 0.0;
        for (int i = 0; i < d; ++i) k += 0.5 * x[i] * x[i];
        return k + ls.U(Eigen::Map<const Vec>(y, d));
      },
      [&](const double* y) {
        const Vec yy = Eigen::Map<const Vec>(y, d);
        return 0.5 * ls.Sigma(yy).trace() + ls.U(yy);
      });
}

ThermoCurve entropy_production_curve(const TrajectoryEnsemble& ens, const LangevinSystem& ls,
                                     const TrajectoryEnsemble& ref) {
  const int d = ls.dim();
  return paired_curves(
      ens, ref,
      [&](const double* x, const double* y) {
        const Vec xx = Eigen::Map<const Vec>(x, d);
        return xx.dot(ls.A(Eigen::Map<const Vec>(y, d)) * xx);
      },
      [&](const double* y) {
        const Mat s = ls.sigma(Eigen::Map<const Vec>(y, d));
        return (s * s.transpose()).trace();
      });
}

double trace_identity_check(const Mat& A, const Mat& sigma) {
  const Mat ss = sigma * sigma.transpose();
  const Mat S = solve_lyapunov(A, ss);
  return std::abs((A * S).trace() - ss.trace());
}

double kl_correction(const Mat& Sigma) {
  if (Sigma.rows() != Sigma.cols()) throw ShapeError("kl_correction: square matrix expected");
  const Mat S = 0.5 * (Sigma + Sigma.transpose());
  Eigen::LLT<Mat> llt(S);
  if (llt.info() != Eigen::Success) throw PreconditionError("kl_correction: covariance is not positive definite");
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < S.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return std::max(0.0, 0.5 * (S.trace() - logdet - static_cast<double>(S.rows())));
}

}  // namespace homoscale
