#include "homoscale/frozen.hpp"

#include "homoscale/linalg.hpp"
#include "homoscale/rng.hpp"
#include "homoscale/sde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace homoscale {

namespace {

std::vector<double> x_zero(int d) { return std::vector<double>(static_cast<std::size_t>(d), 0.0); }

Mat frozen_covariance(const MultiscaleSystem& sys, const Vec& y) {
  const Mat A = sys.A(Vec::Zero(sys.d), y);
  auto xs = x_zero(sys.d);
  const Mat s = sys.sigma(Eigen::Map<Vec>(xs.data(), sys.d), y);
  return solve_lyapunov(A, s * s.transpose());
}

// Mean and standard error per column of samples.
std::vector<Estimate> column_stats(const RowMat& v, double ess) {
  std::vector<Estimate> out(static_cast<std::size_t>(v.cols()));
  const double n = static_cast<double>(v.rows());
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    const double m = v.col(c).mean();
    const double var = v.rows() > 1 ? (v.col(c).array() - m).square().sum() / (n - 1.0) : 0.0;
    out[static_cast<std::size_t>(c)] = {m, std::sqrt(var / std::max(ess, 1.0))};
  }
  return out;
}

}  // namespace

int FrozenEquilibrium::dim() const {
  return kind == Kind::Gaussian ? static_cast<int>(cov.rows()) : static_cast<int>(particles.cols());
}

RowMat FrozenEquilibrium::sample(std::size_t n, std::uint64_t seed) const {
  const int d = dim();
  RowMat out(static_cast<Eigen::Index>(n), d);
  if (kind == Kind::Gaussian) {
    const Mat L = psd_factor(cov);
    RngStream rng(seed, 0, 0);
    Vec z(d);
    for (std::size_t i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) z(k) = rng.normal();
      out.row(static_cast<Eigen::Index>(i)) = (L * z).transpose();
    }
  } else {
    if (particles.rows() == 0) throw PreconditionError("empirical equilibrium has no particles");
    for (std::size_t i = 0; i < n; ++i)
      out.row(static_cast<Eigen::Index>(i)) = particles.row(static_cast<Eigen::Index>(i % static_cast<std::size_t>(particles.rows())));
  }
  return out;
}

std::vector<Estimate> FrozenEquilibrium::expect_vec(const std::function<void(const double*, double*)>& f,
                                                    int n_out) const {
  const int d = dim();
  std::vector<double> buf(static_cast<std::size_t>(n_out));
  if (kind == Kind::Gaussian && d <= 3) {
    const QuadratureRule q = gaussian_tensor_rule(Vec::Zero(d), cov, 20);
    std::vector<Estimate> out(static_cast<std::size_t>(n_out));
    std::vector<double> x(static_cast<std::size_t>(d));
    for (Eigen::Index i = 0; i < q.points.rows(); ++i) {
      for (int k = 0; k < d; ++k) x[static_cast<std::size_t>(k)] = q.points(i, k);
      f(x.data(), buf.data());
      for (int c = 0; c < n_out; ++c) out[static_cast<std::size_t>(c)].mean += q.weights(i) * buf[static_cast<std::size_t>(c)];
    }
    return out;
  }
  const RowMat pts = kind == Kind::Gaussian ? sample(20000, 0x5eed) : particles;
  RowMat vals(pts.rows(), n_out);
  std::vector<double> x(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    for (int k = 0; k < d; ++k) x[static_cast<std::size_t>(k)] = pts(i, k);
    f(x.data(), buf.data());
    for (int c = 0; c < n_out; ++c) vals(i, c) = buf[static_cast<std::size_t>(c)];
  }
  return column_stats(vals, kind == Kind::Gaussian ? static_cast<double>(pts.rows()) : ess);
}

Estimate FrozenEquilibrium::expect(const XFn& f) const {
  return expect_vec([&f](const double* x, double* o) { o[0] = f(x); }, 1)[0];
}

MultiscaleSystem frozen_system(const MultiscaleSystem& sys) {
  MultiscaleSystem fz = sys;
  fz.name = sys.name + "/frozen";
  fz.c = CoefficientField::zeros(sys.d, 1);
  fz.F = CoefficientField::zeros(sys.vartheta, 1);
  fz.H = CoefficientField::zeros(sys.vartheta, 1);
  fz.G = CoefficientField::zeros(sys.vartheta, sys.m);
  fz.flags.averaging = true;
  finalize_system(fz);
  return fz;
}

FrozenEquilibrium frozen_equilibrium(const MultiscaleSystem& sys, const Vec& y, std::size_t n, double burn_in,
                                     std::uint64_t seed) {
  if (y.size() != sys.vartheta) throw ShapeError("frozen_equilibrium: y has wrong dimension");
  FrozenEquilibrium eq;
  eq.y = y;
  if (sys.flags.linear_fast && sys.structure.fast_x_free_noise) {
    eq.kind = FrozenEquilibrium::Kind::Gaussian;
    eq.cov = frozen_covariance(sys, y);
    eq.provenance = "lyapunov";
    return eq;
  }
  if (n < 100) throw PreconditionError("frozen_equilibrium: at least 100 particles required");
  const MultiscaleSystem fz = frozen_system(sys);
  const int d = sys.d;
  Vec z0(d + sys.vartheta);
  z0.head(d).setZero();
  z0.tail(sys.vartheta) = y;

  // pilot run: autocorrelation of |x|^2 at spacing 0.1 decides the thinning
  const std::size_t chains = 256;
  const double spacing = 0.1;
  const std::size_t pilot_len = 200;
  std::vector<double> grid;
  grid.push_back(0.0);
  grid.push_back(burn_in);
  for (std::size_t i = 1; i <= pilot_len; ++i) grid.push_back(burn_in + spacing * static_cast<double>(i));
  IntegrationOptions po;
  po.output_times = grid;
  po.dt = std::min(0.01, spacing / 10.0);
  std::vector<double> r2(chains * pilot_len, 0.0);
  simulate_multiscale(fz, 1.0, z0, grid.back(), chains, derive_seed(seed, 1), po,
                      [&](std::size_t p, std::size_t ti, const double* z) {
                        if (ti < 2) return;
                        double s = 0.0;
                        for (int k = 0; k < d; ++k) s += z[k] * z[k];
                        r2[p * pilot_len + (ti - 2)] = s;
                      });
  const double mean = std::accumulate(r2.begin(), r2.end(), 0.0) / static_cast<double>(r2.size());
  double var = 0.0;
  for (double v : r2) var += (v - mean) * (v - mean);
  var /= static_cast<double>(r2.size());
  std::size_t k = 1;
  if (var > 0.0) {
    for (; k < pilot_len / 2; ++k) {
      double c = 0.0;
      std::size_t cnt = 0;
      for (std::size_t p = 0; p < chains; ++p)
        for (std::size_t i = 0; i + k < pilot_len; ++i, ++cnt)
          c += (r2[p * pilot_len + i] - mean) * (r2[p * pilot_len + i + k] - mean);
      if (c / static_cast<double>(cnt) / var < 0.2) break;
    }
  }
  eq.thinning = k;
  const std::size_t per_chain = (n + chains - 1) / chains;
  std::vector<double> og;
  og.push_back(0.0);
  og.push_back(burn_in);
  for (std::size_t i = 1; i < per_chain; ++i) og.push_back(burn_in + spacing * static_cast<double>(k * i));
  po.output_times = og;
  eq.particles.resize(static_cast<Eigen::Index>(chains * per_chain), d);
  std::vector<std::uint8_t> ok(chains * per_chain, 1);
  auto res = simulate_multiscale(fz, 1.0, z0, og.back() > 0 ? og.back() : burn_in, chains, derive_seed(seed, 2), po,
                                 [&](std::size_t p, std::size_t ti, const double* z) {
                                   if (ti < 1) return;
                                   const std::size_t row = p * per_chain + (ti - 1);
                                   for (int j = 0; j < d; ++j) eq.particles(static_cast<Eigen::Index>(row), j) = z[j];
                                 });
  if (res.n_failed > 0) throw NumericalError("frozen simulation blew up");
  eq.particles.conservativeResize(static_cast<Eigen::Index>(n), d);
  eq.kind = FrozenEquilibrium::Kind::Empirical;
  eq.ess = static_cast<double>(n);
  eq.provenance = "frozen-simulation";
  return eq;
}

Estimate centering_residual(const MultiscaleSystem& sys, const Vec& y, const FrozenEquilibrium& eq) {
  const int vt = sys.vartheta;
  if (eq.kind == FrozenEquilibrium::Kind::Gaussian && sys.structure.slow_affine_x) {
    // affine in x against a centered Gaussian: the mean is H(0, y)
    auto xs = x_zero(sys.d);
    const Mat h0 = sys.H(Eigen::Map<Vec>(xs.data(), sys.d), y);
    return {h0.norm(), 0.0};
  }
  const Vec yy = y;
  auto ests = eq.expect_vec([&sys, yy](const double* x, double* o) { sys.H.eval(x, yy.data(), o); }, vt);
  double s = 0.0, se2 = 0.0;
  for (const auto& e : ests) {
    s += e.mean * e.mean;
    se2 += e.stderr_ * e.stderr_;
  }
  return {std::sqrt(s), std::sqrt(se2)};
}

MixingProfile estimate_mixing(const MultiscaleSystem& sys, const Vec& y, const std::vector<XFn>& bank,
                              const std::vector<double>& lags, std::size_t n_paths, std::uint64_t seed,
                              const FrozenEquilibrium* eq_in) {
  if (bank.empty()) throw PreconditionError("estimate_mixing: empty test bank");
  if (lags.empty()) throw PreconditionError("estimate_mixing: empty lag grid");
  for (std::size_t i = 0; i < lags.size(); ++i)
    if (!(lags[i] > 0.0) || (i > 0 && !(lags[i] > lags[i - 1])))
      throw PreconditionError("estimate_mixing: lags must be positive and increasing");
  const int d = sys.d;
  FrozenEquilibrium eq_local;
  if (!eq_in) eq_local = frozen_equilibrium(sys, y, 4000, 20.0, derive_seed(seed, 11));
  const FrozenEquilibrium& eq = eq_in ? *eq_in : eq_local;
  std::vector<double> target;
  for (const auto& f : bank) target.push_back(eq.expect(f).mean);
  const MultiscaleSystem fz = frozen_system(sys);

  // dispersed starts: origin and +-2 along each axis
  std::vector<Vec> starts;
  starts.push_back(Vec::Zero(d));
  for (int k = 0; k < d; ++k)
    for (double s : {2.0, -2.0}) {
      Vec v = Vec::Zero(d);
      v(k) = s;
      starts.push_back(v);
    }
  std::vector<double> grid{0.0};
  grid.insert(grid.end(), lags.begin(), lags.end());
  IntegrationOptions opts;
  opts.output_times = grid;
  const Scheme sch = resolve_scheme(fz, Scheme::Auto);
  if (sch != Scheme::LinearExact) opts.dt = std::min(lags.front() / 4.0, sch == Scheme::Explicit ? 0.05 : 0.01);

  MixingProfile prof;
  prof.lags = lags;
  prof.decay.assign(lags.size(), 0.0);
  prof.stderr_.assign(lags.size(), 0.0);
  const std::size_t nb = bank.size(), nl = lags.size();
  for (const auto& x0 : starts) {
    Vec z0(d + sys.vartheta);
    z0.head(d) = x0;
    z0.tail(sys.vartheta) = y;
    std::vector<double> sum(nb * nl, 0.0), sum2(nb * nl, 0.0);
    std::vector<std::vector<double>> bs(n_blocks_for(n_paths), std::vector<double>(2 * nb * nl, 0.0));
    auto res = simulate_multiscale(fz, 1.0, z0, lags.back(), n_paths, seed, opts,
                                   [&](std::size_t p, std::size_t ti, const double* z) {
                                     if (ti == 0) return;
                                     auto& acc = bs[p / kPathBlock];
                                     for (std::size_t b = 0; b < nb; ++b) {
                                       const double v = bank[b](z) - target[b];
                                       acc[b * nl + ti - 1] += v;
                                       acc[nb * nl + b * nl + ti - 1] += v * v;
                                     }
                                   });
    if (res.n_failed > 0) throw NumericalError("estimate_mixing: frozen simulation blew up");
    for (const auto& acc : bs)
      for (std::size_t i = 0; i < nb * nl; ++i) {
        sum[i] += acc[i];
        sum2[i] += acc[nb * nl + i];
      }
    const double n = static_cast<double>(n_paths);
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t l = 0; l < nl; ++l) {
        const double m = sum[b * nl + l] / n;
        const double var = std::max(0.0, sum2[b * nl + l] / n - m * m) * n / std::max(1.0, n - 1.0);
        if (std::abs(m) > prof.decay[l]) {
          prof.decay[l] = std::abs(m);
          prof.stderr_[l] = std::sqrt(var / n);
        }
      }
  }

  // fit over lags where the decay clears twice its standard error
  std::vector<double> t, ly;
  for (std::size_t l = 0; l < nl; ++l)
    if (prof.decay[l] > 2.0 * prof.stderr_[l] && prof.decay[l] > 0.0) {
      t.push_back(lags[l]);
      ly.push_back(std::log(prof.decay[l]));
    }
  if (t.size() < 3) return prof;
  auto fit = [&](const std::vector<double>& xs, double& slope, double& resid) {
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxx += (xs[i] - mx) * (xs[i] - mx);
      sxy += (xs[i] - mx) * (ly[i] - my);
    }
    slope = sxy / sxx;
    resid = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double e = ly[i] - my - slope * (xs[i] - mx);
      resid += e * e;
    }
    resid = std::sqrt(resid / n);
  };
  std::vector<double> lt(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) lt[i] = std::log(t[i]);
  double se, re, sp, rp;
  fit(t, se, re);
  fit(lt, sp, rp);
  if (re <= rp && se < 0.0) {
    prof.model = "exponential";
    prof.rate = -se;
    prof.residual = re;
  } else if (sp < 0.0) {
    prof.model = "polynomial";
    prof.rate = -sp;
    prof.residual = rp;
  }
  return prof;
}

MomentTable moment_scan(const MultiscaleSystem& sys, const std::vector<double>& eps_grid,
                        const std::vector<double>& t_grid, double r, const Vec& z0, std::size_t n_paths,
                        std::uint64_t seed, bool slow_only, double bound) {
  if (eps_grid.empty() || t_grid.empty()) throw PreconditionError("moment_scan: empty grid");
  MomentTable tab;
  tab.eps = eps_grid;
  tab.t = t_grid;
  std::vector<double> grid = t_grid;
  if (grid.front() != 0.0) grid.insert(grid.begin(), 0.0);
  const std::size_t off = grid.size() - t_grid.size();
  const std::size_t nt = t_grid.size();
  const int d = sys.d, n = sys.d + sys.vartheta;
  const int k0 = slow_only ? d : 0;
  for (double eps : eps_grid) {
    IntegrationOptions opts;
    opts.output_times = grid;
    std::vector<std::vector<double>> bs(n_blocks_for(n_paths), std::vector<double>(2 * nt, 0.0));
    std::vector<std::vector<double>> cnt(n_blocks_for(n_paths), std::vector<double>(nt, 0.0));
    auto res = simulate_multiscale(sys, eps, z0, grid.back(), n_paths, seed, opts,
                                   [&](std::size_t p, std::size_t ti, const double* z) {
                                     if (ti < off) return;
                                     double s = 0.0;
                                     for (int k = k0; k < n; ++k) s += z[k] * z[k];
                                     if (!std::isfinite(s)) return;
                                     const double v = 1.0 + std::pow(std::sqrt(s), r);
                                     auto& acc = bs[p / kPathBlock];
                                     acc[ti - off] += v;
                                     acc[nt + ti - off] += v * v;
                                     cnt[p / kPathBlock][ti - off] += 1.0;
                                   });
    tab.failed.push_back(res.n_failed);
    for (std::size_t i = 0; i < nt; ++i) {
      double s = 0.0, s2 = 0.0, c = 0.0;
      for (std::size_t b = 0; b < bs.size(); ++b) {
        s += bs[b][i];
        s2 += bs[b][nt + i];
        c += cnt[b][i];
      }
      const double m = c > 0 ? s / c : std::numeric_limits<double>::quiet_NaN();
      const double var = c > 1 ? std::max(0.0, s2 / c - m * m) * c / (c - 1.0) : 0.0;
      tab.moment.push_back(m);
      tab.stderr_.push_back(c > 0 ? std::sqrt(var / c) : 0.0);
    }
  }
  tab.max = *std::max_element(tab.moment.begin(), tab.moment.end());
  tab.min = *std::min_element(tab.moment.begin(), tab.moment.end());
  tab.within_bound = tab.max <= bound;
  return tab;
}

}  // namespace homoscale
