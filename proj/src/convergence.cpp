#include "homoscale/convergence.hpp"

#include "homoscale/frozen.hpp"
#include "homoscale/linalg.hpp"
#include "homoscale/rng.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

namespace homoscale {

namespace {

constexpr std::uint64_t kReferenceTag = 0x7265666572656e63ULL;

// Output grid with 0 prepended when missing; offset maps t_grid indices.
std::vector<double> with_origin(const std::vector<double>& t, std::size_t& offset) {
  if (t.empty()) throw PreconditionError("empty time grid");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1])) throw PreconditionError("time grid must be strictly increasing");
  if (t.front() < 0.0) throw PreconditionError("time grid must be non-negative");
  std::vector<double> g = t;
  offset = 0;
  if (g.front() != 0.0) {
    g.insert(g.begin(), 0.0);
    offset = 1;
  }
  return g;
}

// Per-time sums over non-failed paths, reduced in block order.
struct CurveAccumulator {
  std::size_t nt;
  std::vector<std::vector<double>> sum, sum2, path_buf;
  std::vector<double> count;
  CurveAccumulator(std::size_t n_paths, std::size_t nt_)
      : nt(nt_), sum(n_blocks_for(n_paths), std::vector<double>(nt_, 0.0)),
        sum2(n_blocks_for(n_paths), std::vector<double>(nt_, 0.0)),
        path_buf(n_blocks_for(n_paths), std::vector<double>(nt_, 0.0)), count(n_blocks_for(n_paths), 0.0) {}
  void put(std::size_t p, std::size_t ti, double v) {
    const std::size_t b = p / kPathBlock;
    path_buf[b][ti] = v;
    if (ti + 1 == nt) {
      for (double e : path_buf[b])
        if (!std::isfinite(e)) return;
      for (std::size_t i = 0; i < nt; ++i) {
        sum[b][i] += path_buf[b][i];
        sum2[b][i] += path_buf[b][i] * path_buf[b][i];
      }
      count[b] += 1.0;
    }
  }
  std::vector<Estimate> result() const {
    std::vector<Estimate> out(nt);
    double c = 0.0;
    std::vector<double> s(nt, 0.0), s2(nt, 0.0);
    for (std::size_t b = 0; b < sum.size(); ++b) {
      c += count[b];
      for (std::size_t i = 0; i < nt; ++i) {
        s[i] += sum[b][i];
        s2[i] += sum2[b][i];
      }
    }
    if (c < 1.0) throw NumericalError("every path failed");
    for (std::size_t i = 0; i < nt; ++i) {
      const double m = s[i] / c;
      const double var = c > 1.0 ? std::max(0.0, s2[i] / c - m * m) * c / (c - 1.0) : 0.0;
      out[i] = {m, std::sqrt(var / c)};
    }
    return out;
  }
};

std::function<double(const double*)> gaussian_phibar(const MultiscaleSystem& sys, const TestObservable& phi) {
  const int d = sys.d, vt = sys.vartheta;
  auto A = sys.A;
  auto S = sys.sigma;
  auto f = phi.phi;
  return [A, S, f, d, vt](const double* yp) {
    const Vec y = Eigen::Map<const Vec>(yp, vt);
    const Vec x0 = Vec::Zero(d);
    const Mat s = S(x0, y);
    const Mat cov = solve_lyapunov(A(x0, y), s * s.transpose());
    const QuadratureRule q = gaussian_tensor_rule(Vec::Zero(d), cov, 20);
    double acc = 0.0;
    std::vector<double> x(static_cast<std::size_t>(d));
    for (Eigen::Index i = 0; i < q.points.rows(); ++i) {
      for (int k = 0; k < d; ++k) x[static_cast<std::size_t>(k)] = q.points(i, k);
      acc += q.weights(i) * f(x.data(), yp);
    }
    return acc;
  };
}

std::vector<Estimate> multiscale_curve(const MultiscaleSystem& sys, const std::function<double(const double*, const double*)>& f,
                                       double eps, const std::vector<double>& grid, const Vec& z0, std::size_t n_paths,
                                       std::uint64_t seed, const IntegrationOptions& opts, std::size_t& n_failed) {
  IntegrationOptions o = opts;
  o.output_times = grid;
  CurveAccumulator acc(n_paths, grid.size());
  const int d = sys.d;
  auto res = simulate_multiscale(sys, eps, z0, grid.back(), n_paths, seed, o,
                                 [&](std::size_t p, std::size_t ti, const double* z) { acc.put(p, ti, f(z, z + d)); });
  n_failed = res.n_failed;
  return acc.result();
}

double ols_slope(const std::vector<double>& x, const std::vector<double>& y, double& intercept) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  intercept = my - slope * mx;
  return slope;
}

// Slope with a residual-bootstrap percentile interval.
void bootstrap_slope(const std::vector<double>& x, const std::vector<double>& y, std::uint64_t seed, double& slope,
                     double& icpt, double& lo, double& hi) {
  slope = ols_slope(x, y, icpt);
  std::vector<double> resid(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) resid[i] = y[i] - icpt - slope * x[i];
  boost::random::mt19937_64 gen(seed);
  boost::random::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  std::vector<double> slopes;
  std::vector<double> yb(x.size());
  for (int b = 0; b < 200; ++b) {
    for (std::size_t i = 0; i < x.size(); ++i) yb[i] = icpt + slope * x[i] + resid[pick(gen)];
    double ib;
    slopes.push_back(ols_slope(x, yb, ib));
  }
  std::sort(slopes.begin(), slopes.end());
  lo = slopes[4];     // 2.5%
  hi = slopes[194];   // 97.5%
  lo = std::min(lo, slope);
  hi = std::max(hi, slope);
}

struct TimeAverage {
  double mean = 0.0, se = 0.0, half_gap = 0.0, half_se = 0.0;
};

// Per-path time averages over [burn T, T]; paths act as batches.
TimeAverage path_time_average(std::size_t n_paths, const std::vector<double>& grid, std::size_t first,
                              const std::function<void(const PathObserver&)>& run,
                              const std::function<double(const double*)>& f) {
  const std::size_t nwin = grid.size() - first;
  const std::size_t mid = first + nwin / 2;
  std::vector<double> avg(n_paths, std::numeric_limits<double>::quiet_NaN()), h1(n_paths, 0.0), h2(n_paths, 0.0);
  std::vector<double> acc(n_paths, 0.0);
  run([&](std::size_t p, std::size_t ti, const double* z) {
    if (ti < first) return;
    const double v = f(z);
    acc[p] += v;
    if (ti < mid) h1[p] += v;
    else h2[p] += v;
    if (ti + 1 == grid.size()) avg[p] = acc[p] / static_cast<double>(nwin);
  });
  std::vector<double> good, diff;
  for (std::size_t p = 0; p < n_paths; ++p)
    if (std::isfinite(avg[p])) {
      good.push_back(avg[p]);
      diff.push_back(h1[p] / static_cast<double>(mid - first) - h2[p] / static_cast<double>(grid.size() - mid));
    }
  if (good.size() < 2) throw NumericalError("stationary average: too few surviving paths");
  auto ms = [](const std::vector<double>& v, double& m, double& se) {
    const double n = static_cast<double>(v.size());
    m = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double s = 0.0;
    for (double e : v) s += (e - m) * (e - m);
    se = std::sqrt(s / (n - 1.0) / n);
  };
  TimeAverage out;
  ms(good, out.mean, out.se);
  ms(diff, out.half_gap, out.half_se);
  return out;
}

std::vector<double> sample_grid(double T, double sample_dt, double burn_frac, std::size_t& first) {
  if (!(burn_frac > 0.0 && burn_frac < 0.9)) throw PreconditionError("burn_frac must lie in (0, 0.9)");
  if (!(T > 0.0) || !(sample_dt > 0.0)) throw PreconditionError("T_long and sample_dt must be positive");
  const std::size_t n = static_cast<std::size_t>(std::llround(T / sample_dt));
  std::vector<double> g(n + 1);
  for (std::size_t i = 0; i <= n; ++i) g[i] = T * static_cast<double>(i) / static_cast<double>(n);
  first = static_cast<std::size_t>(std::ceil(burn_frac * static_cast<double>(n)));
  return g;
}

void check_stationary(const TimeAverage& a, const std::string& side) {
  if (std::abs(a.half_gap) > 4.0 * a.half_se && a.half_se > 0.0)
    throw NumericalError(side + ": non-stationarity detected (half-window averages differ by " +
                         std::to_string(a.half_gap) + " > 4 SE)");
}

Estimate reference_stationary(const HomogenizedReference& ref, const std::function<double(const double*)>& phibar,
                              const Vec& y0, std::size_t n_paths, std::uint64_t seed, const StationaryOptions& s) {
  switch (ref.kind) {
    case HomogenizedReference::Kind::Closed:
      return {ref.closed(std::numeric_limits<double>::infinity()), 0.0};
    case HomogenizedReference::Kind::GaussianLinear: {
      const Vec mean = ref.drift.partialPivLu().solve(-ref.offset);
      const Mat cov = solve_lyapunov(-ref.drift, ref.G);
      const QuadratureRule q = gaussian_tensor_rule(mean, cov, 20);
      double acc = 0.0;
      for (Eigen::Index i = 0; i < q.points.rows(); ++i) {
        const Vec p = q.points.row(i).transpose();
        acc += q.weights(i) * phibar(p.data());
      }
      return {acc, 0.0};
    }
    default: {
      std::size_t first = 0;
      const auto grid = sample_grid(s.T_long, s.sample_dt, s.burn_frac, first);
      IntegrationOptions o;
      o.output_times = grid;
      const std::size_t n = s.ref_paths ? s.ref_paths : n_paths;
      const TimeAverage a = path_time_average(
          n, grid, first,
          [&](const PathObserver& obs) {
            simulate_homogenized(ref.F, ref.sigma_bar, ref.vartheta, y0, s.T_long, ref.dt, n, seed, o, obs);
          },
          phibar);
      check_stationary(a, "homogenized side");
      return {a.mean, a.se};
    }
  }
}

TimeAverage multiscale_stationary(const MultiscaleSystem& sys, const TestObservable& phi, double eps, const Vec& z0,
                                  std::size_t n_paths, std::uint64_t seed, const StationaryOptions& s,
                                  const IntegrationOptions& opts) {
  std::size_t first = 0;
  const auto grid = sample_grid(s.T_long, s.sample_dt, s.burn_frac, first);
  IntegrationOptions o = opts;
  o.output_times = grid;
  const int d = sys.d;
  const TimeAverage a = path_time_average(
      n_paths, grid, first,
      [&](const PathObserver& obs) { simulate_multiscale(sys, eps, z0, s.T_long, n_paths, seed, o, obs); },
      [&](const double* z) { return phi.phi(z, z + d); });
  check_stationary(a, "multiscale side");
  return a;
}

}  // namespace

std::function<double(const double* y)> resolve_phibar(const MultiscaleSystem& sys, const TestObservable& phi,
                                                      std::size_t inner, std::uint64_t seed) {
  if (phi.phibar) return phi.phibar;
  const int d = sys.d;
  if (phi.slow_only) {
    auto f = phi.phi;
    return [f, d](const double* y) {
      std::vector<double> x(static_cast<std::size_t>(d), 0.0);
      return f(x.data(), y);
    };
  }
  if (sys.flags.linear_fast && sys.structure.fast_x_free_noise && d <= 3) return gaussian_phibar(sys, phi);
  // nested Monte Carlo over the frozen equilibrium
  auto sp = std::make_shared<MultiscaleSystem>(sys);
  auto f = phi.phi;
  const int vt = sys.vartheta;
  const std::size_t n = std::max<std::size_t>(inner, 100);
  return [sp, f, vt, n, seed](const double* yp) {
    const Vec y = Eigen::Map<const Vec>(yp, vt);
    const FrozenEquilibrium eq = frozen_equilibrium(*sp, y, n, 20.0, seed);
    return eq.expect([&](const double* x) { return f(x, yp); }).mean;
  };
}

std::vector<Estimate> reference_curve(const HomogenizedReference& ref, const std::function<double(const double*)>& phibar,
                                      const Vec& y0, const std::vector<double>& t_grid, std::size_t n_paths,
                                      std::uint64_t seed) {
  std::vector<Estimate> out;
  switch (ref.kind) {
    case HomogenizedReference::Kind::Closed:
      if (!ref.closed) throw PreconditionError("closed reference needs a function");
      for (double t : t_grid) out.push_back({ref.closed(t), 0.0});
      return out;
    case HomogenizedReference::Kind::GaussianLinear: {
      const int vt = ref.vartheta;
      const Mat B = std::sqrt(2.0) * psd_sqrt(ref.G, 1e-8);
      for (double t : t_grid) {
        Vec mean = y0;
        Mat cov = Mat::Zero(vt, vt);
        if (t > 0.0) {
          const LinearTransition lt = linear_transition(ref.drift, ref.offset, B, t);
          mean = lt.E * y0 + lt.g;
          cov = lt.Q;
        }
        const QuadratureRule q = gaussian_tensor_rule(mean, cov, 20);
        double acc = 0.0;
        for (Eigen::Index i = 0; i < q.points.rows(); ++i) {
          const Vec p = q.points.row(i).transpose();
          acc += q.weights(i) * phibar(p.data());
        }
        out.push_back({acc, 0.0});
      }
      return out;
    }
    default: {
      std::size_t off = 0;
      const auto grid = with_origin(t_grid, off);
      IntegrationOptions o;
      o.output_times = grid;
      const std::size_t n = ref.n_paths ? ref.n_paths : n_paths;
      CurveAccumulator acc(n, grid.size());
      simulate_homogenized(ref.F, ref.sigma_bar, ref.vartheta, y0, grid.back(), ref.dt, n, seed, o,
                           [&](std::size_t p, std::size_t ti, const double* y) { acc.put(p, ti, phibar(y)); });
      auto all = acc.result();
      return std::vector<Estimate>(all.begin() + static_cast<std::ptrdiff_t>(off), all.end());
    }
  }
}

std::vector<ErrorCell> joint_law_error(const MultiscaleSystem& sys, const TestObservable& phi,
                                       const HomogenizedReference& ref, double eps, const std::vector<double>& t_grid,
                                       const Vec& z0, std::size_t n_paths, std::uint64_t seed,
                                       const IntegrationOptions& opts) {
  std::size_t off = 0;
  const auto grid = with_origin(t_grid, off);
  std::size_t failed = 0;
  const auto ms = multiscale_curve(sys, phi.phi, eps, grid, z0, n_paths, seed, opts, failed);
  const auto phibar = resolve_phibar(sys, phi);
  const Vec y0 = z0.tail(sys.vartheta);
  const auto rc = reference_curve(ref, phibar, y0, t_grid, n_paths, derive_seed(seed, kReferenceTag));
  std::vector<ErrorCell> cells;
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    ErrorCell c;
    c.eps = eps;
    c.t = t_grid[i];
    c.value = ms[i + off].mean;
    c.value_se = ms[i + off].stderr_;
    c.reference = rc[i].mean;
    c.reference_se = rc[i].stderr_;
    c.error = std::abs(c.value - c.reference);
    c.stderr_ = std::hypot(c.value_se, c.reference_se);
    cells.push_back(c);
  }
  return cells;
}

ConvergenceReport convergence_study(const MultiscaleSystem& sys, const TestObservable& phi,
                                    const HomogenizedReference& ref, const std::vector<double>& eps_grid,
                                    const std::vector<double>& t_grid, const Vec& z0, std::size_t n_paths,
                                    std::uint64_t seed, const IntegrationOptions& opts) {
  if (eps_grid.empty()) throw PreconditionError("empty eps grid");
  ConvergenceReport rep;
  rep.system = sys.name;
  rep.observable = phi.name;
  rep.eps = eps_grid;
  rep.t = t_grid;
  rep.seed = seed;
  rep.n_paths = n_paths;
  std::size_t off = 0;
  const auto grid = with_origin(t_grid, off);
  const auto phibar = resolve_phibar(sys, phi);
  const Vec y0 = z0.tail(sys.vartheta);
  // one reference curve serves every eps
  const auto rc = reference_curve(ref, phibar, y0, t_grid, n_paths, derive_seed(seed, kReferenceTag));
  for (double eps : eps_grid) {
    std::size_t failed = 0;
    const auto ms = multiscale_curve(sys, phi.phi, eps, grid, z0, n_paths, seed, opts, failed);
    rep.n_failed += failed;
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
      ErrorCell c;
      c.eps = eps;
      c.t = t_grid[i];
      c.value = ms[i + off].mean;
      c.value_se = ms[i + off].stderr_;
      c.reference = rc[i].mean;
      c.reference_se = rc[i].stderr_;
      c.error = std::abs(c.value - c.reference);
      c.stderr_ = std::hypot(c.value_se, c.reference_se);
      rep.cells.push_back(c);
    }
  }
  summarize_report(rep);
  return rep;
}

void summarize_report(ConvergenceReport& rep) {
  rep.sup_error.clear();
  rep.sup_stderr.clear();
  rep.sup_t.clear();
  for (std::size_t ie = 0; ie < rep.eps.size(); ++ie) {
    std::size_t best = 0;
    for (std::size_t it = 1; it < rep.t.size(); ++it)
      if (rep.cell(ie, it).error > rep.cell(ie, best).error) best = it;
    rep.sup_error.push_back(rep.cell(ie, best).error);
    rep.sup_stderr.push_back(rep.cell(ie, best).stderr_);
    rep.sup_t.push_back(rep.t[best]);
  }
  try {
    rep.rate = fit_rate(rep.eps, rep.sup_error, rep.sup_stderr, derive_seed(rep.seed, 2024));
    rep.rate_message.clear();
  } catch (const InsufficientData& e) {
    rep.rate.reset();
    rep.rate_message = e.what();
  }
}

RateFit fit_rate(const std::vector<double>& eps, const std::vector<double>& err, const std::vector<double>& se,
                 std::uint64_t seed) {
  if (eps.size() != err.size() || eps.size() != se.size()) throw ShapeError("fit_rate: length mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < eps.size(); ++i)
    if (eps[i] > 0.0 && err[i] > 2.0 * se[i] && err[i] > 0.0) {
      lx.push_back(std::log(eps[i]));
      ly.push_back(std::log(err[i]));
    }
  if (lx.size() < 3)
    throw InsufficientData("insufficient: " + std::to_string(lx.size()) + " eps values clear the noise floor (3 needed)");
  RateFit r;
  bootstrap_slope(lx, ly, seed, r.beta, r.log_c, r.ci_lo, r.ci_hi);
  r.n_used = lx.size();
  return r;
}

BoundaryLayerFit boundary_layer_fit(const MultiscaleSystem& sys, const TestObservable& phi, double eps,
                                    const std::vector<double>& t_grid, const Vec& z0, std::size_t n_paths,
                                    std::uint64_t seed, const IntegrationOptions& opts) {
  std::size_t off = 0;
  const auto grid = with_origin(t_grid, off);
  const auto phibar = resolve_phibar(sys, phi);
  const int d = sys.d;
  std::size_t failed = 0;
  // paired per path: phi(X_t, Y_t) - phibar(Y_t)
  const auto gap = multiscale_curve(
      sys, [&](const double* x, const double* y) { return phi.phi(x, y) - phibar(y); }, eps, grid, z0, n_paths, seed,
      opts, failed);
  (void)d;
  BoundaryLayerFit fit;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    fit.t_over_eps2.push_back(grid[i] / (eps * eps));
    fit.gap.push_back(gap[i].mean);
    fit.gap_se.push_back(gap[i].stderr_);
  }
  if (grid.size() < 2 || fit.t_over_eps2[1] > 1.0) {
    fit.message = "unresolved: time grid too coarse relative to eps^2";
    return fit;
  }
  // leading window of positive times where the gap clears twice its stderr
  std::vector<double> xs, ys;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double g = std::abs(fit.gap[i]);
    if (!(g > 2.0 * fit.gap_se[i]) || g == 0.0) break;
    xs.push_back(fit.t_over_eps2[i]);
    ys.push_back(std::log(g));
  }
  if (xs.size() < 3) {
    fit.message = "unresolved: layer amplitude within noise";
    return fit;
  }
  double slope, icpt, lo, hi;
  bootstrap_slope(xs, ys, derive_seed(seed, 99), slope, icpt, lo, hi);
  if (!(slope < 0.0)) {
    fit.message = "unresolved: no decay";
    return fit;
  }
  fit.resolved = true;
  fit.kappa = -slope;
  fit.ci_lo = -hi;
  fit.ci_hi = -lo;
  return fit;
}

StationaryGap stationary_gap(const MultiscaleSystem& sys, const TestObservable& phi, double eps,
                             const HomogenizedReference& ref, const Vec& z0, std::size_t n_paths, std::uint64_t seed,
                             const StationaryOptions& sopts, const IntegrationOptions& opts) {
  const TimeAverage a = multiscale_stationary(sys, phi, eps, z0, n_paths, seed, sopts, opts);
  const auto phibar = resolve_phibar(sys, phi);
  const Estimate r = reference_stationary(ref, phibar, z0.tail(sys.vartheta), n_paths,
                                          derive_seed(seed, kReferenceTag), sopts);
  StationaryGap g;
  g.multiscale = a.mean;
  g.multiscale_se = a.se;
  g.reference = r.mean;
  g.reference_se = r.stderr_;
  g.gap = std::abs(a.mean - r.mean);
  g.stderr_ = std::hypot(a.se, r.stderr_);
  return g;
}

CommutativityResult commutativity_check(const MultiscaleSystem& sys, const TestObservable& phi,
                                        const std::vector<double>& eps_grid, const HomogenizedReference& ref,
                                        const Vec& z0, std::size_t n_paths, std::uint64_t seed,
                                        const StationaryOptions& sopts, const IntegrationOptions& opts) {
  if (eps_grid.size() < 2) throw PreconditionError("commutativity_check needs at least two eps values");
  CommutativityResult out;
  out.eps = eps_grid;
  for (std::size_t i = 0; i < eps_grid.size(); ++i) {
    // independent noise per eps keeps the extrapolation variance exact
    const TimeAverage a = multiscale_stationary(sys, phi, eps_grid[i], z0, n_paths, derive_seed(seed, i + 1), sopts, opts);
    out.eps_means.push_back(a.mean);
    out.eps_se.push_back(a.se);
  }
  // Lagrange extrapolation to eps = 0
  double A = 0.0, var = 0.0;
  for (std::size_t i = 0; i < eps_grid.size(); ++i) {
    double w = 1.0;
    for (std::size_t j = 0; j < eps_grid.size(); ++j)
      if (j != i) w *= (0.0 - eps_grid[j]) / (eps_grid[i] - eps_grid[j]);
    A += w * out.eps_means[i];
    var += w * w * out.eps_se[i] * out.eps_se[i];
  }
  out.A = A;
  out.A_se = std::sqrt(var);
  const auto phibar = resolve_phibar(sys, phi);
  const Estimate b = reference_stationary(ref, phibar, z0.tail(sys.vartheta), n_paths,
                                          derive_seed(seed, kReferenceTag), sopts);
  out.B = b.mean;
  out.B_se = b.stderr_;
  out.discrepancy = std::abs(out.A - out.B);
  out.combined_se = std::hypot(out.A_se, out.B_se);
  return out;
}

}  // namespace homoscale
