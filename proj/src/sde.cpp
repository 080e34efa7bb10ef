#include "homoscale/sde.hpp"

#include "homoscale/linalg.hpp"
#include "homoscale/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace homoscale {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488016887242097;
const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> build_grid(double T, double dt, const std::vector<double>& output_times) {
  if (!output_times.empty()) {
    if (output_times.front() != 0.0) throw PreconditionError("output grid must start at 0");
    for (std::size_t i = 1; i < output_times.size(); ++i)
      if (!(output_times[i] > output_times[i - 1])) throw PreconditionError("output grid must be strictly increasing");
    if (output_times.back() > T * (1.0 + 1e-12)) throw PreconditionError("output grid extends beyond T");
    return output_times;
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) throw PreconditionError("a finite positive step is required for a uniform grid");
  const std::size_t n = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
  std::vector<double> g(n + 1);
  for (std::size_t i = 0; i <= n; ++i) g[i] = T * static_cast<double>(i) / static_cast<double>(n);
  return g;
}

std::vector<std::size_t> substeps(const std::vector<double>& grid, double dt) {
  std::vector<std::size_t> n(grid.size() - 1);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double L = grid[i + 1] - grid[i];
    n[i] = std::isfinite(dt) ? std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(L / dt - 1e-9))) : 1;
  }
  return n;
}

// Brownian increments on the fine steps of one output interval. The interval
// total comes from substream 0, the bridge fill from substream 1.
struct NoiseSource {
  RngStream skeleton;
  RngStream bridge;
  std::vector<double> total;
  std::vector<double> sum;
  NoiseSource(std::uint64_t seed, std::uint64_t path, int m)
      : skeleton(seed, path, 0), bridge(seed, path, 1), total(static_cast<std::size_t>(m)),
        sum(static_cast<std::size_t>(m)) {}
  void interval(double L, std::size_t n, int m, std::vector<double>& dW) {
    dW.resize(n * static_cast<std::size_t>(m));
    skeleton.fill_normal(total.data(), total.size(), std::sqrt(L));
    if (n == 1) {
      std::copy(total.begin(), total.end(), dW.begin());
      return;
    }
    const double h = L / static_cast<double>(n);
    bridge.fill_normal(dW.data(), dW.size(), std::sqrt(h));
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t s = 0; s < n; ++s)
      for (int k = 0; k < m; ++k) sum[static_cast<std::size_t>(k)] += dW[s * static_cast<std::size_t>(m) + static_cast<std::size_t>(k)];
    for (std::size_t s = 0; s < n; ++s)
      for (int k = 0; k < m; ++k) {
        const std::size_t kk = static_cast<std::size_t>(k);
        dW[s * static_cast<std::size_t>(m) + kk] -= (sum[kk] - total[kk]) / static_cast<double>(n);
      }
  }
};

bool blown_up(const double* z, std::size_t n, double guard) {
  for (std::size_t i = 0; i < n; ++i)
    if (!(std::abs(z[i]) <= guard)) return true;
  return false;
}

class Stepper {
 public:
  virtual ~Stepper() = default;
  virtual void step(double* z, const double* dW, double h, RngStream& aux) = 0;
};

class ExplicitStepper : public Stepper {
 public:
  ExplicitStepper(const MultiscaleSystem& s, double eps)
      : sys_(s), eps_(eps), b_(s.d), c_(s.d), sig_(s.d * s.m), F_(s.vartheta), H_(s.vartheta), G_(s.vartheta * s.m) {}
  void step(double* z, const double* dW, double h, RngStream&) override {
    const int d = sys_.d, vt = sys_.vartheta, m = sys_.m;
    const double* x = z;
    const double* y = z + d;
    sys_.b.eval(x, y, b_.data());
    sys_.c.eval(x, y, c_.data());
    sys_.sigma.eval(x, y, sig_.data());
    sys_.F.eval(x, y, F_.data());
    sys_.H.eval(x, y, H_.data());
    sys_.G.eval(x, y, G_.data());
    const double ie = 1.0 / eps_;
    for (int i = 0; i < d; ++i) {
      double noise = 0.0;
      for (int k = 0; k < m; ++k) noise += sig_[static_cast<std::size_t>(i * m + k)] * dW[k];
      z[i] += h * (ie * ie * b_[static_cast<std::size_t>(i)] + ie * c_[static_cast<std::size_t>(i)]) + kSqrt2 * ie * noise;
    }
    for (int j = 0; j < vt; ++j) {
      double noise = 0.0;
      for (int k = 0; k < m; ++k) noise += G_[static_cast<std::size_t>(j * m + k)] * dW[k];
      z[d + j] += h * (F_[static_cast<std::size_t>(j)] + ie * H_[static_cast<std::size_t>(j)]) + kSqrt2 * noise;
    }
  }

 private:
  const MultiscaleSystem& sys_;
  double eps_;
  std::vector<double> b_, c_, sig_, F_, H_, G_;
};

// Fast row solved exactly with A, sigma, c frozen at the predicted midpoint
// of the slow variable; the slow row uses the exact time integral of X when
// F and H are affine in x, else a trapezoid predictor-corrector.
class ExactOUStepper : public Stepper {
 public:
  ExactOUStepper(const MultiscaleSystem& s, double eps)
      : sys_(s), eps_(eps), d_(s.d), vt_(s.vartheta), m_(s.m), Abuf_(d_ * d_), Sbuf_(d_ * m_), cbuf_(d_),
        F_(vt_), H_(vt_), G_(vt_ * m_), ymid_(vt_), xbar_(d_), xold_(d_), zn_(d_), F2_(vt_), H2_(vt_), ypred_(vt_) {
    cacheable_ = s.structure.A_constant && s.structure.sigma_constant;
  }

  void step(double* z, const double* dW, double h, RngStream& aux) override {
    const int d = d_, vt = vt_, m = m_;
    double* x = z;
    double* y = z + d;
    const double ie = 1.0 / eps_;
    sys_.F.eval(x, y, F_.data());
    sys_.H.eval(x, y, H_.data());
    sys_.G.eval(x, y, G_.data());
    for (int j = 0; j < vt; ++j) ymid_[j] = y[j] + 0.5 * h * (F_[j] + ie * H_[j]);
    std::copy(x, x + d, xold_.begin());

    if (!(cacheable_ && have_cache_ && h == cached_h_)) {
      sys_.A.eval(x, ymid_.data(), Abuf_.data());
      sys_.sigma.eval(x, ymid_.data(), Sbuf_.data());
      prepare(h);
    }
    sys_.c.eval(x, ymid_.data(), cbuf_.data());

    for (int i = 0; i < d; ++i) zn_[i] = aux.normal();
    if (d == 1) {
      const double shift = eps_ * cbuf_[0] / a_;
      double kdw = 0.0, sdw = 0.0;
      for (int k = 0; k < m; ++k) {
        kdw += K1_[k] * dW[k];
        sdw += Sbuf_[k] * dW[k];
      }
      x[0] = shift + e_ * (x[0] - shift) + kdw / h + l_ * zn_[0];
      xbar_[0] = (eps_ * cbuf_[0] * h + kSqrt2 * eps_ * sdw - eps_ * eps_ * (x[0] - xold_[0])) / a_ / h;
    } else {
      Eigen::Map<const Vec> c(cbuf_.data(), d);
      Eigen::Map<const Vec> w(dW, m);
      Eigen::Map<Vec> xv(x, d);
      Eigen::Map<const RowMat> S(Sbuf_.data(), d, m);
      Vec shift = eps_ * (Ainv_ * c);
      Vec xn = shift + E_ * (xv - shift) + K_ * w / h + L_ * Eigen::Map<const Vec>(zn_.data(), d);
      Vec dx = xn - xv;
      Vec I = Ainv_ * (eps_ * h * c + kSqrt2 * eps_ * (S * w) - eps_ * eps_ * dx);
      xv = xn;
      Eigen::Map<Vec>(xbar_.data(), d) = I / h;
    }

    if (sys_.structure.slow_affine_x) {
      sys_.F.eval(xbar_.data(), ymid_.data(), F2_.data());
      sys_.H.eval(xbar_.data(), ymid_.data(), H2_.data());
      for (int j = 0; j < vt; ++j) {
        double noise = 0.0;
        for (int k = 0; k < m; ++k) noise += G_[j * m + k] * dW[k];
        y[j] += h * (F2_[j] + ie * H2_[j]) + kSqrt2 * noise;
      }
    } else {
      for (int j = 0; j < vt; ++j) {
        double noise = 0.0;
        for (int k = 0; k < m; ++k) noise += G_[j * m + k] * dW[k];
        ypred_[j] = y[j] + h * (F_[j] + ie * H_[j]) + kSqrt2 * noise;
      }
      sys_.F.eval(x, ypred_.data(), F2_.data());
      sys_.H.eval(x, ypred_.data(), H2_.data());
      for (int j = 0; j < vt; ++j) {
        double noise = 0.0;
        for (int k = 0; k < m; ++k) noise += G_[j * m + k] * dW[k];
        y[j] += 0.5 * h * (F_[j] + ie * H_[j] + F2_[j] + ie * H2_[j]) + kSqrt2 * noise;
      }
    }
  }

 private:
  void prepare(double h) {
    const int d = d_, m = m_;
    const double tau = h / (eps_ * eps_);
    if (d == 1) {
      a_ = Abuf_[0];
      if (!(a_ > 0.0)) throw NumericalError("exact OU step: A(y) is not positive");
      double ss = 0.0;
      for (int k = 0; k < m; ++k) ss += Sbuf_[k] * Sbuf_[k];
      e_ = std::exp(-tau * a_);
      const double sig = ss / a_;
      const double q = sig * (1.0 - e_ * e_);
      K1_.resize(m);
      double kk = 0.0;
      for (int k = 0; k < m; ++k) {
        K1_[k] = kSqrt2 * eps_ * (1.0 - e_) / a_ * Sbuf_[k];
        kk += K1_[k] * K1_[k];
      }
      l_ = std::sqrt(std::max(q - kk / h, 0.0));
    } else {
      Eigen::Map<const RowMat> A(Abuf_.data(), d, d);
      Eigen::Map<const RowMat> S(Sbuf_.data(), d, m);
      Mat Am = A;
      Mat SS = S * S.transpose();
      Mat Sig = solve_lyapunov(Am, SS);
      E_ = expm(-tau * Am);
      Mat Q = Sig - E_ * Sig * E_.transpose();
      Ainv_ = Am.inverse();
      K_ = kSqrt2 * eps_ * Ainv_ * (Mat::Identity(d, d) - E_) * S;
      Mat C = Q - K_ * K_.transpose() / h;
      L_ = psd_factor(0.5 * (C + C.transpose()));
    }
    have_cache_ = true;
    cached_h_ = h;
  }

  const MultiscaleSystem& sys_;
  double eps_;
  int d_, vt_, m_;
  std::vector<double> Abuf_, Sbuf_, cbuf_, F_, H_, G_, ymid_, xbar_, xold_, zn_, F2_, H2_, ypred_;
  bool cacheable_ = false;
  bool have_cache_ = false;
  double cached_h_ = 0.0;
  double a_ = 1.0, e_ = 0.0, l_ = 0.0;
  std::vector<double> K1_;
  Mat E_, Ainv_, K_, L_;
};

// Exact transition of a fully affine system with constant noise.
class LinearExactStepper : public Stepper {
 public:
  LinearExactStepper(const MultiscaleSystem& s, double eps) : n_(s.d + s.vartheta), m_(s.m) {
    const SystemStructure& st = s.structure;
    const int d = s.d, vt = s.vartheta;
    const double ie = 1.0 / eps;
    M_.resize(n_, n_);
    M_.topLeftCorner(d, d) = ie * ie * st.b.Mx + ie * st.c.Mx;
    M_.topRightCorner(d, vt) = ie * ie * st.b.My + ie * st.c.My;
    M_.bottomLeftCorner(vt, d) = st.F.Mx + ie * st.H.Mx;
    M_.bottomRightCorner(vt, vt) = st.F.My + ie * st.H.My;
    m0_.resize(n_);
    m0_.head(d) = ie * ie * st.b.v + ie * st.c.v;
    m0_.tail(vt) = st.F.v + ie * st.H.v;
    B_.resize(n_, m_);
    B_.topRows(d) = kSqrt2 * ie * st.sigma0;
    B_.bottomRows(vt) = kSqrt2 * st.G0;
    zn_.resize(n_);
  }
  void step(double* z, const double* dW, double h, RngStream& aux) override {
    auto it = cache_.find(h);
    if (it == cache_.end()) {
      LinearTransition tr = linear_transition(M_, m0_, B_, h);
      Entry e;
      e.E = tr.E;
      e.g = tr.g;
      e.Kh = tr.K / h;
      Mat C = tr.Q - tr.K * tr.K.transpose() / h;
      e.L = psd_factor(0.5 * (C + C.transpose()));
      it = cache_.emplace(h, std::move(e)).first;
    }
    const Entry& e = it->second;
    for (int i = 0; i < n_; ++i) zn_(i) = aux.normal();
    Eigen::Map<Vec> zv(z, n_);
    Vec zn = e.E * zv + e.g + e.Kh * Eigen::Map<const Vec>(dW, m_) + e.L * zn_;
    zv = zn;
  }

 private:
  struct Entry {
    Mat E, Kh, L;
    Vec g;
  };
  int n_, m_;
  Mat M_, B_;
  Vec m0_, zn_;
  std::map<double, Entry> cache_;
};

std::unique_ptr<Stepper> make_stepper(const MultiscaleSystem& sys, Scheme scheme, double eps) {
  switch (scheme) {
    case Scheme::Explicit: return std::make_unique<ExplicitStepper>(sys, eps);
    case Scheme::ExactOU: return std::make_unique<ExactOUStepper>(sys, eps);
    case Scheme::LinearExact: return std::make_unique<LinearExactStepper>(sys, eps);
    default: throw PreconditionError("unresolved scheme");
  }
}

}  // namespace

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Auto: return "auto";
    case Scheme::Explicit: return "explicit";
    case Scheme::ExactOU: return "exact-ou";
    case Scheme::LinearExact: return "linear-exact";
  }
  return "auto";
}

Scheme scheme_from_name(const std::string& name) {
  if (name == "auto") return Scheme::Auto;
  if (name == "explicit") return Scheme::Explicit;
  if (name == "exact-ou") return Scheme::ExactOU;
  if (name == "linear-exact") return Scheme::LinearExact;
  throw ConfigError("unknown scheme '" + name + "'");
}

Scheme resolve_scheme(const MultiscaleSystem& sys, Scheme requested) {
  const bool ou_ok = sys.flags.linear_fast && sys.structure.fast_x_free_noise && sys.structure.c_x_free;
  switch (requested) {
    case Scheme::Auto:
      if (sys.structure.fully_linear) return Scheme::LinearExact;
      if (ou_ok) return Scheme::ExactOU;
      return Scheme::Explicit;
    case Scheme::ExactOU:
      if (!ou_ok) throw PreconditionError("exact OU scheme needs linear_fast with x-independent sigma and c");
      return requested;
    case Scheme::LinearExact:
      if (!sys.structure.fully_linear) throw PreconditionError("linear-exact scheme needs a fully affine system");
      return requested;
    default: return requested;
  }
}

double default_dt(const MultiscaleSystem& sys, Scheme scheme, double eps, double T, bool has_output_grid) {
  switch (scheme) {
    case Scheme::Explicit: return std::min(eps * eps / 20.0, T / 2000.0);
    case Scheme::ExactOU: {
      double dt = T / 2000.0;
      if (!(sys.structure.A_constant && sys.structure.sigma_constant)) dt = std::min(dt, eps * eps / 2.0);
      return dt;
    }
    case Scheme::LinearExact:
      return has_output_grid ? std::numeric_limits<double>::infinity() : T / 2000.0;
    default: return T / 2000.0;
  }
}

SimulationResult simulate_multiscale(const MultiscaleSystem& sys, double eps, const Vec& z0, double T,
                                     std::size_t n_paths, std::uint64_t seed, const IntegrationOptions& opts,
                                     const PathObserver& observer) {
  if (!(eps > 0.0 && eps <= 1.0)) throw PreconditionError("eps must lie in (0, 1]");
  if (!(T > 0.0)) throw PreconditionError("T must be positive");
  if (z0.size() != sys.d + sys.vartheta) throw ShapeError("initial state has wrong dimension");
  const Scheme scheme = resolve_scheme(sys, opts.scheme);
  const double dt = opts.dt > 0.0 ? opts.dt : default_dt(sys, scheme, eps, T, !opts.output_times.empty());
  if (scheme == Scheme::Explicit && dt > eps * eps / 20.0 * (1.0 + 1e-12))
    throw PreconditionError("explicit scheme requires dt <= eps^2/20");
  SimulationResult res;
  res.times = build_grid(T, dt, opts.output_times);
  res.failed.assign(n_paths, 0);
  res.dt = dt;
  res.scheme = scheme;
  const auto nsub = substeps(res.times, dt);
  const std::size_t n = z0.size();
  const int m = sys.m;

  parallel_blocks(n_blocks_for(n_paths), [&](std::size_t block) {
    auto stepper = make_stepper(sys, scheme, eps);
    std::vector<double> z(n), dW;
    const std::size_t p0 = block * kPathBlock, p1 = std::min(n_paths, p0 + kPathBlock);
    for (std::size_t p = p0; p < p1; ++p) {
      NoiseSource noise(seed, p, m);
      RngStream aux(seed, p, 2);
      std::copy(z0.data(), z0.data() + n, z.begin());
      bool dead = false;
      if (observer) observer(p, 0, z.data());
      for (std::size_t i = 0; i + 1 < res.times.size(); ++i) {
        const double L = res.times[i + 1] - res.times[i];
        noise.interval(L, nsub[i], m, dW);
        if (!dead) {
          const double h = L / static_cast<double>(nsub[i]);
          for (std::size_t s = 0; s < nsub[i]; ++s) {
            stepper->step(z.data(), dW.data() + s * static_cast<std::size_t>(m), h, aux);
            if (blown_up(z.data(), n, opts.blowup)) {
              dead = true;
              std::fill(z.begin(), z.end(), kNaN);
              break;
            }
          }
        }
        if (observer) observer(p, i + 1, z.data());
      }
      res.failed[p] = dead ? 1 : 0;
    }
  });
  res.n_failed = static_cast<std::size_t>(std::count(res.failed.begin(), res.failed.end(), 1));
  return res;
}

TrajectoryEnsemble integrate_multiscale(const MultiscaleSystem& sys, double eps, const Vec& z0, double T,
                                        std::size_t n_paths, std::uint64_t seed, const IntegrationOptions& opts) {
  TrajectoryEnsemble ens;
  ens.n_paths = n_paths;
  ens.state_dim = static_cast<std::size_t>(sys.d + sys.vartheta);
  ens.d = sys.d;
  // grid size is needed before simulation to size the store
  const Scheme scheme = resolve_scheme(sys, opts.scheme);
  const double dt = opts.dt > 0.0 ? opts.dt : default_dt(sys, scheme, eps, T, !opts.output_times.empty());
  const auto grid = build_grid(T, dt, opts.output_times);
  ens.data.assign(n_paths * grid.size() * ens.state_dim, 0.0);
  const std::size_t nt = grid.size(), sd = ens.state_dim;
  auto res = simulate_multiscale(sys, eps, z0, T, n_paths, seed, opts, [&](std::size_t p, std::size_t ti, const double* z) {
    std::copy(z, z + sd, ens.data.data() + (p * nt + ti) * sd);
  });
  ens.times = res.times;
  ens.failed = res.failed;
  ens.n_failed = res.n_failed;
  ens.meta = {eps, res.dt, T, seed, scheme_name(res.scheme), sys.name};
  return ens;
}

SimulationResult simulate_homogenized(const VecFn& F, const VecFn& sigma_bar, int vartheta, const Vec& y0,
                                      double T, double dt, std::size_t n_paths, std::uint64_t seed,
                                      const IntegrationOptions& opts, const PathObserver& observer) {
  if (y0.size() != vartheta) throw ShapeError("initial state has wrong dimension");
  if (!(T > 0.0) || !(dt > 0.0)) throw PreconditionError("T and dt must be positive");
  SimulationResult res;
  res.times = build_grid(T, dt, opts.output_times);
  res.failed.assign(n_paths, 0);
  res.dt = dt;
  res.scheme = Scheme::Explicit;
  const auto nsub = substeps(res.times, dt);
  const int n = vartheta;
  parallel_blocks(n_blocks_for(n_paths), [&](std::size_t block) {
    std::vector<double> y(static_cast<std::size_t>(n)), f(static_cast<std::size_t>(n)),
        s(static_cast<std::size_t>(n * n)), dW;
    const std::size_t p0 = block * kPathBlock, p1 = std::min(n_paths, p0 + kPathBlock);
    for (std::size_t p = p0; p < p1; ++p) {
      NoiseSource noise(seed, p, n);
      std::copy(y0.data(), y0.data() + n, y.begin());
      bool dead = false;
      if (observer) observer(p, 0, y.data());
      for (std::size_t i = 0; i + 1 < res.times.size(); ++i) {
        const double L = res.times[i + 1] - res.times[i];
        noise.interval(L, nsub[i], n, dW);
        if (!dead) {
          const double h = L / static_cast<double>(nsub[i]);
          for (std::size_t st = 0; st < nsub[i]; ++st) {
            F(y.data(), f.data());
            sigma_bar(y.data(), s.data());
            for (int j = 0; j < n; ++j)
              if (!std::isfinite(f[static_cast<std::size_t>(j)])) throw NumericalError("NaN in homogenized drift evaluation");
            const double* w = dW.data() + st * static_cast<std::size_t>(n);
            for (int j = 0; j < n; ++j) {
              double noise_j = 0.0;
              for (int k = 0; k < n; ++k) noise_j += s[static_cast<std::size_t>(j * n + k)] * w[k];
              y[static_cast<std::size_t>(j)] += h * f[static_cast<std::size_t>(j)] + kSqrt2 * noise_j;
            }
            if (blown_up(y.data(), y.size(), opts.blowup)) {
              dead = true;
              std::fill(y.begin(), y.end(), kNaN);
              break;
            }
          }
        }
        if (observer) observer(p, i + 1, y.data());
      }
      res.failed[p] = dead ? 1 : 0;
    }
  });
  res.n_failed = static_cast<std::size_t>(std::count(res.failed.begin(), res.failed.end(), 1));
  return res;
}

TrajectoryEnsemble integrate_homogenized(const VecFn& F, const VecFn& sigma_bar, int vartheta, const Vec& y0,
                                         double T, double dt, std::size_t n_paths, std::uint64_t seed,
                                         const IntegrationOptions& opts) {
  TrajectoryEnsemble ens;
  ens.n_paths = n_paths;
  ens.state_dim = static_cast<std::size_t>(vartheta);
  ens.d = 0;
  const auto grid = build_grid(T, dt, opts.output_times);
  const std::size_t nt = grid.size(), sd = ens.state_dim;
  ens.data.assign(n_paths * nt * sd, 0.0);
  auto res = simulate_homogenized(F, sigma_bar, vartheta, y0, T, dt, n_paths, seed, opts,
                                  [&](std::size_t p, std::size_t ti, const double* y) {
                                    std::copy(y, y + sd, ens.data.data() + (p * nt + ti) * sd);
                                  });
  ens.times = res.times;
  ens.failed = res.failed;
  ens.n_failed = res.n_failed;
  ens.meta = {1.0, dt, T, seed, "euler-maruyama", "homogenized"};
  return ens;
}

ExpectationEstimate estimate_expectation(const TrajectoryEnsemble& ens, const TestObservable& phi, double t) {
  if (ens.n_paths == 0 || ens.times.empty()) throw PreconditionError("empty ensemble");
  if (t > ens.times.back() * (1.0 + 1e-12) + 1e-15) throw PreconditionError("t beyond the ensemble horizon");
  if (ens.d == 0 && !phi.slow_only) throw PreconditionError("observable depends on x but the ensemble has no fast block");
  std::size_t best = 0;
  for (std::size_t i = 1; i < ens.times.size(); ++i)
    if (std::abs(ens.times[i] - t) < std::abs(ens.times[best] - t)) best = i;
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    if (ens.failed[p]) continue;
    const double* z = ens.state(p, best);
    const double v = ens.d == 0 ? phi(nullptr, z) : phi(z, z + ens.d);
    sum += v;
    sum2 += v * v;
    ++n;
  }
  if (n == 0) throw PreconditionError("all paths failed");
  ExpectationEstimate e;
  e.mean = sum / static_cast<double>(n);
  const double var = n > 1 ? std::max(0.0, (sum2 - sum * e.mean) / static_cast<double>(n - 1)) : 0.0;
  e.stderr_ = std::sqrt(var / static_cast<double>(n));
  e.t = ens.times[best];
  e.offset = e.t - t;
  e.n_used = n;
  return e;
}

namespace {

template <typename T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  is.read(reinterpret_cast<char*>(b), sizeof(T));
  if (!is) throw Error("truncated ensemble file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

constexpr char kMagic[8] = {'H', 'S', 'E', 'N', 'S', '0', '0', '1'};

}  // namespace

void write_ensemble(const TrajectoryEnsemble& ens, const std::string& prefix) {
  std::ofstream os(prefix + ".bin", std::ios::binary);
  if (!os) throw Error("cannot open " + prefix + ".bin");
  os.write(kMagic, 8);
  put_le<std::uint64_t>(os, ens.n_paths);
  put_le<std::uint64_t>(os, ens.times.size());
  put_le<std::uint64_t>(os, ens.state_dim);
  put_le<std::uint64_t>(os, static_cast<std::uint64_t>(ens.d));
  for (double t : ens.times) put_le<double>(os, t);
  for (double v : ens.data) put_le<double>(os, v);
  for (auto f : ens.failed) os.put(static_cast<char>(f));
  nlohmann::json meta = {{"n_paths", ens.n_paths},   {"n_times", ens.times.size()},
                         {"state_dim", ens.state_dim}, {"d", ens.d},
                         {"n_failed", ens.n_failed}, {"eps", ens.meta.eps},
                         {"dt", ens.meta.dt},          {"T", ens.meta.T},
                         {"seed", ens.meta.seed},      {"scheme", ens.meta.scheme},
                         {"system", ens.meta.system},  {"format", "little-endian f64, header HSENS001 + 4 x u64"}};
  std::ofstream js(prefix + ".json");
  js << meta.dump(2) << "\n";
}

TrajectoryEnsemble read_ensemble(const std::string& prefix) {
  std::ifstream is(prefix + ".bin", std::ios::binary);
  if (!is) throw Error("cannot open " + prefix + ".bin");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw Error("not an ensemble file: " + prefix + ".bin");
  TrajectoryEnsemble ens;
  ens.n_paths = get_le<std::uint64_t>(is);
  const std::size_t nt = get_le<std::uint64_t>(is);
  ens.state_dim = get_le<std::uint64_t>(is);
  ens.d = static_cast<int>(get_le<std::uint64_t>(is));
  ens.times.resize(nt);
  for (auto& t : ens.times) t = get_le<double>(is);
  ens.data.resize(ens.n_paths * nt * ens.state_dim);
  for (auto& v : ens.data) v = get_le<double>(is);
  ens.failed.resize(ens.n_paths);
  for (auto& f : ens.failed) f = static_cast<std::uint8_t>(is.get());
  ens.n_failed = static_cast<std::size_t>(std::count(ens.failed.begin(), ens.failed.end(), 1));
  std::ifstream js(prefix + ".json");
  if (js) {
    auto meta = nlohmann::json::parse(js);
    // non-finite doubles are written as null (dt of the linear-exact scheme)
    auto num = [&](const char* k, double dflt) {
      if (!meta.contains(k)) return dflt;
      return meta[k].is_null() ? std::numeric_limits<double>::quiet_NaN() : meta[k].get<double>();
    };
    ens.meta.eps = num("eps", 1.0);
    ens.meta.dt = num("dt", 0.0);
    ens.meta.T = num("T", 0.0);
    ens.meta.seed = meta.value("seed", std::uint64_t{0});
    ens.meta.scheme = meta.value("scheme", std::string());
    ens.meta.system = meta.value("system", std::string());
  }
  return ens;
}

void export_ensemble_csv(const TrajectoryEnsemble& ens, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path);
  os << "t,path_id";
  for (std::size_t k = 0; k < ens.state_dim; ++k) os << ",z" << k;
  os << "\n" << std::setprecision(17);
  for (std::size_t ti = 0; ti < ens.times.size(); ++ti)
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
      os << ens.times[ti] << "," << p;
      const double* z = ens.state(p, ti);
      for (std::size_t k = 0; k < ens.state_dim; ++k) os << "," << z[k];
      os << "\n";
    }
}

}  // namespace homoscale
