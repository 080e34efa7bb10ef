#include "homoscale/corrector.hpp"

#include "homoscale/io.hpp"
#include "homoscale/linalg.hpp"
#include "homoscale/rng.hpp"
#include "homoscale/sde.hpp"

#include <algorithm>
#include <cmath>

namespace homoscale {

namespace {

// d A / d y_j by the analytic gradient when supplied, else central differences.
std::vector<Mat> jacobian_y(const CoefficientField& f, const Vec& x, const Vec& y, double step) {
  const int vt = static_cast<int>(y.size());
  std::vector<Mat> out(static_cast<std::size_t>(vt), Mat::Zero(f.rows, f.cols));
  if (f.has_grad_y()) {
    std::vector<double> g(static_cast<std::size_t>(f.size() * vt));
    f.grad_y(x.data(), y.data(), g.data());
    for (int r = 0; r < f.rows; ++r)
      for (int c = 0; c < f.cols; ++c)
        for (int j = 0; j < vt; ++j) out[static_cast<std::size_t>(j)](r, c) = g[static_cast<std::size_t>((r * f.cols + c) * vt + j)];
    return out;
  }
  for (int j = 0; j < vt; ++j) {
    const double h = step * std::max(1.0, std::abs(y(j)));
    Vec yp = y, ym = y;
    yp(j) += h;
    ym(j) -= h;
    out[static_cast<std::size_t>(j)] = (f(x, yp) - f(x, ym)) / (2.0 * h);
  }
  return out;
}

Mat slope_in_x(const CoefficientField& H, int d, const Vec& y, Vec& h0) {
  const Vec x0 = Vec::Zero(d);
  h0 = H(x0, y).col(0);
  Mat P(H.rows, d);
  for (int k = 0; k < d; ++k) {
    Vec e = Vec::Zero(d);
    e(k) = 1.0;
    P.col(k) = H(e, y).col(0) - h0;
  }
  return P;
}

std::size_t lattice_size(const std::vector<std::vector<double>>& axes) {
  std::size_t n = 1;
  for (const auto& a : axes) n *= a.size();
  return n;
}

void unravel(std::size_t i, const std::vector<std::vector<double>>& axes, std::vector<std::size_t>& idx) {
  idx.resize(axes.size());
  for (std::size_t a = axes.size(); a-- > 0;) {
    idx[a] = i % axes[a].size();
    i /= axes[a].size();
  }
}

std::size_t ravel(const std::vector<std::size_t>& idx, const std::vector<std::vector<double>>& axes) {
  std::size_t i = 0;
  for (std::size_t a = 0; a < axes.size(); ++a) i = i * axes[a].size() + idx[a];
  return i;
}

// Three-point derivative along one axis on a non-uniform lattice.
RowMat axis_derivative(const RowMat& v, const std::vector<std::vector<double>>& axes, std::size_t axis) {
  RowMat out = RowMat::Zero(v.rows(), v.cols());
  const auto& xs = axes[axis];
  const std::size_t n = xs.size();
  if (n < 3) throw PreconditionError("corrector lattice needs at least 3 points per axis");
  std::vector<std::size_t> idx;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    unravel(static_cast<std::size_t>(i), axes, idx);
    std::size_t c = std::clamp<std::size_t>(idx[axis], 1, n - 2);
    auto id = idx;
    id[axis] = c - 1;
    const auto vm = v.row(static_cast<Eigen::Index>(ravel(id, axes)));
    id[axis] = c;
    const auto v0 = v.row(static_cast<Eigen::Index>(ravel(id, axes)));
    id[axis] = c + 1;
    const auto vp = v.row(static_cast<Eigen::Index>(ravel(id, axes)));
    const double x = xs[idx[axis]], x0 = xs[c - 1], x1 = xs[c], x2 = xs[c + 1];
    // derivative of the Lagrange quadratic through the three nodes at x
    const double w0 = ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2));
    const double w1 = ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2));
    const double w2 = ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1));
    out.row(i) = w0 * vm + w1 * v0 + w2 * vp;
  }
  return out;
}

// Multilinear interpolation weights of x on the lattice (clamped).
void interp_weights(const Vec& x, const std::vector<std::vector<double>>& axes, std::vector<std::size_t>& nodes,
                    std::vector<double>& w) {
  const std::size_t d = axes.size();
  std::vector<std::size_t> lo(d);
  std::vector<double> frac(d);
  for (std::size_t a = 0; a < d; ++a) {
    const auto& xs = axes[a];
    const double v = std::clamp(x(static_cast<Eigen::Index>(a)), xs.front(), xs.back());
    std::size_t k = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), v) - xs.begin());
    k = std::clamp<std::size_t>(k, 1, xs.size() - 1);
    lo[a] = k - 1;
    frac[a] = (v - xs[k - 1]) / (xs[k] - xs[k - 1]);
  }
  nodes.clear();
  w.clear();
  for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
    std::vector<std::size_t> idx(d);
    double wt = 1.0;
    for (std::size_t a = 0; a < d; ++a) {
      const bool up = (corner >> a) & 1U;
      idx[a] = lo[a] + (up ? 1 : 0);
      wt *= up ? frac[a] : 1.0 - frac[a];
    }
    nodes.push_back(ravel(idx, axes));
    w.push_back(wt);
  }
}

Vec interp_row(const RowMat& t, const std::vector<std::size_t>& nodes, const std::vector<double>& w) {
  Vec out = Vec::Zero(t.cols());
  for (std::size_t i = 0; i < nodes.size(); ++i) out += w[i] * t.row(static_cast<Eigen::Index>(nodes[i])).transpose();
  return out;
}

struct FkTable {
  RowMat values, se;
  double late_mean = 0.0, late_se = 0.0;
};

FkTable fk_table(const MultiscaleSystem& fz, const CoefficientField& H, const Vec& y,
                 const std::vector<std::vector<double>>& axes, const FeynmanKacOptions& o, std::uint64_t seed) {
  const int d = fz.d, vt = fz.vartheta;
  const std::size_t nn = lattice_size(axes);
  const std::size_t nout = static_cast<std::size_t>(std::ceil(o.T_trunc / o.dt_out - 1e-9));
  std::vector<double> grid(nout + 1);
  for (std::size_t i = 0; i <= nout; ++i) grid[i] = o.T_trunc * static_cast<double>(i) / static_cast<double>(nout);
  const double h = grid[1] - grid[0];
  IntegrationOptions io;
  io.output_times = grid;
  const Scheme sch = resolve_scheme(fz, Scheme::Auto);
  if (sch != Scheme::LinearExact) io.dt = o.dt > 0.0 ? o.dt : std::min(h, sch == Scheme::Explicit ? 0.05 : h);
  FkTable tab;
  tab.values.resize(static_cast<Eigen::Index>(nn), vt);
  tab.se.resize(static_cast<Eigen::Index>(nn), vt);
  const std::size_t late0 = nout - nout / 5;
  double late_sum = 0.0, late_var = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t node = 0; node < nn; ++node) {
    unravel(node, axes, idx);
    Vec z0(d + vt);
    for (int k = 0; k < d; ++k) z0(k) = axes[static_cast<std::size_t>(k)][idx[static_cast<std::size_t>(k)]];
    z0.tail(vt) = y;
    RowMat integral = RowMat::Zero(static_cast<Eigen::Index>(o.n_paths), vt);
    RowMat late = RowMat::Zero(static_cast<Eigen::Index>(o.n_paths), vt);
    std::vector<std::vector<double>> hbuf(n_blocks_for(o.n_paths), std::vector<double>(static_cast<std::size_t>(vt)));
    auto res = simulate_multiscale(fz, 1.0, z0, o.T_trunc, o.n_paths, seed, io,
                                   [&](std::size_t p, std::size_t ti, const double* z) {
                                     auto& hv = hbuf[p / kPathBlock];
                                     H.eval(z, y.data(), hv.data());
                                     const double w = (ti == 0 || ti == nout) ? 0.5 * h : h;
                                     for (int i = 0; i < vt; ++i) {
                                       integral(static_cast<Eigen::Index>(p), i) += w * hv[static_cast<std::size_t>(i)];
                                       if (ti >= late0) late(static_cast<Eigen::Index>(p), i) += hv[static_cast<std::size_t>(i)] / static_cast<double>(nout - late0 + 1);
                                     }
                                   });
    if (res.n_failed > 0) throw NumericalError("Feynman-Kac: frozen simulation blew up");
    const double n = static_cast<double>(o.n_paths);
    for (int i = 0; i < vt; ++i) {
      const double m = integral.col(i).mean();
      const double var = (integral.col(i).array() - m).square().sum() / std::max(1.0, n - 1.0);
      tab.values(static_cast<Eigen::Index>(node), i) = m;
      tab.se(static_cast<Eigen::Index>(node), i) = std::sqrt(var / n);
      const double lm = late.col(i).mean();
      const double lv = (late.col(i).array() - lm).square().sum() / std::max(1.0, n - 1.0);
      if (std::abs(lm) > std::abs(late_sum)) {
        late_sum = lm;
        late_var = lv / n;
      }
    }
  }
  tab.late_mean = late_sum;
  tab.late_se = std::sqrt(late_var);
  return tab;
}

}  // namespace

std::size_t Corrector::n_nodes() const { return lattice_size(axes); }

Vec Corrector::node(std::size_t i) const {
  std::vector<std::size_t> idx;
  unravel(i, axes, idx);
  Vec x(static_cast<Eigen::Index>(axes.size()));
  for (std::size_t a = 0; a < axes.size(); ++a) x(static_cast<Eigen::Index>(a)) = axes[a][idx[a]];
  return x;
}

CorrectorEval Corrector::eval(const Vec& x) const {
  if (x.size() != d) throw ShapeError("corrector: x has wrong dimension");
  CorrectorEval e;
  e.has_dy = has_dy;
  if (kind == Kind::LinearClosedForm) {
    e.phi = R * x;
    e.dx = R;
    e.dy = Mat::Zero(vartheta, vartheta);
    if (has_dy) {
      for (int j = 0; j < vartheta; ++j) {
        e.dy.col(j) = dR[static_cast<std::size_t>(j)] * x;
        e.dxdy.push_back(dR[static_cast<std::size_t>(j)]);
      }
    }
    return e;
  }
  std::vector<std::size_t> nodes;
  std::vector<double> w;
  interp_weights(x, axes, nodes, w);
  e.phi = interp_row(values, nodes, w);
  e.dx.resize(vartheta, d);
  for (int k = 0; k < d; ++k) e.dx.col(k) = interp_row(d1[static_cast<std::size_t>(k)], nodes, w);
  e.dy = Mat::Zero(vartheta, vartheta);
  if (has_dy) {
    for (int j = 0; j < vartheta; ++j) {
      e.dy.col(j) = interp_row(dy_vals[static_cast<std::size_t>(j)], nodes, w);
      Mat m(vartheta, d);
      for (int k = 0; k < d; ++k) m.col(k) = interp_row(dxdy_vals[static_cast<std::size_t>(j * d + k)], nodes, w);
      e.dxdy.push_back(m);
    }
  }
  return e;
}

Corrector corrector_linear(const MultiscaleSystem& sys, const Vec& y) {
  if (!sys.flags.linear_fast) throw PreconditionError("corrector_linear requires a linear_fast system");
  if (y.size() != sys.vartheta) throw ShapeError("corrector_linear: y has wrong dimension");
  const int d = sys.d, vt = sys.vartheta;
  Corrector c;
  c.kind = Corrector::Kind::LinearClosedForm;
  c.d = d;
  c.vartheta = vt;
  c.y = y;
  c.has_dy = true;
  const Vec x0 = Vec::Zero(d);
  const Mat A = sys.A(x0, y);
  Eigen::FullPivLU<Mat> lu(A);
  if (!lu.isInvertible()) throw NumericalError("corrector_linear: A(y) is singular");
  const Mat Ainv = lu.inverse();
  if (sys.H.zero) {
    c.R = Mat::Zero(vt, d);
    c.dR.assign(static_cast<std::size_t>(vt), Mat::Zero(vt, d));
    return c;
  }
  Vec h0;
  const Mat P = slope_in_x(sys.H, d, y, h0);
  if (h0.norm() > 1e-10 * (1.0 + P.norm()))
    throw PreconditionError("corrector_linear: H(0, y) must vanish (centering against the centered Gaussian)");
  // affinity check at a few points
  for (double s : {-1.7, 0.6, 2.3}) {
    Vec x = Vec::Constant(d, s);
    if (d > 1) x(0) = -0.5 * s;
    if ((sys.H(x, y).col(0) - P * x).norm() > 1e-9 * (1.0 + (P * x).norm()))
      throw PreconditionError("corrector_linear: H is not linear in x");
  }
  c.R = P * Ainv;
  const auto dA = jacobian_y(sys.A, x0, y, 1e-4);
  for (int j = 0; j < vt; ++j) {
    const double hstep = 1e-4 * std::max(1.0, std::abs(y(j)));
    Vec yp = y, ym = y, hp, hm;
    yp(j) += hstep;
    ym(j) -= hstep;
    const Mat dP = (slope_in_x(sys.H, d, yp, hp) - slope_in_x(sys.H, d, ym, hm)) / (2.0 * hstep);
    c.dR.push_back(dP * Ainv - P * Ainv * dA[static_cast<std::size_t>(j)] * Ainv);
  }
  return c;
}

std::vector<std::vector<double>> default_probe_axes(const FrozenEquilibrium& eq, int points) {
  const int d = eq.dim();
  std::vector<std::vector<double>> axes(static_cast<std::size_t>(d));
  if (eq.kind == FrozenEquilibrium::Kind::Gaussian) {
    const GaussHermite gh = gauss_hermite(points);
    for (int k = 0; k < d; ++k) {
      const double s = std::sqrt(std::max(eq.cov(k, k), 1e-300));
      for (int i = 0; i < points; ++i) axes[static_cast<std::size_t>(k)].push_back(s * gh.nodes(i));
    }
  } else {
    for (int k = 0; k < d; ++k)
      for (int i = 0; i < points; ++i)
        axes[static_cast<std::size_t>(k)].push_back(-3.0 + 6.0 * i / static_cast<double>(points - 1));
  }
  return axes;
}

Corrector corrector_feynman_kac(const MultiscaleSystem& sys, const Vec& y, const FeynmanKacOptions& opts,
                                std::uint64_t seed, const FrozenEquilibrium* eq_in) {
  if (y.size() != sys.vartheta) throw ShapeError("corrector_feynman_kac: y has wrong dimension");
  if (!(opts.T_trunc > 0.0) || !(opts.dt_out > 0.0) || opts.n_paths < 2)
    throw PreconditionError("corrector_feynman_kac: invalid options");
  const int d = sys.d, vt = sys.vartheta;
  FrozenEquilibrium eq_local;
  if (!eq_in) eq_local = frozen_equilibrium(sys, y, 4000, 20.0, derive_seed(seed, 3));
  const FrozenEquilibrium& eq = eq_in ? *eq_in : eq_local;
  const Estimate cen = centering_residual(sys, y, eq);
  if (cen.mean > std::max(1e-6, 4.0 * cen.stderr_))
    throw PreconditionError("corrector_feynman_kac: H is not centered against mu_y (" + std::to_string(cen.mean) + ")");

  Corrector c;
  c.kind = Corrector::Kind::FeynmanKac;
  c.d = d;
  c.vartheta = vt;
  c.y = y;
  c.axes = opts.axes.empty() ? default_probe_axes(eq) : opts.axes;
  if (static_cast<int>(c.axes.size()) != d) throw ShapeError("corrector_feynman_kac: lattice axes must match d");
  for (auto& a : c.axes) std::sort(a.begin(), a.end());
  c.T_trunc = opts.T_trunc;
  c.n_paths = opts.n_paths;
  const MultiscaleSystem fz = frozen_system(sys);

  const FkTable t0 = fk_table(fz, sys.H, y, c.axes, opts, seed);
  if (std::abs(t0.late_mean) > 5.0 * t0.late_se + 1e-8)
    throw PreconditionError("corrector_feynman_kac: running integral drifts (centering violated)");
  c.values = t0.values;
  c.stderr_ = t0.se;
  // exponential tail with rate 5/T beyond the horizon
  c.tail_bound = std::abs(t0.late_mean) * opts.T_trunc / 5.0;
  for (int k = 0; k < d; ++k) c.d1.push_back(axis_derivative(c.values, c.axes, static_cast<std::size_t>(k)));
  for (int k = 0; k < d; ++k)
    for (int l = 0; l < d; ++l)
      c.d2.push_back(axis_derivative(c.d1[static_cast<std::size_t>(k)], c.axes, static_cast<std::size_t>(l)));
  if (opts.y_derivatives) {
    c.has_dy = true;
    for (int j = 0; j < vt; ++j) {
      const double hstep = opts.y_step * std::max(1.0, std::abs(y(j)));
      Vec yp = y, ym = y;
      yp(j) += hstep;
      ym(j) -= hstep;
      // the frozen system carries y in its state, so the same seed reuses the noise
      const FkTable tp = fk_table(fz, sys.H, yp, c.axes, opts, seed);
      const FkTable tm = fk_table(fz, sys.H, ym, c.axes, opts, seed);
      RowMat dv = (tp.values - tm.values) / (2.0 * hstep);
      c.dy_vals.push_back(dv);
      c.dy_se.push_back(((tp.se.array().square() + tm.se.array().square()).sqrt() / (2.0 * hstep)).matrix());
    }
    for (int j = 0; j < vt; ++j)
      for (int k = 0; k < d; ++k)
        c.dxdy_vals.push_back(axis_derivative(c.dy_vals[static_cast<std::size_t>(j)], c.axes, static_cast<std::size_t>(k)));
  }
  return c;
}

double generator_residual(const MultiscaleSystem& sys, const Corrector& corr, const RowMat& probes, double h) {
  const int d = sys.d, vt = sys.vartheta;
  const Vec& y = corr.y;
  double total = 0.0;
  std::size_t count = 0;
  auto residual_at = [&](const Vec& x, const Vec& phi_unused, const std::function<Vec(int)>& grad_k,
                         const std::function<Vec(int, int)>& hess_kl) {
    (void)phi_unused;
    const Mat s = sys.sigma(x, y);
    const Mat a = s * s.transpose();
    const Vec b = sys.b(x, y).col(0);
    Vec L = sys.H(x, y).col(0);
    for (int k = 0; k < d; ++k) {
      L += b(k) * grad_k(k);
      for (int l = 0; l < d; ++l) L += a(k, l) * hess_kl(k, l);
    }
    return L.norm();
  };
  if (corr.kind == Corrector::Kind::LinearClosedForm) {
    for (Eigen::Index i = 0; i < probes.rows(); ++i) {
      const Vec x = probes.row(i).transpose();
      auto f = [&](const Vec& z) { return corr.phi(z); };
      auto grad_k = [&](int k) {
        Vec xp = x, xm = x;
        xp(k) += h;
        xm(k) -= h;
        return Vec((f(xp) - f(xm)) / (2.0 * h));
      };
      auto hess_kl = [&](int k, int l) {
        Vec pp = x, pm = x, mp = x, mm = x;
        pp(k) += h; pp(l) += h;
        pm(k) += h; pm(l) -= h;
        mp(k) -= h; mp(l) += h;
        mm(k) -= h; mm(l) -= h;
        return Vec((f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h * h));
      };
      total += residual_at(x, f(x), grad_k, hess_kl);
      ++count;
    }
    return count ? total / static_cast<double>(count) : 0.0;
  }
  // lattice interior nodes; probes are ignored for the tabulated corrector
  std::vector<std::size_t> idx;
  for (std::size_t n = 0; n < corr.n_nodes(); ++n) {
    unravel(n, corr.axes, idx);
    bool interior = true;
    for (std::size_t a = 0; a < idx.size(); ++a)
      if (idx[a] == 0 || idx[a] + 1 == corr.axes[a].size()) interior = false;
    if (!interior) continue;
    const Vec x = corr.node(n);
    const auto row = static_cast<Eigen::Index>(n);
    auto grad_k = [&](int k) { return Vec(corr.d1[static_cast<std::size_t>(k)].row(row).transpose()); };
    auto hess_kl = [&](int k, int l) { return Vec(corr.d2[static_cast<std::size_t>(k * d + l)].row(row).transpose()); };
    total += residual_at(x, Vec::Zero(vt), grad_k, hess_kl);
    ++count;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

void export_corrector_csv(const Corrector& corr, const std::string& path) {
  std::vector<std::string> header;
  for (int j = 0; j < corr.vartheta; ++j) header.push_back("y" + std::to_string(j));
  for (int k = 0; k < corr.d; ++k) header.push_back("x" + std::to_string(k));
  for (int i = 0; i < corr.vartheta; ++i) header.push_back("phi" + std::to_string(i));
  for (int i = 0; i < corr.vartheta; ++i) header.push_back("stderr" + std::to_string(i));
  CsvWriter w(path, header);
  std::vector<std::vector<double>> nodes;
  if (corr.kind == Corrector::Kind::FeynmanKac) {
    for (std::size_t n = 0; n < corr.n_nodes(); ++n) {
      const Vec x = corr.node(n);
      std::vector<double> row(corr.y.data(), corr.y.data() + corr.y.size());
      row.insert(row.end(), x.data(), x.data() + x.size());
      for (int i = 0; i < corr.vartheta; ++i) row.push_back(corr.values(static_cast<Eigen::Index>(n), i));
      for (int i = 0; i < corr.vartheta; ++i) row.push_back(corr.stderr_(static_cast<Eigen::Index>(n), i));
      w.row(row);
    }
    return;
  }
  const GaussHermite gh = gauss_hermite(7);
  const int d = corr.d;
  std::size_t total = 1;
  for (int k = 0; k < d; ++k) total *= 7;
  for (std::size_t n = 0; n < total; ++n) {
    Vec x(d);
    std::size_t rem = n;
    for (int k = d - 1; k >= 0; --k) {
      x(k) = gh.nodes(static_cast<Eigen::Index>(rem % 7));
      rem /= 7;
    }
    const Vec p = corr.phi(x);
    std::vector<double> row(corr.y.data(), corr.y.data() + corr.y.size());
    row.insert(row.end(), x.data(), x.data() + x.size());
    row.insert(row.end(), p.data(), p.data() + p.size());
    for (int i = 0; i < corr.vartheta; ++i) row.push_back(0.0);
    w.row(row);
  }
}

}  // namespace homoscale
