#include "homoscale/torus.hpp"

#include "homoscale/linalg.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>

namespace homoscale {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kPi = 3.14159265358979323846264338327950288;

using SpMat = Eigen::SparseMatrix<cplx>;
using CVec = Eigen::VectorXcd;

struct ModeTerm {
  std::vector<int> k;
  cplx v;
};

std::vector<ModeTerm> nonzero_modes(const FourierField& f, int comp) {
  std::vector<ModeTerm> out;
  std::vector<int> k(static_cast<std::size_t>(f.dim()));
  for (std::size_t i = 0; i < f.n_modes(); ++i) {
    const cplx v = f.at(comp, i);
    if (v == cplx(0.0, 0.0)) continue;
    f.mode(i, k.data());
    out.push_back({k, v});
  }
  return out;
}

void check_problem(const FourierField& a, const FourierField& b) {
  const int d = b.dim();
  if (a.dim() != d || a.components() != d * d || b.components() != d)
    throw ShapeError("torus: a needs d*d components and b needs d components");
}

// Galerkin matrix of L0 (adjoint=false) or L0^* (adjoint=true) on {-N..N}^d.
SpMat galerkin(const FourierField& a, const FourierField& b, int N, bool adjoint) {
  check_problem(a, b);
  const int d = b.dim();
  FourierField shape(d, N, 1);
  const std::size_t n = shape.n_modes();
  std::vector<std::vector<ModeTerm>> am(static_cast<std::size_t>(d * d)), bm(static_cast<std::size_t>(d));
  for (int c = 0; c < d * d; ++c) am[static_cast<std::size_t>(c)] = nonzero_modes(a, c);
  for (int c = 0; c < d; ++c) bm[static_cast<std::size_t>(c)] = nonzero_modes(b, c);
  std::vector<Eigen::Triplet<cplx>> trip;
  std::vector<int> kc(static_cast<std::size_t>(d)), kr(static_cast<std::size_t>(d));
  const cplx I2pi(0.0, kTwoPi);
  for (std::size_t col = 0; col < n; ++col) {
    shape.mode(col, kc.data());
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (const auto& t : am[static_cast<std::size_t>(i * d + j)]) {
          for (int q = 0; q < d; ++q) kr[static_cast<std::size_t>(q)] = kc[static_cast<std::size_t>(q)] + t.k[static_cast<std::size_t>(q)];
          if (!shape.in_range(kr.data())) continue;
          const auto& km = adjoint ? kr : kc;
          const cplx v = t.v * I2pi * static_cast<double>(km[static_cast<std::size_t>(i)]) * I2pi *
                         static_cast<double>(km[static_cast<std::size_t>(j)]);
          if (v != cplx(0.0, 0.0)) trip.emplace_back(static_cast<int>(shape.index(kr.data())), static_cast<int>(col), v);
        }
    for (int i = 0; i < d; ++i)
      for (const auto& t : bm[static_cast<std::size_t>(i)]) {
        for (int q = 0; q < d; ++q) kr[static_cast<std::size_t>(q)] = kc[static_cast<std::size_t>(q)] + t.k[static_cast<std::size_t>(q)];
        if (!shape.in_range(kr.data())) continue;
        const auto& km = adjoint ? kr : kc;
        cplx v = t.v * I2pi * static_cast<double>(km[static_cast<std::size_t>(i)]);
        if (adjoint) v = -v;
        if (v != cplx(0.0, 0.0)) trip.emplace_back(static_cast<int>(shape.index(kr.data())), static_cast<int>(col), v);
      }
  }
  SpMat L(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  L.setFromTriplets(trip.begin(), trip.end());
  return L;
}

std::size_t zero_index(const FourierField& f) {
  std::vector<int> z(static_cast<std::size_t>(f.dim()), 0);
  return f.index(z.data());
}

int grid_points(int degree) { return degree + 1; }

// Values of a d*d matrix field (or vector field) on an M^d grid, per component.
std::vector<std::vector<double>> grids_of(const FourierField& f, int M) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(f.components()));
  for (int c = 0; c < f.components(); ++c) out[static_cast<std::size_t>(c)] = f.to_grid(c, M);
  return out;
}

}  // namespace

double pairing(const FourierField& f, int cf, const FourierField& g, int cg) {
  if (f.dim() != g.dim()) throw ShapeError("pairing: dimension mismatch");
  std::vector<int> k(static_cast<std::size_t>(f.dim()));
  cplx s(0.0, 0.0);
  for (std::size_t i = 0; i < f.n_modes(); ++i) {
    const cplx v = f.at(cf, i);
    if (v == cplx(0.0, 0.0)) continue;
    f.mode(i, k.data());
    for (auto& e : k) e = -e;
    if (!g.in_range(k.data())) continue;
    s += v * g.at(cg, g.index(k.data()));
  }
  return s.real();
}

FourierField invariant_density_torus(const FourierField& a, const FourierField& b, int N) {
  const FourierField aN = a.with_cutoff(N), bN = b.with_cutoff(N);
  SpMat L = galerkin(aN, bN, N, true);
  const int d = b.dim();
  FourierField mu(d, N, 1);
  const std::size_t i0 = zero_index(mu);
  // replace the (identically zero) k = 0 row by the normalization
  L = L.transpose();
  L.prune([i0](Eigen::Index, Eigen::Index col, const cplx&) { return static_cast<std::size_t>(col) != i0; });
  L = L.transpose();
  L.insert(static_cast<Eigen::Index>(i0), static_cast<Eigen::Index>(i0)) = 1.0;
  L.makeCompressed();
  Eigen::SparseLU<SpMat> lu;
  lu.compute(L);
  if (lu.info() != Eigen::Success) throw NumericalError("invariant density: singular Galerkin system");
  CVec rhs = CVec::Zero(static_cast<Eigen::Index>(mu.n_modes()));
  rhs(static_cast<Eigen::Index>(i0)) = 1.0;
  CVec sol = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !sol.allFinite()) throw NumericalError("invariant density: solve failed");
  for (std::size_t i = 0; i < mu.n_modes(); ++i) mu.at(0, i) = sol(static_cast<Eigen::Index>(i));
  mu.symmetrize();
  const auto grid = mu.to_grid(0, 2 * N + 1);
  const double mn = *std::min_element(grid.begin(), grid.end());
  if (mn < -1e-8) throw NumericalError("invariant density negative on the grid: " + std::to_string(mn));
  return mu;
}

FourierField cell_problem_torus(const FourierField& a, const FourierField& b, const FourierField& rhs,
                                const FourierField& mu, int N) {
  const int d = b.dim();
  if (rhs.dim() != d || mu.dim() != d) throw ShapeError("cell problem: dimension mismatch");
  for (int c = 0; c < rhs.components(); ++c) {
    const double m = pairing(rhs, c, mu, 0);
    if (std::abs(m) > 1e-10)
      throw PreconditionError("cell problem: right-hand side not centered against mu (" + std::to_string(m) + ")");
  }
  const FourierField aN = a.with_cutoff(N), bN = b.with_cutoff(N), muN = mu.with_cutoff(N);
  SpMat L = galerkin(aN, bN, N, false);
  const Eigen::Index n = L.rows();
  FourierField shape(d, N, 1);
  const std::size_t i0 = zero_index(shape);
  std::vector<Eigen::Triplet<cplx>> trip;
  trip.reserve(static_cast<std::size_t>(L.nonZeros()) + 2 * static_cast<std::size_t>(n) + 1);
  for (Eigen::Index k = 0; k < L.outerSize(); ++k)
    for (SpMat::InnerIterator it(L, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  trip.emplace_back(static_cast<Eigen::Index>(i0), n, 1.0);
  std::vector<int> kk(static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < shape.n_modes(); ++i) {
    shape.mode(i, kk.data());
    for (auto& e : kk) e = -e;
    const cplx w = muN.at(0, muN.index(kk.data()));
    if (w != cplx(0.0, 0.0)) trip.emplace_back(n, static_cast<Eigen::Index>(i), w);
  }
  SpMat B(n + 1, n + 1);
  B.setFromTriplets(trip.begin(), trip.end());
  B.makeCompressed();
  Eigen::SparseLU<SpMat> lu;
  lu.compute(B);
  if (lu.info() != Eigen::Success) throw NumericalError("cell problem: singular bordered system");
  const FourierField rN = rhs.with_cutoff(N);
  FourierField phi(d, N, rhs.components());
  for (int c = 0; c < rhs.components(); ++c) {
    CVec r = CVec::Zero(n + 1);
    for (std::size_t i = 0; i < shape.n_modes(); ++i) r(static_cast<Eigen::Index>(i)) = -rN.at(c, i);
    CVec sol = lu.solve(r);
    if (lu.info() != Eigen::Success || !sol.allFinite()) throw NumericalError("cell problem: solve failed");
    for (std::size_t i = 0; i < shape.n_modes(); ++i) phi.at(c, i) = sol(static_cast<Eigen::Index>(i));
  }
  phi.symmetrize();
  return phi;
}

double cell_residual(const FourierField& a, const FourierField& b, const FourierField& phi, const FourierField& rhs,
                     int M) {
  const int d = b.dim();
  if (M <= 0) M = 2 * (phi.cutoff() + std::max(a.effective_cutoff(), b.effective_cutoff())) + 1;
  const auto ag = grids_of(a, M), bg = grids_of(b, M), rg = grids_of(rhs, M);
  double worst = 0.0, scale = 0.0;
  for (int c = 0; c < phi.components(); ++c) {
    FourierField pc = phi.component(c);
    std::vector<double> total(rg[static_cast<std::size_t>(c)]);
    for (double v : total) scale = std::max(scale, std::abs(v));
    for (int i = 0; i < d; ++i) {
      FourierField di = pc.derivative(i);
      auto gi = di.to_grid(0, M);
      for (std::size_t p = 0; p < total.size(); ++p) total[p] += bg[static_cast<std::size_t>(i)][p] * gi[p];
      for (int j = 0; j < d; ++j) {
        auto gij = di.derivative(j).to_grid(0, M);
        for (std::size_t p = 0; p < total.size(); ++p) total[p] += ag[static_cast<std::size_t>(i * d + j)][p] * gij[p];
      }
    }
    for (double v : total) worst = std::max(worst, std::abs(v));
  }
  return scale > 0.0 ? worst / scale : worst;
}

double adjoint_pairing(const FourierField& a, const FourierField& b, const FourierField& mu, const FourierField& psi) {
  const int d = b.dim();
  const int deg = psi.cutoff() + std::max(a.effective_cutoff(), b.effective_cutoff()) + mu.cutoff();
  const int M = grid_points(deg);
  const auto ag = grids_of(a, M), bg = grids_of(b, M);
  const auto mg = mu.to_grid(0, M);
  std::vector<double> Lpsi(mg.size(), 0.0);
  for (int i = 0; i < d; ++i) {
    FourierField di = psi.derivative(i);
    auto gi = di.to_grid(0, M);
    for (std::size_t p = 0; p < Lpsi.size(); ++p) Lpsi[p] += bg[static_cast<std::size_t>(i)][p] * gi[p];
    for (int j = 0; j < d; ++j) {
      auto gij = di.derivative(j).to_grid(0, M);
      for (std::size_t p = 0; p < Lpsi.size(); ++p) Lpsi[p] += ag[static_cast<std::size_t>(i * d + j)][p] * gij[p];
    }
  }
  double s = 0.0;
  for (std::size_t p = 0; p < Lpsi.size(); ++p) s += Lpsi[p] * mg[p];
  return s / static_cast<double>(Lpsi.size());
}

TorusHomogData effective_torus(const FourierField& a, const FourierField& b, const FourierField& c, int N) {
  check_problem(a, b);
  const int d = b.dim();
  if (c.dim() != d || c.components() != d) throw ShapeError("torus: c needs d components");
  TorusHomogData out;
  out.N = N;
  out.mu = invariant_density_torus(a, b, N);
  out.density_min = [&] {
    auto g = out.mu.to_grid(0, 2 * N + 1);
    return *std::min_element(g.begin(), g.end());
  }();
  out.bbar.resize(d);
  FourierField rhs = b.with_cutoff(std::max(N, b.cutoff()));
  const std::size_t i0 = zero_index(rhs);
  for (int i = 0; i < d; ++i) {
    out.bbar(i) = pairing(b, i, out.mu, 0);
    rhs.at(i, i0) -= out.bbar(i);
  }
  // exact centering of the discrete rhs against the discrete mu
  for (int i = 0; i < d; ++i) {
    const double m = pairing(rhs, i, out.mu, 0);
    rhs.at(i, i0) -= m;
  }
  out.phi = cell_problem_torus(a, b, rhs, out.mu, N);
  out.cell_residual = cell_residual(a.with_cutoff(N), b.with_cutoff(N), out.phi, rhs.with_cutoff(N));
  double cen = 0.0;
  for (int i = 0; i < d; ++i) cen = std::max(cen, std::abs(pairing(out.phi, i, out.mu, 0)));
  out.centering = cen;

  const int Ncoef = std::max({a.effective_cutoff(), b.effective_cutoff(), c.effective_cutoff()});
  const int M = grid_points(3 * N + Ncoef);
  const auto ag = grids_of(a, M), cg = grids_of(c, M);
  const auto mg = out.mu.to_grid(0, M);
  std::vector<std::vector<double>> dphi(static_cast<std::size_t>(d * d));
  for (int i = 0; i < d; ++i) {
    FourierField pi = out.phi.component(i);
    for (int j = 0; j < d; ++j) dphi[static_cast<std::size_t>(i * d + j)] = pi.derivative(j).to_grid(0, M);
  }
  out.F = Vec::Zero(d);
  out.G = Mat::Zero(d, d);
  Mat K(d, d), A(d, d);
  Vec cv(d);
  const std::size_t npts = mg.size();
  for (std::size_t p = 0; p < npts; ++p) {
    for (int i = 0; i < d; ++i) {
      cv(i) = cg[static_cast<std::size_t>(i)][p];
      for (int j = 0; j < d; ++j) {
        K(i, j) = (i == j ? 1.0 : 0.0) + dphi[static_cast<std::size_t>(i * d + j)][p];
        A(i, j) = ag[static_cast<std::size_t>(i * d + j)][p];
      }
    }
    out.F += mg[p] * (K * cv);
    out.G += mg[p] * (K * A * K.transpose());
  }
  out.F /= static_cast<double>(npts);
  out.G /= static_cast<double>(npts);
  out.G = 0.5 * (out.G + out.G.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(out.G, Eigen::EigenvaluesOnly);
  if (!(es.eigenvalues().minCoeff() > 0.0)) throw NumericalError("effective diffusion is not positive definite");
  return out;
}

namespace {

// Hot-loop evaluator of a Hermitian field component: c0 + 2 Re sum over
// half the nonzero modes.
std::function<double(const double*)> half_evaluator(const FourierField& f, int comp) {
  if (!f.is_hermitian(1e-12)) return f.evaluator(comp);
  struct Term {
    std::vector<double> k;
    double re, im;
  };
  std::vector<Term> terms;
  double c0 = 0.0;
  const int d = f.dim();
  std::vector<int> k(static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < f.n_modes(); ++i) {
    const cplx v = f.at(comp, i);
    if (v == cplx(0.0, 0.0)) continue;
    f.mode(i, k.data());
    int first = 0;
    for (int a = 0; a < d; ++a)
      if (k[static_cast<std::size_t>(a)] != 0) {
        first = k[static_cast<std::size_t>(a)];
        break;
      }
    if (first == 0) {
      c0 += v.real();
      continue;
    }
    if (first < 0) continue;
    terms.push_back({std::vector<double>(k.begin(), k.end()), 2.0 * v.real(), 2.0 * v.imag()});
  }
  return [terms, c0, d](const double* x) {
    double s = c0;
    for (const auto& t : terms) {
      double ph = 0.0;
      for (int a = 0; a < d; ++a) ph += t.k[static_cast<std::size_t>(a)] * x[a];
      ph *= kTwoPi;
      s += t.re * std::cos(ph) - t.im * std::sin(ph);
    }
    return s;
  };
}

}  // namespace

MultiscaleSystem torus_multiscale_system(const TorusProblem& prob, const TorusHomogData& data) {
  const int d = prob.d;
  std::vector<std::function<double(const double*)>> ae, be, ce;
  for (int c = 0; c < d * d; ++c) ae.push_back(half_evaluator(prob.a, c));
  for (int c = 0; c < d; ++c) {
    be.push_back(half_evaluator(prob.b, c));
    ce.push_back(half_evaluator(prob.c, c));
  }
  const Vec bbar = data.bbar;
  auto sqrt_a = [ae, d](const double* x, double* o) {
    if (d == 1) {
      const double v = ae[0](x);
      if (!(v > 0.0)) throw NumericalError("torus: diffusion coefficient not positive");
      o[0] = std::sqrt(v);
      return;
    }
    Mat A(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) A(i, j) = ae[static_cast<std::size_t>(i * d + j)](x);
    if (d == 2) {
      const double det = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);
      const double s = std::sqrt(std::max(det, 0.0));
      const double t = std::sqrt(A(0, 0) + A(1, 1) + 2.0 * s);
      o[0] = (A(0, 0) + s) / t;
      o[1] = A(0, 1) / t;
      o[2] = A(1, 0) / t;
      o[3] = (A(1, 1) + s) / t;
      return;
    }
    RowMat R = psd_sqrt(0.5 * (A + A.transpose()));
    std::copy(R.data(), R.data() + R.size(), o);
  };
  MultiscaleSystem sys;
  sys.name = prob.name;
  sys.d = sys.vartheta = sys.m = d;
  auto vec_field = [d](std::vector<std::function<double(const double*)>> ev, Vec shift) {
    CoefficientField f;
    f.rows = d;
    f.cols = 1;
    f.eval = [ev, shift, d](const double* x, const double*, double* o) {
      for (int i = 0; i < d; ++i) o[i] = ev[static_cast<std::size_t>(i)](x) - shift(i);
    };
    return f;
  };
  sys.b = vec_field(be, Vec::Zero(d));
  sys.c = vec_field(ce, Vec::Zero(d));
  sys.F = vec_field(ce, Vec::Zero(d));
  sys.H = vec_field(be, bbar);
  CoefficientField s;
  s.rows = d;
  s.cols = d;
  s.eval = [sqrt_a](const double* x, const double*, double* o) { sqrt_a(x, o); };
  sys.sigma = s;
  sys.G = s;
  sys.flags.periodic = true;
  sys.flags.nondegenerate_fast = true;
  for (int i = 0; i < d; ++i) {
    sys.params["bbar" + std::to_string(i)] = data.bbar(i);
    sys.params["F" + std::to_string(i)] = data.F(i);
    for (int j = 0; j < d; ++j) sys.params["G" + std::to_string(i) + std::to_string(j)] = data.G(i, j);
  }
  return sys;
}

TorusProblem torus_problem_preset(const std::string& name, const nlohmann::json& p) {
  TorusProblem prob;
  prob.name = name;
  const int N = p.value("N", 16);
  if (N < 1) throw ConfigError("torus preset: N must be positive");
  const cplx half_i(0.0, 0.5);
  if (name == "torus-1d") {
    prob.d = 1;
    prob.a = FourierField(1, N, 1);
    prob.a.set(0, {0}, p.value("a0", 1.0));
    const double a1 = p.value("a1", 0.0);
    prob.a.set(0, {1}, -half_i * a1);
    prob.a.set(0, {-1}, half_i * a1);
    if (std::abs(a1) >= p.value("a0", 1.0)) throw ConfigError("torus-1d: a must stay positive (|a1| < a0)");
    prob.b = FourierField(1, N, 1);
    const double beta = p.value("beta", 1.0);
    prob.b.set(0, {1}, -half_i * beta);
    prob.b.set(0, {-1}, half_i * beta);
    prob.c = FourierField::constant(1, N, {p.value("c0", 0.0)});
  } else if (name == "torus-2d-shear") {
    prob.d = 2;
    prob.a = FourierField::constant(2, N, {1.0, 0.0, 0.0, 1.0});
    prob.b = FourierField(2, N, 2);
    const double sh = p.value("shear", 1.0);
    prob.b.set(0, {0, 1}, -half_i * sh);
    prob.b.set(0, {0, -1}, half_i * sh);
    prob.c = FourierField::constant(2, N, {p.value("c0", 0.0), p.value("c1", 0.0)});
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return prob;
}

MultiscaleSystem torus_preset_system(const std::string& name, const nlohmann::json& params) {
  TorusProblem prob = torus_problem_preset(name, params);
  TorusHomogData data = effective_torus(prob.a, prob.b, prob.c, prob.a.cutoff());
  return torus_multiscale_system(prob, data);
}

double torus_reference_expectation(const FourierField& phi, const Vec& y0, const Vec& F, const Mat& G, double t) {
  const int d = phi.dim();
  std::vector<int> k(static_cast<std::size_t>(d));
  Vec kv(d);
  double s = 0.0;
  for (std::size_t i = 0; i < phi.n_modes(); ++i) {
    const cplx v = phi.at(0, i);
    if (v == cplx(0.0, 0.0)) continue;
    phi.mode(i, k.data());
    for (int a = 0; a < d; ++a) kv(a) = k[static_cast<std::size_t>(a)];
    const double ph = kTwoPi * kv.dot(y0 + F * t);
    const double damp = std::exp(-4.0 * kPi * kPi * kv.dot(G * kv) * t);
    s += damp * (v.real() * std::cos(ph) - v.imag() * std::sin(ph));
  }
  return s;
}

ConvergenceReport torus_uniform_error(const TorusProblem& prob, const FourierField& phi,
                                      const std::vector<double>& eps_grid, const std::vector<double>& t_grid,
                                      const Vec& x0, std::size_t n_paths, std::uint64_t seed,
                                      const TorusErrorOptions& topts) {
  const int d = prob.d;
  if (phi.dim() != d || phi.components() != 1) throw ShapeError("torus observable must be a scalar field on T^d");
  if (x0.size() != d) throw ShapeError("torus start has wrong dimension");
  TorusHomogData data = effective_torus(prob.a, prob.b, prob.c, topts.N);
  MultiscaleSystem sys = torus_multiscale_system(prob, data);
  finalize_system(sys);
  auto phi_eval = half_evaluator(phi, 0);
  TestObservable obs;
  obs.name = "torus-observable";
  obs.phi = [phi_eval](const double*, const double* y) { return phi_eval(y); };
  obs.phibar = [phi_eval](const double* y) { return phi_eval(y); };
  obs.slow_only = true;

  ConvergenceReport rep;
  rep.system = prob.name;
  rep.observable = obs.name;
  rep.eps = eps_grid;
  rep.t = t_grid;
  rep.seed = seed;
  rep.n_paths = n_paths;
  for (double eps : eps_grid) {
    Vec X0(d);
    for (int i = 0; i < d; ++i) X0(i) = eps * (std::round(x0(i) / eps) + topts.fast_phase);
    Vec z0(2 * d);
    z0.head(d) = X0 / eps;
    z0.tail(d) = X0;
    HomogenizedReference ref;
    ref.kind = HomogenizedReference::Kind::Closed;
    ref.vartheta = d;
    const Vec F = data.F;
    const Mat G = data.G;
    ref.closed = [phi, X0, F, G](double t) { return torus_reference_expectation(phi, X0, F, G, t); };
    auto col = joint_law_error(sys, obs, ref, eps, t_grid, z0, n_paths, seed, topts.integration);
    rep.cells.insert(rep.cells.end(), col.begin(), col.end());
  }
  summarize_report(rep);
  return rep;
}

}  // namespace homoscale
