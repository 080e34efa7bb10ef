#include "homoscale/system.hpp"

#include <boost/random/sobol.hpp>
#include <boost/random/uniform_01.hpp>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace homoscale {

Mat CoefficientField::operator()(const Vec& x, const Vec& y) const {
  std::vector<double> buf(static_cast<std::size_t>(size()));
  eval(x.data(), y.data(), buf.data());
  Mat out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out(r, c) = buf[static_cast<std::size_t>(r * cols + c)];
  return out;
}

CoefficientField CoefficientField::zeros(int rows, int cols) {
  CoefficientField f;
  f.rows = rows;
  f.cols = cols;
  f.zero = true;
  f.x_free = true;
  const int n = rows * cols;
  f.eval = [n](const double*, const double*, double* out) { std::fill(out, out + n, 0.0); };
  return f;
}

CoefficientField CoefficientField::constant(const Mat& value) {
  CoefficientField f;
  f.rows = static_cast<int>(value.rows());
  f.cols = static_cast<int>(value.cols());
  f.x_free = true;
  f.zero = value.isZero(0.0);
  RowMat v = value;
  std::vector<double> data(v.data(), v.data() + v.size());
  f.eval = [data](const double*, const double*, double* out) { std::copy(data.begin(), data.end(), out); };
  return f;
}

const CoefficientField& MultiscaleSystem::aux_field(const std::string& key) const {
  auto it = aux.find(key);
  if (it == aux.end()) throw PreconditionError("system '" + name + "' has no auxiliary field '" + key + "'");
  return it->second;
}

RowMat probe_grid(int dim, int n) {
  RowMat P(n, dim);
  if (dim == 0) return P;
  boost::random::sobol gen(static_cast<std::size_t>(dim));
  gen.discard(static_cast<std::uintmax_t>(dim));  // skip the origin
  const double scale = 1.0 / (static_cast<double>(gen.max()) - static_cast<double>(gen.min()) + 1.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < dim; ++k) P(i, k) = -5.0 + 10.0 * (static_cast<double>(gen() - gen.min()) + 0.5) * scale;
  return P;
}

namespace {

constexpr double kSentinel = -1.2345678901234567e300;

void split_point(const RowMat& probes, int i, int d, std::vector<double>& x, std::vector<double>& y) {
  x.assign(probes.row(i).data(), probes.row(i).data() + d);
  y.assign(probes.row(i).data() + d, probes.row(i).data() + probes.cols());
}

std::vector<double> eval_at(const CoefficientField& f, const double* x, const double* y) {
  std::vector<double> out(static_cast<std::size_t>(f.size()));
  f.eval(x, y, out.data());
  return out;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double e : v) m = std::max(m, std::abs(e));
  return m;
}

bool matches(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  const double scale = 1.0 + std::max(max_abs(a), max_abs(b));
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(std::abs(a[i] - b[i]) <= tol * scale)) return false;
  return true;
}

// Affine model of a vector field by unit-vector evaluation, verified on probes.
bool infer_affine(const CoefficientField& f, int d, int vt, const RowMat& probes, AffineMap& out) {
  std::vector<double> zx(static_cast<std::size_t>(d), 0.0), zy(static_cast<std::size_t>(vt), 0.0);
  auto f0 = eval_at(f, zx.data(), zy.data());
  out.v = Eigen::Map<Vec>(f0.data(), f.rows);
  out.Mx.resize(f.rows, d);
  out.My.resize(f.rows, vt);
  for (int k = 0; k < d; ++k) {
    auto ex = zx;
    ex[static_cast<std::size_t>(k)] = 1.0;
    auto fk = eval_at(f, ex.data(), zy.data());
    for (int r = 0; r < f.rows; ++r) out.Mx(r, k) = fk[static_cast<std::size_t>(r)] - f0[static_cast<std::size_t>(r)];
  }
  for (int j = 0; j < vt; ++j) {
    auto ey = zy;
    ey[static_cast<std::size_t>(j)] = 1.0;
    auto fj = eval_at(f, zx.data(), ey.data());
    for (int r = 0; r < f.rows; ++r) out.My(r, j) = fj[static_cast<std::size_t>(r)] - f0[static_cast<std::size_t>(r)];
  }
  std::vector<double> x, y;
  for (int i = 0; i < probes.rows(); ++i) {
    split_point(probes, i, d, x, y);
    auto fv = eval_at(f, x.data(), y.data());
    Vec pred = out.v + out.Mx * Eigen::Map<Vec>(x.data(), d) + out.My * Eigen::Map<Vec>(y.data(), vt);
    std::vector<double> pv(pred.data(), pred.data() + pred.size());
    if (!matches(fv, pv, 1e-9)) return false;
  }
  return true;
}

bool affine_in_x(const CoefficientField& f, int d, const RowMat& probes) {
  if (f.zero || f.x_free) return true;
  std::vector<double> x1, y1, x2, y2;
  const int n = static_cast<int>(probes.rows());
  for (int i = 0; i < n; ++i) {
    split_point(probes, i, d, x1, y1);
    split_point(probes, (i + 1) % n, d, x2, y2);
    std::vector<double> xm(x1.size());
    for (std::size_t k = 0; k < x1.size(); ++k) xm[k] = 0.3 * x1[k] + 0.7 * x2[k];
    auto a = eval_at(f, x1.data(), y1.data());
    auto b = eval_at(f, x2.data(), y1.data());
    auto c = eval_at(f, xm.data(), y1.data());
    std::vector<double> pred(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) pred[k] = 0.3 * a[k] + 0.7 * b[k];
    if (!matches(c, pred, 1e-9)) return false;
  }
  return true;
}

bool independent_of_x(const CoefficientField& f, int d, const RowMat& probes) {
  if (f.zero || f.x_free) return true;
  std::vector<double> x, y, zx(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < probes.rows(); ++i) {
    split_point(probes, i, d, x, y);
    if (!matches(eval_at(f, x.data(), y.data()), eval_at(f, zx.data(), y.data()), 1e-12)) return false;
  }
  return true;
}

bool constant_field(const CoefficientField& f, int d, int vt, const RowMat& probes) {
  if (f.zero) return true;
  std::vector<double> x, y, zx(static_cast<std::size_t>(d), 0.0), zy(static_cast<std::size_t>(vt), 0.0);
  auto f0 = eval_at(f, zx.data(), zy.data());
  for (int i = 0; i < probes.rows(); ++i) {
    split_point(probes, i, d, x, y);
    if (!matches(eval_at(f, x.data(), y.data()), f0, 1e-12)) return false;
  }
  return true;
}

}  // namespace

void shape_check(const CoefficientField& f, const std::string& label, int d, int vartheta,
                 const RowMat& probes) {
  if (!f.eval) throw ShapeError("field '" + label + "' has no evaluator");
  const std::size_t n = static_cast<std::size_t>(f.size());
  std::vector<double> buf(n + 8);
  std::vector<double> x, y;
  for (int i = 0; i < probes.rows(); ++i) {
    split_point(probes, i, d, x, y);
    std::fill(buf.begin(), buf.end(), kSentinel);
    f.eval(x.data(), y.data(), buf.data());
    for (std::size_t k = 0; k < n; ++k)
      if (buf[k] == kSentinel || !std::isfinite(buf[k]))
        throw ShapeError("field '" + label + "' left entry " + std::to_string(k) + " unset or non-finite");
    for (std::size_t k = n; k < buf.size(); ++k)
      if (buf[k] != kSentinel) throw ShapeError("field '" + label + "' wrote past its declared shape");
  }
  (void)vartheta;
}

double gradient_check(const CoefficientField& f, int d, int vartheta, const RowMat& probes, double h) {
  double worst = 0.0;
  std::vector<double> x, y;
  const std::size_t n = static_cast<std::size_t>(f.size());
  auto check = [&](const FieldFn& g, bool in_x) {
    const int dim = in_x ? d : vartheta;
    std::vector<double> ga(n * static_cast<std::size_t>(dim));
    for (int i = 0; i < probes.rows(); ++i) {
      split_point(probes, i, d, x, y);
      g(x.data(), y.data(), ga.data());
      for (int k = 0; k < dim; ++k) {
        auto& v = in_x ? x : y;
        const double v0 = v[static_cast<std::size_t>(k)];
        const double step = h * (1.0 + std::abs(v0));
        v[static_cast<std::size_t>(k)] = v0 + step;
        auto fp = eval_at(f, x.data(), y.data());
        v[static_cast<std::size_t>(k)] = v0 - step;
        auto fm = eval_at(f, x.data(), y.data());
        v[static_cast<std::size_t>(k)] = v0;
        for (std::size_t e = 0; e < n; ++e) {
          const double fd = (fp[e] - fm[e]) / (2.0 * step);
          const double an = ga[e * static_cast<std::size_t>(dim) + static_cast<std::size_t>(k)];
          worst = std::max(worst, std::abs(fd - an) / (1.0 + std::abs(an)));
        }
      }
    }
  };
  if (f.grad_x) check(f.grad_x, true);
  if (f.grad_y) check(f.grad_y, false);
  return worst;
}

void finalize_system(MultiscaleSystem& sys) {
  const int d = sys.d, vt = sys.vartheta, m = sys.m;
  if (d < 1 || vt < 1 || m < 1) throw ShapeError("dims d, vartheta, m must be positive");
  auto expect = [](const CoefficientField& f, const char* label, int rows, int cols) {
    if (f.rows != rows || f.cols != cols)
      throw ShapeError(std::string("field '") + label + "' has shape " + std::to_string(f.rows) + "x" +
                       std::to_string(f.cols) + ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  };
  expect(sys.b, "b", d, 1);
  expect(sys.c, "c", d, 1);
  expect(sys.sigma, "sigma", d, m);
  expect(sys.F, "F", vt, 1);
  expect(sys.H, "H", vt, 1);
  expect(sys.G, "G", vt, m);
  if (sys.flags.linear_fast) expect(sys.A, "A", d, d);

  RowMat probes = probe_grid(d + vt, 1000);
  RowMat few = probes.topRows(100);
  shape_check(sys.b, "b", d, vt, few);
  shape_check(sys.c, "c", d, vt, few);
  shape_check(sys.sigma, "sigma", d, vt, few);
  shape_check(sys.F, "F", d, vt, few);
  shape_check(sys.H, "H", d, vt, few);
  shape_check(sys.G, "G", d, vt, few);
  if (sys.flags.linear_fast) shape_check(sys.A, "A", d, vt, few);

  std::vector<double> x, y;
  if (sys.flags.averaging) {
    for (int i = 0; i < probes.rows(); ++i) {
      split_point(probes, i, d, x, y);
      if (max_abs(eval_at(sys.c, x.data(), y.data())) != 0.0 || max_abs(eval_at(sys.H, x.data(), y.data())) != 0.0)
        throw PreconditionError("averaging flag declared but c or H is nonzero at a probe point");
    }
  }
  if (sys.flags.linear_fast) {
    for (int i = 0; i < probes.rows(); ++i) {
      split_point(probes, i, d, x, y);
      auto bv = eval_at(sys.b, x.data(), y.data());
      auto Av = eval_at(sys.A, x.data(), y.data());
      Eigen::Map<RowMat> Am(Av.data(), d, d);
      Vec r = Eigen::Map<Vec>(bv.data(), d) + Am * Eigen::Map<Vec>(x.data(), d);
      if (r.norm() > 1e-9 * (1.0 + Eigen::Map<Vec>(bv.data(), d).norm()))
        throw PreconditionError("linear_fast flag declared but b(x,y) + A(y)x != 0 at a probe point");
    }
  }

  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (int i = 0; i < probes.rows(); ++i) {
    split_point(probes, i, d, x, y);
    auto sv = eval_at(sys.sigma, x.data(), y.data());
    Eigen::Map<RowMat> S(sv.data(), d, m);
    Mat SS = S * S.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> es(SS, Eigen::EigenvaluesOnly);
    lo = std::min(lo, es.eigenvalues().minCoeff());
    hi = std::max(hi, es.eigenvalues().maxCoeff());
  }
  sys.lambda_hat = lo;
  sys.Lambda_hat = hi;
  if (sys.flags.nondegenerate_fast && !(lo > 0.0))
    throw PreconditionError("non-degenerate fast noise declared but sigma sigma^T has eigenvalue " +
                            std::to_string(lo) + " at a probe point");

  SystemStructure st;
  st.fast_x_free_noise = independent_of_x(sys.sigma, d, probes);
  st.sigma_constant = constant_field(sys.sigma, d, vt, probes);
  st.c_x_free = independent_of_x(sys.c, d, probes);
  st.A_constant = sys.flags.linear_fast && constant_field(sys.A, d, vt, probes);
  st.slow_affine_x = affine_in_x(sys.F, d, probes) && affine_in_x(sys.H, d, probes) &&
                     independent_of_x(sys.G, d, probes);
  const bool G_const = constant_field(sys.G, d, vt, probes);
  st.fully_linear = st.sigma_constant && G_const && infer_affine(sys.b, d, vt, probes, st.b) &&
                    infer_affine(sys.c, d, vt, probes, st.c) && infer_affine(sys.F, d, vt, probes, st.F) &&
                    infer_affine(sys.H, d, vt, probes, st.H);
  if (st.fully_linear) {
    std::vector<double> zx(static_cast<std::size_t>(d), 0.0), zy(static_cast<std::size_t>(vt), 0.0);
    auto sv = eval_at(sys.sigma, zx.data(), zy.data());
    auto gv = eval_at(sys.G, zx.data(), zy.data());
    st.sigma0 = Eigen::Map<RowMat>(sv.data(), d, m);
    st.G0 = Eigen::Map<RowMat>(gv.data(), vt, m);
  }
  sys.structure = st;
}

double PolynomialWeight::operator()(double norm) const {
  if (r >= 0.0) return 1.0 + std::pow(norm, r);
  return 1.0 / (1.0 + std::pow(norm, -r));
}

double PolynomialWeight::operator()(const Vec& x) const { return (*this)(x.norm()); }

double PolynomialWeight::shift_constant() const { return std::pow(2.0, std::max(1.0, std::abs(r))); }

}  // namespace homoscale
