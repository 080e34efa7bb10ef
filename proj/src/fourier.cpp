#include "homoscale/fourier.hpp"

#include <algorithm>
#include <cmath>

namespace homoscale {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::size_t ipow(std::size_t b, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

// Applies W (Lout x Lin) along one axis of a row-major tensor.
std::vector<cplx> transform_axis(const std::vector<cplx>& in, const std::vector<std::size_t>& shape, int axis,
                                 const std::vector<cplx>& W, std::size_t Lout) {
  const std::size_t Lin = shape[static_cast<std::size_t>(axis)];
  std::size_t outer = 1, inner = 1;
  for (int a = 0; a < axis; ++a) outer *= shape[static_cast<std::size_t>(a)];
  for (std::size_t a = static_cast<std::size_t>(axis) + 1; a < shape.size(); ++a) inner *= shape[a];
  std::vector<cplx> out(outer * Lout * inner, cplx(0.0, 0.0));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < Lout; ++j) {
      cplx* dst = out.data() + (o * Lout + j) * inner;
      for (std::size_t k = 0; k < Lin; ++k) {
        const cplx w = W[j * Lin + k];
        const cplx* src = in.data() + (o * Lin + k) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += w * src[i];
      }
    }
  return out;
}

}  // namespace

std::vector<cplx> modes_to_grid(const std::vector<cplx>& modes, int d, int N, int M) {
  const std::size_t L = static_cast<std::size_t>(2 * N + 1);
  std::vector<cplx> W(static_cast<std::size_t>(M) * L);
  for (int j = 0; j < M; ++j)
    for (int k = -N; k <= N; ++k)
      W[static_cast<std::size_t>(j) * L + static_cast<std::size_t>(k + N)] =
          std::polar(1.0, kTwoPi * static_cast<double>(k) * static_cast<double>(j) / static_cast<double>(M));
  std::vector<std::size_t> shape(static_cast<std::size_t>(d), L);
  std::vector<cplx> cur = modes;
  for (int a = 0; a < d; ++a) {
    cur = transform_axis(cur, shape, a, W, static_cast<std::size_t>(M));
    shape[static_cast<std::size_t>(a)] = static_cast<std::size_t>(M);
  }
  return cur;
}

std::vector<cplx> grid_to_modes(const std::vector<cplx>& grid, int d, int M, int N) {
  if (M < 2 * N + 1) throw PreconditionError("grid_to_modes: grid too coarse for the cutoff");
  const std::size_t L = static_cast<std::size_t>(2 * N + 1);
  std::vector<cplx> W(L * static_cast<std::size_t>(M));
  for (int k = -N; k <= N; ++k)
    for (int j = 0; j < M; ++j)
      W[static_cast<std::size_t>(k + N) * static_cast<std::size_t>(M) + static_cast<std::size_t>(j)] =
          std::polar(1.0 / static_cast<double>(M),
                     -kTwoPi * static_cast<double>(k) * static_cast<double>(j) / static_cast<double>(M));
  std::vector<std::size_t> shape(static_cast<std::size_t>(d), static_cast<std::size_t>(M));
  std::vector<cplx> cur = grid;
  for (int a = 0; a < d; ++a) {
    cur = transform_axis(cur, shape, a, W, L);
    shape[static_cast<std::size_t>(a)] = L;
  }
  return cur;
}

FourierField::FourierField(int d, int N, int ncomp) : d_(d), N_(N), ncomp_(ncomp) {
  if (d < 1 || N < 0 || ncomp < 1) throw PreconditionError("FourierField: invalid dimensions");
  n_modes_ = ipow(static_cast<std::size_t>(2 * N + 1), d);
  coef_.assign(n_modes_ * static_cast<std::size_t>(ncomp), cplx(0.0, 0.0));
}

std::size_t FourierField::index(const int* k) const {
  std::size_t idx = 0;
  for (int a = 0; a < d_; ++a) idx = idx * static_cast<std::size_t>(2 * N_ + 1) + static_cast<std::size_t>(k[a] + N_);
  return idx;
}

void FourierField::mode(std::size_t idx, int* k) const {
  for (int a = d_ - 1; a >= 0; --a) {
    k[a] = static_cast<int>(idx % static_cast<std::size_t>(2 * N_ + 1)) - N_;
    idx /= static_cast<std::size_t>(2 * N_ + 1);
  }
}

bool FourierField::in_range(const int* k) const {
  for (int a = 0; a < d_; ++a)
    if (k[a] < -N_ || k[a] > N_) return false;
  return true;
}

cplx FourierField::get(int comp, std::initializer_list<int> k) const {
  std::vector<int> kv(k);
  if (static_cast<int>(kv.size()) != d_) throw ShapeError("FourierField::get: wrong mode dimension");
  if (!in_range(kv.data())) return cplx(0.0, 0.0);
  return at(comp, index(kv.data()));
}

void FourierField::set(int comp, std::initializer_list<int> k, cplx v) {
  std::vector<int> kv(k);
  if (static_cast<int>(kv.size()) != d_ || !in_range(kv.data())) throw ShapeError("FourierField::set: mode out of range");
  at(comp, index(kv.data())) = v;
}

double FourierField::eval(int comp, const double* x) const {
  std::vector<int> k(static_cast<std::size_t>(d_));
  double s = 0.0;
  for (std::size_t i = 0; i < n_modes_; ++i) {
    const cplx c = at(comp, i);
    if (c == cplx(0.0, 0.0)) continue;
    mode(i, k.data());
    double ph = 0.0;
    for (int a = 0; a < d_; ++a) ph += static_cast<double>(k[static_cast<std::size_t>(a)]) * x[a];
    ph *= kTwoPi;
    s += c.real() * std::cos(ph) - c.imag() * std::sin(ph);
  }
  return s;
}

void FourierField::eval_all(const double* x, double* out) const {
  for (int c = 0; c < ncomp_; ++c) out[c] = eval(c, x);
}

std::function<double(const double*)> FourierField::evaluator(int comp) const {
  struct Term {
    std::vector<double> k;
    double re, im;
  };
  std::vector<Term> terms;
  double c0 = 0.0;
  std::vector<int> k(static_cast<std::size_t>(d_));
  for (std::size_t i = 0; i < n_modes_; ++i) {
    const cplx c = at(comp, i);
    if (c == cplx(0.0, 0.0)) continue;
    mode(i, k.data());
    bool zero_mode = std::all_of(k.begin(), k.end(), [](int v) { return v == 0; });
    if (zero_mode) {
      c0 += c.real();
      continue;
    }
    terms.push_back({std::vector<double>(k.begin(), k.end()), c.real(), c.imag()});
  }
  const int d = d_;
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

bool FourierField::is_hermitian(double tol) const {
  std::vector<int> k(static_cast<std::size_t>(d_)), km(static_cast<std::size_t>(d_));
  for (int c = 0; c < ncomp_; ++c)
    for (std::size_t i = 0; i < n_modes_; ++i) {
      mode(i, k.data());
      for (int a = 0; a < d_; ++a) km[static_cast<std::size_t>(a)] = -k[static_cast<std::size_t>(a)];
      if (std::abs(at(c, i) - std::conj(at(c, index(km.data())))) > tol) return false;
    }
  return true;
}

void FourierField::symmetrize() {
  std::vector<int> k(static_cast<std::size_t>(d_)), km(static_cast<std::size_t>(d_));
  for (int c = 0; c < ncomp_; ++c)
    for (std::size_t i = 0; i < n_modes_; ++i) {
      mode(i, k.data());
      for (int a = 0; a < d_; ++a) km[static_cast<std::size_t>(a)] = -k[static_cast<std::size_t>(a)];
      const std::size_t j = index(km.data());
      if (j < i) continue;
      const cplx avg = 0.5 * (at(c, i) + std::conj(at(c, j)));
      at(c, i) = avg;
      at(c, j) = std::conj(avg);
    }
}

FourierField FourierField::with_cutoff(int N2) const {
  FourierField out(d_, N2, ncomp_);
  std::vector<int> k(static_cast<std::size_t>(d_));
  for (std::size_t i = 0; i < n_modes_; ++i) {
    mode(i, k.data());
    if (!out.in_range(k.data())) continue;
    const std::size_t j = out.index(k.data());
    for (int c = 0; c < ncomp_; ++c) out.at(c, j) = at(c, i);
  }
  return out;
}

FourierField FourierField::derivative(int axis) const {
  FourierField out(d_, N_, ncomp_);
  std::vector<int> k(static_cast<std::size_t>(d_));
  for (std::size_t i = 0; i < n_modes_; ++i) {
    mode(i, k.data());
    const cplx mult(0.0, kTwoPi * static_cast<double>(k[static_cast<std::size_t>(axis)]));
    for (int c = 0; c < ncomp_; ++c) out.at(c, i) = mult * at(c, i);
  }
  return out;
}

FourierField FourierField::component(int comp) const {
  FourierField out(d_, N_, 1);
  for (std::size_t i = 0; i < n_modes_; ++i) out.at(0, i) = at(comp, i);
  return out;
}

int FourierField::effective_cutoff() const {
  int best = 0;
  std::vector<int> k(static_cast<std::size_t>(d_));
  for (int c = 0; c < ncomp_; ++c)
    for (std::size_t i = 0; i < n_modes_; ++i) {
      if (at(c, i) == cplx(0.0, 0.0)) continue;
      mode(i, k.data());
      for (int v : k) best = std::max(best, std::abs(v));
    }
  return best;
}

double FourierField::l2_norm() const {
  double s = 0.0;
  for (const auto& c : coef_) s += std::norm(c);
  return std::sqrt(s);
}

double FourierField::max_abs_diff(const FourierField& other) const {
  const int N = std::max(N_, other.N_);
  FourierField a = with_cutoff(N), b = other.with_cutoff(N);
  if (a.ncomp_ != b.ncomp_ || a.d_ != b.d_) throw ShapeError("max_abs_diff: incompatible fields");
  double m = 0.0;
  for (std::size_t i = 0; i < a.coef_.size(); ++i) m = std::max(m, std::abs(a.coef_[i] - b.coef_[i]));
  return m;
}

std::vector<cplx> FourierField::to_grid_complex(int comp, int M) const {
  std::vector<cplx> modes(coef_.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(comp) * n_modes_),
                          coef_.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(comp + 1) * n_modes_));
  return modes_to_grid(modes, d_, N_, M);
}

std::vector<double> FourierField::to_grid(int comp, int M) const {
  auto g = to_grid_complex(comp, M);
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i].real();
  return out;
}

FourierField FourierField::from_grid(const std::vector<std::vector<double>>& comps, int d, int M, int N) {
  FourierField out(d, N, static_cast<int>(comps.size()));
  for (std::size_t c = 0; c < comps.size(); ++c) {
    std::vector<cplx> g(comps[c].begin(), comps[c].end());
    auto modes = grid_to_modes(g, d, M, N);
    for (std::size_t i = 0; i < modes.size(); ++i) out.at(static_cast<int>(c), i) = modes[i];
  }
  out.symmetrize();
  return out;
}

nlohmann::json FourierField::to_json() const {
  nlohmann::json j;
  j["d"] = d_;
  j["N"] = N_;
  j["components"] = ncomp_;
  nlohmann::json comps = nlohmann::json::array();
  std::vector<int> k(static_cast<std::size_t>(d_));
  for (int c = 0; c < ncomp_; ++c) {
    nlohmann::json modes = nlohmann::json::object();
    for (std::size_t i = 0; i < n_modes_; ++i) {
      const cplx v = at(c, i);
      if (v == cplx(0.0, 0.0)) continue;
      mode(i, k.data());
      std::string key;
      for (int a = 0; a < d_; ++a) key += (a ? "," : "") + std::to_string(k[static_cast<std::size_t>(a)]);
      modes[key] = {v.real(), v.imag()};
    }
    comps.push_back(modes);
  }
  j["modes"] = comps;
  return j;
}

FourierField FourierField::from_json(const nlohmann::json& j) {
  FourierField out(j.at("d").get<int>(), j.at("N").get<int>(), j.at("components").get<int>());
  const auto& comps = j.at("modes");
  if (static_cast<int>(comps.size()) != out.ncomp_) throw ConfigError("FourierField JSON: component count mismatch");
  for (int c = 0; c < out.ncomp_; ++c)
    for (auto it = comps[static_cast<std::size_t>(c)].begin(); it != comps[static_cast<std::size_t>(c)].end(); ++it) {
      std::vector<int> k;
      std::string key = it.key();
      std::size_t pos = 0;
      while (pos <= key.size()) {
        std::size_t next = key.find(',', pos);
        if (next == std::string::npos) next = key.size();
        k.push_back(std::stoi(key.substr(pos, next - pos)));
        pos = next + 1;
      }
      if (static_cast<int>(k.size()) != out.d_ || !out.in_range(k.data()))
        throw ConfigError("FourierField JSON: bad mode index '" + key + "'");
      out.at(c, out.index(k.data())) = cplx(it.value().at(0).get<double>(), it.value().at(1).get<double>());
    }
  return out;
}

FourierField FourierField::constant(int d, int N, const std::vector<double>& values) {
  FourierField out(d, N, static_cast<int>(values.size()));
  std::vector<int> zero(static_cast<std::size_t>(d), 0);
  const std::size_t i0 = out.index(zero.data());
  for (std::size_t c = 0; c < values.size(); ++c) out.at(static_cast<int>(c), i0) = values[c];
  return out;
}

}  // namespace homoscale
