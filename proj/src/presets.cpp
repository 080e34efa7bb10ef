#include "homoscale/presets.hpp"

#include "homoscale/linalg.hpp"
#include "homoscale/torus.hpp"

#include <cmath>
#include <set>

namespace homoscale {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

json merged_params(const std::string& preset, const json& defaults, const json& given) {
  if (!given.is_object()) throw ConfigError("preset '" + preset + "': coefficients must be an object of parameters");
  json out = defaults;
  for (auto it = given.begin(); it != given.end(); ++it) {
    if (!defaults.contains(it.key()))
      throw ConfigError("preset '" + preset + "': unknown parameter '" + it.key() + "'");
    if (!it.value().is_number()) throw ConfigError("preset '" + preset + "': parameter '" + it.key() + "' must be a number");
    out[it.key()] = it.value();
  }
  return out;
}

void record_params(MultiscaleSystem& sys, const json& p) {
  for (auto it = p.begin(); it != p.end(); ++it) sys.params[it.key()] = it.value().get<double>();
}

int as_dim(const json& p, const char* key) {
  double v = p.at(key).get<double>();
  if (v < 1 || v != std::floor(v)) throw ConfigError(std::string("parameter '") + key + "' must be a positive integer");
  return static_cast<int>(v);
}

CoefficientField vector_field(int rows, bool x_free, FieldFn f) {
  CoefficientField cf;
  cf.rows = rows;
  cf.cols = 1;
  cf.x_free = x_free;
  cf.eval = std::move(f);
  return cf;
}

MultiscaleSystem averaging_ou(const json& p) {
  const int n = as_dim(p, "dim");
  MultiscaleSystem s;
  s.name = "averaging-ou";
  s.d = s.vartheta = s.m = n;
  s.b = vector_field(n, false, [n](const double* x, const double*, double* o) {
    for (int i = 0; i < n; ++i) o[i] = -x[i];
  });
  s.c = CoefficientField::zeros(n, 1);
  s.sigma = CoefficientField::constant(Mat::Identity(n, n));
  s.F = vector_field(n, false, [n](const double* x, const double* y, double* o) {
    for (int i = 0; i < n; ++i) o[i] = -y[i] + x[i];
  });
  s.H = CoefficientField::zeros(n, 1);
  s.G = CoefficientField::constant(Mat::Identity(n, n));
  s.A = CoefficientField::constant(Mat::Identity(n, n));
  s.A.grad_y = [n](const double*, const double*, double* o) { std::fill(o, o + n * n * n, 0.0); };
  s.flags.linear_fast = true;
  s.flags.averaging = true;
  s.flags.nondegenerate_fast = true;
  return s;
}

// Scalar friction A(y) = hbar(|y|^2) I with hbar(s) = h0 + h1 s/(1+s),
// quadratic potential U = k|y|^2/2, sigma = s0 I.
MultiscaleSystem langevin_scalar(const json& p) {
  const int n = as_dim(p, "dim");
  const double h0 = p.at("hbar0").get<double>();
  const double h1 = p.at("hbar1").get<double>();
  const double s0 = p.at("sigma").get<double>();
  const double k = p.at("stiffness").get<double>();
  if (!(h0 > 0.0) || !(h0 + h1 > 0.0)) throw ConfigError("langevin-scalar: friction must stay positive");
  auto sq = [n](const double* y) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += y[i] * y[i];
    return s;
  };
  auto hbar = [h0, h1](double s) { return h0 + h1 * s / (1.0 + s); };
  auto dhbar = [h1](double s) { return h1 / ((1.0 + s) * (1.0 + s)); };

  MultiscaleSystem sys;
  sys.name = "langevin-scalar";
  sys.d = sys.vartheta = sys.m = n;
  sys.A.rows = sys.A.cols = n;
  sys.A.x_free = true;
  sys.A.eval = [=](const double*, const double* y, double* o) {
    const double h = hbar(sq(y));
    for (int i = 0; i < n * n; ++i) o[i] = 0.0;
    for (int i = 0; i < n; ++i) o[i * n + i] = h;
  };
  sys.A.grad_y = [=](const double*, const double* y, double* o) {
    const double dh = dhbar(sq(y));
    for (int i = 0; i < n * n * n; ++i) o[i] = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) o[(i * n + i) * n + j] = 2.0 * dh * y[j];
  };
  sys.b = vector_field(n, false, [=](const double* x, const double* y, double* o) {
    const double h = hbar(sq(y));
    for (int i = 0; i < n; ++i) o[i] = -h * x[i];
  });
  sys.c = vector_field(n, true, [=](const double*, const double* y, double* o) {
    for (int i = 0; i < n; ++i) o[i] = -k * y[i];
  });
  sys.sigma = CoefficientField::constant(s0 * Mat::Identity(n, n));
  sys.F = CoefficientField::zeros(n, 1);
  sys.H = vector_field(n, false, [n](const double* x, const double*, double* o) {
    for (int i = 0; i < n; ++i) o[i] = x[i];
  });
  sys.G = CoefficientField::zeros(n, n);

  CoefficientField U;
  U.rows = U.cols = 1;
  U.x_free = true;
  U.eval = [=](const double*, const double* y, double* o) { o[0] = 0.5 * k * sq(y); };
  U.grad_y = [=](const double*, const double* y, double* o) {
    for (int i = 0; i < n; ++i) o[i] = k * y[i];
  };
  sys.aux["U"] = U;
  sys.aux["gradU"] = vector_field(n, true, [=](const double*, const double* y, double* o) {
    for (int i = 0; i < n; ++i) o[i] = k * y[i];
  });
  CoefficientField fr;
  fr.rows = fr.cols = 1;
  fr.x_free = true;
  fr.eval = [=](const double*, const double* y, double* o) { o[0] = hbar(sq(y)); };
  fr.grad_y = [=](const double*, const double* y, double* o) {
    const double dh = dhbar(sq(y));
    for (int j = 0; j < n; ++j) o[j] = 2.0 * dh * y[j];
  };
  sys.aux["friction"] = fr;
  CoefficientField lh;
  lh.rows = lh.cols = 1;
  lh.x_free = true;
  lh.eval = [=](const double*, const double* y, double* o) {
    const double s = sq(y);
    o[0] = 0.5 * (h0 * s + h1 * (s - std::log1p(s)));
  };
  sys.aux["lyap_h"] = lh;
  sys.aux["lyap_h_grad"] = vector_field(n, true, [=](const double*, const double* y, double* o) {
    const double h = hbar(sq(y));
    for (int i = 0; i < n; ++i) o[i] = h * y[i];
  });
  sys.flags.linear_fast = true;
  sys.flags.langevin = true;
  sys.flags.nondegenerate_fast = s0 != 0.0;
  return sys;
}

// Matrix friction A(y) = A0 + q(|y|^2) A1 with q(s) = s/(1+s); A0 has a
// skew part, A1 is symmetric PSD. U = k|y|^2/2, constant sigma.
MultiscaleSystem langevin_matrix(const json& p) {
  const double k = p.at("stiffness").get<double>();
  const double skew = p.at("skew").get<double>();
  const double a1 = p.at("variation").get<double>();
  const int n = 2;
  Mat A0(2, 2), A1(2, 2), S(2, 2);
  A0 << 1.5, skew, -skew, 1.0;
  A1 << 0.5 * a1, 0.2 * a1, 0.2 * a1, 0.3 * a1;
  S << 1.0, 0.0, 0.3, 0.8;
  auto sq = [](const double* y) { return y[0] * y[0] + y[1] * y[1]; };

  MultiscaleSystem sys;
  sys.name = "langevin-matrix";
  sys.d = sys.vartheta = sys.m = n;
  sys.A.rows = sys.A.cols = n;
  sys.A.x_free = true;
  sys.A.eval = [=](const double*, const double* y, double* o) {
    const double s = sq(y);
    const double q = s / (1.0 + s);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) o[i * 2 + j] = A0(i, j) + q * A1(i, j);
  };
  sys.A.grad_y = [=](const double*, const double* y, double* o) {
    const double s = sq(y);
    const double dq = 1.0 / ((1.0 + s) * (1.0 + s));
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int l = 0; l < 2; ++l) o[(i * 2 + j) * 2 + l] = A1(i, j) * 2.0 * dq * y[l];
  };
  auto Aeval = sys.A.eval;
  sys.b = vector_field(n, false, [=](const double* x, const double* y, double* o) {
    double a[4];
    Aeval(nullptr, y, a);
    o[0] = -(a[0] * x[0] + a[1] * x[1]);
    o[1] = -(a[2] * x[0] + a[3] * x[1]);
  });
  sys.c = vector_field(n, true, [=](const double*, const double* y, double* o) {
    o[0] = -k * y[0];
    o[1] = -k * y[1];
  });
  sys.sigma = CoefficientField::constant(S);
  sys.F = CoefficientField::zeros(n, 1);
  sys.H = vector_field(n, false, [](const double* x, const double*, double* o) {
    o[0] = x[0];
    o[1] = x[1];
  });
  sys.G = CoefficientField::zeros(n, n);
  CoefficientField U;
  U.rows = U.cols = 1;
  U.x_free = true;
  U.eval = [=](const double*, const double* y, double* o) { o[0] = 0.5 * k * sq(y); };
  U.grad_y = [=](const double*, const double* y, double* o) {
    o[0] = k * y[0];
    o[1] = k * y[1];
  };
  sys.aux["U"] = U;
  sys.aux["gradU"] = vector_field(n, true, [=](const double*, const double* y, double* o) {
    o[0] = k * y[0];
    o[1] = k * y[1];
  });
  CoefficientField lh;
  lh.rows = lh.cols = 1;
  lh.x_free = true;
  lh.eval = [=](const double*, const double* y, double* o) { o[0] = 0.5 * sq(y); };
  sys.aux["lyap_h"] = lh;
  sys.aux["lyap_h_grad"] = vector_field(n, true, [](const double*, const double* y, double* o) {
    o[0] = y[0];
    o[1] = y[1];
  });
  sys.flags.linear_fast = true;
  sys.flags.langevin = true;
  sys.flags.nondegenerate_fast = true;
  return sys;
}

const json& defaults_for(const std::string& name) {
  static const std::map<std::string, json> table = {
      {"averaging-ou", json{{"dim", 1}}},
      {"langevin-scalar", json{{"dim", 1}, {"hbar0", 1.0}, {"hbar1", 0.5}, {"sigma", 1.0}, {"stiffness", 1.0}}},
      {"langevin-matrix", json{{"stiffness", 1.0}, {"skew", 0.4}, {"variation", 1.0}}},
      {"torus-1d", json{{"a0", 1.0}, {"a1", 0.0}, {"beta", 1.0}, {"c0", 0.0}, {"N", 16}}},
      {"torus-2d-shear", json{{"shear", 1.0}, {"c0", 0.0}, {"c1", 0.0}, {"N", 16}}},
  };
  auto it = table.find(name);
  if (it == table.end()) throw ConfigError("unknown preset '" + name + "'");
  return it->second;
}

Mat parse_matrix(const json& j, int rows, int cols, const std::string& label) {
  Mat M(rows, cols);
  if (cols == 1 && j.is_array() && (j.empty() || !j[0].is_array())) {
    if (static_cast<int>(j.size()) != rows) throw ShapeError(label + ": expected " + std::to_string(rows) + " entries");
    for (int i = 0; i < rows; ++i) M(i, 0) = j[static_cast<std::size_t>(i)].get<double>();
    return M;
  }
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    throw ShapeError(label + ": expected " + std::to_string(rows) + " rows");
  for (int i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      throw ShapeError(label + ": expected " + std::to_string(cols) + " columns in row " + std::to_string(i));
    for (int c = 0; c < cols; ++c) M(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return M;
}

void only_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

CoefficientField parse_field(const json& j, int rows, int cols, int d, int vt, const std::string& label) {
  only_keys(j, {"zero", "constant", "affine"}, "coefficients." + label);
  if (j.size() != 1) throw ConfigError("coefficients." + label + " needs exactly one of zero, constant, affine");
  if (j.contains("zero")) return CoefficientField::zeros(rows, cols);
  if (j.contains("constant")) return CoefficientField::constant(parse_matrix(j["constant"], rows, cols, label));
  if (cols != 1) throw ConfigError("coefficients." + label + ": affine form is only available for vector fields");
  const json& a = j["affine"];
  only_keys(a, {"x", "y", "const"}, "coefficients." + label + ".affine");
  Mat Mx = a.contains("x") ? parse_matrix(a["x"], rows, d, label + ".x") : Mat::Zero(rows, d);
  Mat My = a.contains("y") ? parse_matrix(a["y"], rows, vt, label + ".y") : Mat::Zero(rows, vt);
  Vec v = a.contains("const") ? Vec(parse_matrix(a["const"], rows, 1, label + ".const")) : Vec::Zero(rows);
  CoefficientField f;
  f.rows = rows;
  f.cols = 1;
  f.x_free = Mx.isZero(0.0);
  f.zero = f.x_free && My.isZero(0.0) && v.isZero(0.0);
  f.eval = [Mx, My, v, d, vt](const double* x, const double* y, double* o) {
    Eigen::Map<Vec> out(o, v.size());
    out = v + My * Eigen::Map<const Vec>(y, vt);
    if (x) out += Mx * Eigen::Map<const Vec>(x, d);
  };
  f.grad_x = [Mx](const double*, const double*, double* o) {
    RowMat R = Mx;
    std::copy(R.data(), R.data() + R.size(), o);
  };
  f.grad_y = [My](const double*, const double*, double* o) {
    RowMat R = My;
    std::copy(R.data(), R.data() + R.size(), o);
  };
  return f;
}

void apply_flags(MultiscaleSystem& sys, const json& flags) {
  only_keys(flags, {"linear_fast", "averaging", "langevin", "periodic", "nondegenerate_fast"}, "flags");
  auto get = [&](const char* key, bool& target) {
    if (flags.contains(key)) {
      if (!flags[key].is_boolean()) throw ConfigError(std::string("flags.") + key + " must be boolean");
      target = target || flags[key].get<bool>();
    }
  };
  get("linear_fast", sys.flags.linear_fast);
  get("averaging", sys.flags.averaging);
  get("langevin", sys.flags.langevin);
  get("periodic", sys.flags.periodic);
  get("nondegenerate_fast", sys.flags.nondegenerate_fast);
  if (flags.contains("nondegenerate_fast") && flags["nondegenerate_fast"].is_boolean())
    sys.flags.nondegenerate_fast = flags["nondegenerate_fast"].get<bool>();
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"averaging-ou", "langevin-scalar", "langevin-matrix", "torus-1d",
                                                 "torus-2d-shear"};
  return names;
}

json preset_defaults(const std::string& name) { return defaults_for(name); }

MultiscaleSystem make_preset(const std::string& name, const json& params) {
  const json p = merged_params(name, defaults_for(name), params);
  MultiscaleSystem sys;
  if (name == "averaging-ou") sys = averaging_ou(p);
  else if (name == "langevin-scalar") sys = langevin_scalar(p);
  else if (name == "langevin-matrix") sys = langevin_matrix(p);
  else sys = torus_preset_system(name, p);
  record_params(sys, p);
  finalize_system(sys);
  return sys;
}

MultiscaleSystem build_system(const json& spec) {
  only_keys(spec, {"dims", "preset", "coefficients", "flags"}, "system config");
  int d = 0, vt = 0, m = 0;
  if (spec.contains("dims")) {
    only_keys(spec["dims"], {"d", "vartheta", "m"}, "dims");
    for (const char* k : {"d", "vartheta", "m"})
      if (!spec["dims"].contains(k) || !spec["dims"][k].is_number_integer())
        throw ConfigError(std::string("dims.") + k + " must be an integer");
    d = spec["dims"]["d"].get<int>();
    vt = spec["dims"]["vartheta"].get<int>();
    m = spec["dims"]["m"].get<int>();
  }
  const json coeffs = spec.value("coefficients", json::object());
  MultiscaleSystem sys;
  if (spec.contains("preset")) {
    if (!spec["preset"].is_string()) throw ConfigError("preset must be a string");
    const std::string name = spec["preset"].get<std::string>();
    const json p = merged_params(name, defaults_for(name), coeffs);
    if (name == "averaging-ou") sys = averaging_ou(p);
    else if (name == "langevin-scalar") sys = langevin_scalar(p);
    else if (name == "langevin-matrix") sys = langevin_matrix(p);
    else sys = torus_preset_system(name, p);
    record_params(sys, p);
    if (spec.contains("dims") && (d != sys.d || vt != sys.vartheta || m != sys.m))
      throw ShapeError("dims do not match preset '" + name + "'");
  } else {
    if (!spec.contains("dims")) throw ConfigError("system config needs dims when no preset is named");
    only_keys(coeffs, {"b", "c", "sigma", "F", "H", "G", "A"}, "coefficients");
    sys.name = "custom";
    sys.d = d;
    sys.vartheta = vt;
    sys.m = m;
    for (const char* k : {"c", "sigma", "F", "H", "G"})
      if (!coeffs.contains(k)) throw ConfigError(std::string("coefficients.") + k + " is required");
    if (coeffs.contains("A")) {
      if (!coeffs["A"].contains("constant")) throw ConfigError("coefficients.A must use the constant form");
      Mat A = parse_matrix(coeffs["A"]["constant"], d, d, "A");
      sys.A = CoefficientField::constant(A);
      sys.A.grad_y = [d, vt](const double*, const double*, double* o) { std::fill(o, o + d * d * vt, 0.0); };
      sys.flags.linear_fast = true;
      if (coeffs.contains("b")) {
        sys.b = parse_field(coeffs["b"], d, 1, d, vt, "b");
      } else {
        sys.b.rows = d;
        sys.b.cols = 1;
        sys.b.eval = [A, d](const double* x, const double*, double* o) {
          Eigen::Map<Vec>(o, d) = -A * Eigen::Map<const Vec>(x, d);
        };
      }
    } else {
      if (!coeffs.contains("b")) throw ConfigError("coefficients.b is required");
      sys.b = parse_field(coeffs["b"], d, 1, d, vt, "b");
    }
    sys.c = parse_field(coeffs["c"], d, 1, d, vt, "c");
    sys.sigma = parse_field(coeffs["sigma"], d, m, d, vt, "sigma");
    sys.F = parse_field(coeffs["F"], vt, 1, d, vt, "F");
    sys.H = parse_field(coeffs["H"], vt, 1, d, vt, "H");
    sys.G = parse_field(coeffs["G"], vt, m, d, vt, "G");
  }
  if (spec.contains("flags")) apply_flags(sys, spec["flags"]);
  if (sys.flags.linear_fast && !sys.A.eval) throw ConfigError("linear_fast flag requires an A field");
  finalize_system(sys);
  return sys;
}

TestObservable make_observable(const std::string& name, const MultiscaleSystem& sys) {
  TestObservable o;
  o.name = name;
  const int d = sys.d, vt = sys.vartheta;
  const CoefficientField Af = sys.A, Sf = sys.sigma;
  auto lyap_cov = [Af, Sf, d, vt](const double* y) {
    Mat A = Af(Vec::Zero(d), Eigen::Map<const Vec>(y, vt));
    Mat S = Sf(Vec::Zero(d), Eigen::Map<const Vec>(y, vt));
    return solve_lyapunov(A, S * S.transpose());
  };
  const bool gaussian = sys.flags.linear_fast && sys.structure.fast_x_free_noise;
  if (name == "const") {
    o.phi = [](const double*, const double*) { return 1.0; };
    o.phibar = [](const double*) { return 1.0; };
    o.fast_only = o.slow_only = true;
  } else if (name == "y1") {
    o.phi = [](const double*, const double* y) { return y[0]; };
    o.phibar = [](const double* y) { return y[0]; };
    o.slow_only = true;
  } else if (name == "y_sq") {
    o.phi = [vt](const double*, const double* y) {
      double s = 0.0;
      for (int i = 0; i < vt; ++i) s += y[i] * y[i];
      return s;
    };
    o.phibar = [vt](const double* y) {
      double s = 0.0;
      for (int i = 0; i < vt; ++i) s += y[i] * y[i];
      return s;
    };
    o.slow_only = true;
    o.rho0.r = 2.0;
  } else if (name == "tanh_y1") {
    o.phi = [](const double*, const double* y) { return std::tanh(y[0]); };
    o.phibar = [](const double* y) { return std::tanh(y[0]); };
    o.slow_only = true;
  } else if (name == "cos2pi_y1") {
    o.phi = [](const double*, const double* y) { return std::cos(kTwoPi * y[0]); };
    o.phibar = [](const double* y) { return std::cos(kTwoPi * y[0]); };
    o.slow_only = true;
  } else if (name == "x1") {
    o.phi = [](const double* x, const double*) { return x[0]; };
    if (gaussian) o.phibar = [](const double*) { return 0.0; };
    o.fast_only = true;
  } else if (name == "x1_sq") {
    o.phi = [](const double* x, const double*) { return x[0] * x[0]; };
    if (gaussian) o.phibar = [lyap_cov](const double* y) { return lyap_cov(y)(0, 0); };
    o.fast_only = true;
    o.rho0.r = 2.0;
  } else if (name == "energy") {
    if (!sys.has_aux("U")) throw ConfigError("observable 'energy' needs a potential U");
    const auto U = sys.aux_field("U").eval;
    o.phi = [d, U](const double* x, const double* y) {
      double k = 0.0, u = 0.0;
      for (int i = 0; i < d; ++i) k += x[i] * x[i];
      U(nullptr, y, &u);
      return 0.5 * k + u;
    };
    if (gaussian)
      o.phibar = [lyap_cov, U](const double* y) {
        double u = 0.0;
        U(nullptr, y, &u);
        return 0.5 * lyap_cov(y).trace() + u;
      };
    o.rho0.r = 2.0;
  } else if (name == "entropy_production") {
    if (!sys.flags.linear_fast) throw ConfigError("observable 'entropy_production' needs an A field");
    const auto A = sys.A.eval;
    const auto sig = sys.sigma;
    const int m = sys.m;
    o.phi = [d, A](const double* x, const double* y) {
      std::vector<double> a(static_cast<std::size_t>(d * d));
      A(nullptr, y, a.data());
      double s = 0.0;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) s += x[i] * a[static_cast<std::size_t>(i * d + j)] * x[j];
      return s;
    };
    if (gaussian)
      o.phibar = [d, m, sig](const double* y) {
        std::vector<double> s(static_cast<std::size_t>(d * m)), zx(static_cast<std::size_t>(d), 0.0);
        sig.eval(zx.data(), y, s.data());
        double t = 0.0;
        for (double e : s) t += e * e;
        return t;
      };
    o.fast_only = true;
    o.rho0.r = 2.0;
  } else {
    throw ConfigError("unknown observable '" + name + "'");
  }
  return o;
}

}  // namespace homoscale
