// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: acceptance [C1 C2 ...]

#include "homoscale/convergence.hpp"
#include "homoscale/corrector.hpp"
#include "homoscale/effective.hpp"
#include "homoscale/experiment.hpp"
#include "homoscale/io.hpp"
#include "homoscale/kramers.hpp"
#include "homoscale/linalg.hpp"
#include "homoscale/presets.hpp"
#include "homoscale/rng.hpp"
#include "homoscale/torus.hpp"
#include "homoscale/zvonkin.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace homoscale;
using nlohmann::json;

namespace {

constexpr std::size_t kC9Paths = 20000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Outcome c1_lyapunov() {
  RngStream r(20240601, 0);
  double worst_res = 0.0, worst_tr = 0.0;
  bool ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 1 + trial % 4;
    Mat B(d, d), S = Mat::Zero(d, d), s(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        B(i, j) = r.normal();
        s(i, j) = r.normal();
      }
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < i; ++j) {
        S(i, j) = 2.0 * r.normal();
        S(j, i) = -S(i, j);
      }
    const Mat A = B * B.transpose() / d + (0.1 + r.uniform()) * Mat::Identity(d, d) + S;
    const Mat M = s * s.transpose();
    const Mat Sig = solve_lyapunov(A, M);
    const double res = lyapunov_residual(A, Sig, M) / (1.0 + M.norm());
    const double tr = std::abs((A * Sig).trace() - M.trace()) / (1.0 + M.trace());
    worst_res = std::max(worst_res, res);
    worst_tr = std::max(worst_tr, tr);
    ok = ok && res <= 1e-10 && tr <= 1e-10;
  }
  return {ok, "max rel residual " + fmt("%.2e", worst_res) + ", max rel trace gap " + fmt("%.2e", worst_tr)};
}

Outcome c2_sk_closed_form() {
  double worst = 0.0, worst_scalar = 0.0;
  for (const char* name : {"langevin-scalar", "langevin-matrix"}) {
    const MultiscaleSystem s = make_preset(name);
    const RowMat probes = probe_grid(s.vartheta, 12);
    for (int i = 0; i < probes.rows(); ++i) {
      const Vec y = probes.row(i).transpose() * 0.5;
      const FrozenEquilibrium eq = frozen_equilibrium(s, y);
      const EffectiveDynamics g = effective_coefficients(s, assemble_gamma(s, corrector_linear(s, y)), eq, y);
      const EffectiveDynamics c = effective_sk(s, y);
      worst = std::max({worst, (g.F - c.F).cwiseAbs().maxCoeff(), (g.G - c.G).cwiseAbs().maxCoeff()});
    }
  }
  const double h0 = 1.0, h1 = 0.5, sg = 1.0, k = 1.0;
  const MultiscaleSystem s = make_preset("langevin-scalar");
  for (double yv = -3.0; yv <= 3.0; yv += 0.25) {
    const double q = yv * yv, h = h0 + h1 * q / (1 + q), dh = h1 * 2 * yv / ((1 + q) * (1 + q));
    const EffectiveDynamics e = effective_sk(s, Vec::Constant(1, yv));
    worst_scalar = std::max({worst_scalar, std::abs(e.G(0, 0) - sg * sg / (h * h)),
                             std::abs(e.F(0) - (-k * yv / h - sg * sg * dh / (h * h * h)))});
  }
  return {worst <= 1e-6 && worst_scalar <= 1e-12,
          "general vs closed form " + fmt("%.2e", worst) + ", scalar formulas " + fmt("%.2e", worst_scalar)};
}

Outcome c3_psd_identity() {
  RngStream r(33, 0);
  double worst = 0.0;
  bool ok = true;
  const std::vector<std::pair<std::string, json>> presets{
      {"averaging-ou", {{"dim", 2}}}, {"langevin-scalar", json::object()}, {"langevin-matrix", json::object()}};
  for (const auto& [name, params] : presets) {
    const MultiscaleSystem s = make_preset(name, params);
    Vec y(s.vartheta);
    for (int j = 0; j < s.vartheta; ++j) y(j) = 0.7 * r.normal();
    const Corrector c = corrector_linear(s, y);
    const FrozenEquilibrium eq = frozen_equilibrium(s, y);
    for (int i = 0; i < 20; ++i) {
      Vec xi(s.vartheta);
      for (int j = 0; j < s.vartheta; ++j) xi(j) = r.normal();
      const PsdIdentity p = verify_psd_identity(s, c, eq, y, xi, 20000, 100 + i);
      const double z = std::abs(p.lhs - p.rhs) / p.diff_se;
      worst = std::max(worst, z);
      ok = ok && z <= 5.0;
    }
  }
  return {ok, "max |lhs - rhs| / SE = " + fmt("%.2f", worst)};
}

Outcome c4_slow_rate() {
  const MultiscaleSystem s = make_preset("averaging-ou");
  const std::vector<double> eps{0.4, 0.2, 0.1, 0.05};
  const std::vector<double> t{0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 7.5, 10.0, 15.0, 20.0};
  Vec z0(2);
  z0 << 0.0, 2.0;
  IntegrationOptions o;
  o.scheme = Scheme::LinearExact;
  const ConvergenceReport r =
      convergence_study(s, make_observable("tanh_y1", s), make_reference(s), eps, t, z0, 200000, 4401, o);
  std::string d = "sup errors";
  for (double e : r.sup_error) d += " " + fmt("%.3e", e);
  if (!r.rate) return {false, d + "; no rate: " + r.rate_message};
  d += "; beta = " + fmt("%.3f", r.rate->beta) + " [" + fmt("%.3f", r.rate->ci_lo) + ", " + fmt("%.3f", r.rate->ci_hi) + "]";
  return {r.rate->beta >= 0.7 && r.rate->beta <= 1.3, d};
}

Outcome c5_boundary_layer() {
  const double kappa0 = 1.0, eps = 0.1;
  const MultiscaleSystem s = make_preset("langevin-scalar", {{"hbar0", kappa0}, {"hbar1", 0.0}});
  std::vector<double> t;
  for (int i = 1; i <= 50; ++i) t.push_back(0.1 * i * eps * eps);
  Vec z0(2);
  z0 << eps * 1.0, 0.0;
  const BoundaryLayerFit f = boundary_layer_fit(s, make_observable("x1", s), eps, t, z0, 100000, 5501);
  if (!f.resolved) return {false, "unresolved: " + f.message};
  return {f.kappa >= 0.7 * kappa0 && f.kappa <= 1.3 * kappa0,
          "kappa = " + fmt("%.3f", f.kappa) + " [" + fmt("%.3f", f.ci_lo) + ", " + fmt("%.3f", f.ci_hi) + "]"};
}

Outcome c6_stationary() {
  const MultiscaleSystem ou = make_preset("averaging-ou");
  StationaryOptions so;
  so.T_long = 100.0;
  so.burn_frac = 0.2;
  so.sample_dt = 0.5;
  const CommutativityResult c = commutativity_check(ou, make_observable("y_sq", ou), {0.2, 0.1, 0.05},
                                                    make_reference(ou), Vec::Zero(2), 4000, 6601, so);
  // combined SE of the two iterated-limit estimates
  const double za = std::abs(c.A - 1.0) / c.combined_se;
  const double zb = std::abs(c.B - 1.0) / c.combined_se;
  const bool ok_ou = za <= 5.0 && zb <= 5.0;

  const MultiscaleSystem lg = make_preset("langevin-scalar");
  StationaryOptions sl;
  sl.T_long = 60.0;
  sl.burn_frac = 0.25;
  sl.sample_dt = 0.25;
  const StationaryGap g = stationary_gap(lg, make_observable("x1_sq", lg), 0.1, make_reference(lg), Vec::Zero(2),
                                         2000, 6602, sl);
  const bool ok_lg = g.gap <= 0.05 * std::abs(g.reference) + 4.0 * g.stderr_;
  std::string d = "OU: A = " + fmt("%.4f", c.A) + " (" + fmt("%.1f", za) + " SE), B = " + fmt("%.4f", c.B) + " (" +
                  fmt("%.1f", zb) + " SE, combined SE " + fmt("%.2e", c.combined_se) + "); langevin x1^2: " + fmt("%.4f", g.multiscale) + " vs Sigma11 " +
                  fmt("%.4f", g.reference) + ", gap " + fmt("%.4f", g.gap) + " SE " + fmt("%.4f", g.stderr_);
  return {ok_ou && ok_lg, d};
}

Outcome c7_thermo() {
  const MultiscaleSystem s = make_preset("langevin-scalar");
  const LangevinSystem ls = make_langevin(s);
  const double eps = 0.1, T = 20.0;
  std::vector<double> grid{0.0};
  for (double t = 0.1; t <= T + 1e-12; t += 0.1) grid.push_back(t);
  const Vec v = Vec::Constant(1, 1.0), y0 = Vec::Constant(1, 1.0);
  const std::size_t n = 20000;
  const TrajectoryEnsemble ens = sk_simulate(ls, eps, v, y0, T, 0.0, n, 7701, grid);
  const TrajectoryEnsemble ref = sk_homogenized(ls, y0, T, 5e-3, n, derive_seed(7701, 77), grid);
  bool ok = true;
  double worst = 0.0;
  for (const ThermoCurve& c : {energy_curve(ens, ls, ref), entropy_production_curve(ens, ls, ref)}) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i] < 10.0 * eps * eps - 1e-12) continue;
      const double allow = 0.05 * std::abs(c.reference[i]) + 4.0 * c.gap_se[i];
      worst = std::max(worst, c.gap[i] / allow);
      ok = ok && c.gap[i] <= allow;
    }
  }
  return {ok, "max gap / allowance = " + fmt("%.3f", worst)};
}

Outcome c8_torus_oracle() {
  FourierField a = FourierField::constant(1, 1, {2.0});
  a.set(0, {1}, cplx(0.0, -0.5));
  a.set(0, {-1}, cplx(0.0, 0.5));
  const FourierField zero(1, 1, 1);
  const TorusHomogData h = effective_torus(a, zero, zero, 32);
  // harmonic mean by composite Simpson on the fast period
  const int n = 20000;
  double inv = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    inv += w / (2.0 + std::sin(2.0 * M_PI * i / n));
  }
  inv /= 3.0 * n;
  const double hm = 1.0 / inv;
  const double err = std::abs(h.G(0, 0) - hm);
  double drift = 0.0;
  const std::vector<std::pair<std::string, json>> presets{
      {"torus-1d", json::object()},
      {"torus-1d", {{"a0", 2.0}, {"a1", 1.0}, {"beta", 1.5}, {"c0", 0.3}}},
      {"torus-2d-shear", json::object()},
      {"torus-2d-shear", {{"shear", 2.0}, {"c0", 0.2}, {"c1", -0.1}}}};
  for (const auto& [name, params] : presets) {
    json p = params;
    const TorusProblem prob = torus_problem_preset(name, p);
    const int N = 16;
    const TorusHomogData x = effective_torus(prob.a, prob.b, prob.c, N), y = effective_torus(prob.a, prob.b, prob.c, 2 * N);
    drift = std::max({drift, (x.G - y.G).cwiseAbs().maxCoeff(), (x.F - y.F).cwiseAbs().maxCoeff(),
                      (x.bbar - y.bbar).cwiseAbs().maxCoeff()});
  }
  return {err <= 1e-8 && drift <= 1e-4,
          "harmonic-mean error " + fmt("%.2e", err) + ", max N vs 2N drift " + fmt("%.2e", drift)};
}

Outcome c9_periodic_rate() {
  const TorusProblem prob = torus_problem_preset("torus-1d", {{"a0", 1.0}, {"a1", 0.0}, {"beta", 1.0}, {"c0", 0.0}});
  FourierField phi(1, 1, 1);
  phi.set(0, {1}, cplx(0.5, 0.0));
  phi.set(0, {-1}, cplx(0.5, 0.0));
  const std::vector<double> eps{0.4, 0.2, 0.1, 0.05};
  const std::vector<double> t{0.02, 0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 2.0, 5.0, 10.0};
  TorusErrorOptions o;
  o.N = 16;
  o.fast_phase = 0.25;
  o.integration.scheme = Scheme::Explicit;
  const ConvergenceReport r = torus_uniform_error(prob, phi, eps, t, Vec::Zero(1), kC9Paths, 9901, o);
  std::string d = "sup errors";
  for (std::size_t i = 0; i < r.sup_error.size(); ++i)
    d += " " + fmt("%.3e", r.sup_error[i]) + "(" + fmt("%.1e", r.sup_stderr[i]) + ")";
  if (!r.rate) return {false, d + "; no rate: " + r.rate_message};
  d += "; beta = " + fmt("%.3f", r.rate->beta) + " [" + fmt("%.3f", r.rate->ci_lo) + ", " + fmt("%.3f", r.rate->ci_hi) + "]";
  return {r.rate->beta >= 0.7 && r.rate->beta <= 1.3, d};
}

Outcome c10_zvonkin() {
  const FourierField b = synth_divergence_free_drift(2, -0.7, 16, 1.0, 1010);
  FourierField f = b;
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < f.n_modes(); ++i) f.at(c, i) = -b.at(c, i);
  const ZvonkinTransform z = zvonkin_solve(b, f);
  const bool ok = z.residual <= 1e-8 * f.l2_norm() && z.q_hat < 1.0 && z.grad_sup <= 0.5 && z.u_norm_doubled < z.u_norm;
  return {ok, "lambda " + fmt("%.0f", z.lambda) + ", residual " + fmt("%.2e", z.residual) + ", q " +
                  fmt("%.3f", z.q_hat) + ", |grad u| " + fmt("%.3f", z.grad_sup) + ", |u(2 lambda)|/|u| " +
                  fmt("%.3f", z.u_norm_doubled / z.u_norm)};
}

std::map<std::string, std::string> artifacts(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    // every data artifact; the resolved config echoes the output path
    const auto ext = e.path().extension().string();
    if (ext != ".csv" && ext != ".dat" && ext != ".json") continue;
    if (e.path().filename() == "config.resolved.json") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[e.path().filename().string()] = ss.str();
  }
  return out;
}

Outcome c11_determinism() {
  const auto root = std::filesystem::temp_directory_path() / "homoscale_acceptance_c11";
  std::filesystem::remove_all(root);
  const std::vector<json> configs{
      {{"kind", "validate"}, {"system", {{"preset", "langevin-matrix"}}}, {"seed", 1}},
      {{"kind", "converge"}, {"system", {{"preset", "averaging-ou"}}}, {"observable", "tanh_y1"},
       {"eps", {0.4, 0.2, 0.1}}, {"t", {0.5, 1.0, 2.0}}, {"n_paths", 3000}, {"seed", 2}, {"z0", {0.0, 2.0}}},
      {{"kind", "converge"}, {"system", {{"preset", "langevin-matrix"}}}, {"observable", "y_sq"},
       {"eps", {0.4, 0.2}}, {"t", {0.5, 1.0}}, {"n_paths", 1500}, {"seed", 3}, {"z0", {0.0, 0.0, 1.0, 0.5}},
       {"reference", {{"dt", 0.01}}}},
      {{"kind", "stationary"}, {"system", {{"preset", "averaging-ou"}}}, {"observable", "y_sq"},
       {"eps", {0.4, 0.2}}, {"n_paths", 1500}, {"seed", 4},
       {"stationary", {{"T_long", 20.0}, {"sample_dt", 0.5}}}},
      {{"kind", "kramers"}, {"system", {{"preset", "langevin-scalar"}}}, {"eps", {0.4, 0.2, 0.1}}, {"n_paths", 1500},
       {"seed", 5}, {"kramers", {{"T", 2.0}, {"n_times", 21}, {"v", {1.0}}, {"y0", {0.5}}}}},
      {{"kind", "torus"}, {"torus", {{"preset", "torus-1d"}, {"N", 8}}}, {"eps", {0.4, 0.2, 0.1}},
       {"t", {0.1, 0.5, 1.0}}, {"n_paths", 800}, {"seed", 6}},
      {{"kind", "zvonkin"}, {"zvonkin", {{"N", 8}}}, {"seed", 7}}};
  bool ok = true;
  std::size_t files = 0;
  std::string bad;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    std::map<std::string, std::string> runs[2];
    for (int rep = 0; rep < 2; ++rep) {
      json j = configs[i];
      const auto dir = root / (std::to_string(i) + "_" + std::to_string(rep));
      j["output"] = dir.string();
      const RunSummary s = run_experiment(ExperimentConfig::from_json(j));
      if (!s.error.empty()) {
        ok = false;
        bad += " " + configs[i]["kind"].get<std::string>() + " error: " + s.error;
      }
      runs[rep] = artifacts(dir);
    }
    files += runs[0].size();
    if (runs[0] != runs[1] || runs[0].empty()) {
      ok = false;
      bad += " " + configs[i]["kind"].get<std::string>() + " differs";
    }
  }
  std::filesystem::remove_all(root);
  return {ok, std::to_string(files) + " artifacts compared across " + std::to_string(configs.size()) + " pipelines" + bad};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"C1 lyapunov-trace-identity", c1_lyapunov},   {"C2 sk-closed-form", c2_sk_closed_form},
      {"C3 psd-identity", c3_psd_identity},          {"C4 slow-marginal-rate", c4_slow_rate},
      {"C5 boundary-layer", c5_boundary_layer},      {"C6 stationary-commutativity", c6_stationary},
      {"C7 sk-thermodynamics", c7_thermo},           {"C8 torus-effective-diffusion", c8_torus_oracle},
      {"C9 periodic-rate", c9_periodic_rate},        {"C10 zvonkin-fixed-point", c10_zvonkin},
      {"C11 determinism", c11_determinism}};
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) only.insert(argv[i]);
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    const std::string id = name.substr(0, name.find(' '));
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
