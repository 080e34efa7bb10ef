#include "homoscale/experiment.hpp"

#include "homoscale/effective.hpp"
#include "homoscale/io.hpp"
#include "homoscale/presets.hpp"
#include "homoscale/rng.hpp"
#include "homoscale/torus.hpp"
#include "homoscale/zvonkin.hpp"

#include <cmath>
#include <filesystem>
#include <set>

namespace homoscale {

using nlohmann::json;

namespace {

void only_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

json defaulted(const json& given, const json& defaults, const std::string& where) {
  std::set<std::string> keys;
  for (auto it = defaults.begin(); it != defaults.end(); ++it) keys.insert(it.key());
  json g = given.is_null() ? json::object() : given;
  only_keys(g, keys, where);
  json out = defaults;
  for (auto it = g.begin(); it != g.end(); ++it) out[it.key()] = it.value();
  return out;
}

std::vector<double> number_list(const json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError(key + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : j) {
    if (!e.is_number()) throw ConfigError(key + " must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

const json kKindDefaults = {
    {"integration", {{"scheme", "auto"}, {"dt", 0.0}}},
    {"reference", {{"kind", "auto"}, {"dt", 1e-3}, {"n_paths", 0}}},
    {"stationary", {{"T_long", 200.0}, {"burn_frac", 0.2}, {"sample_dt", 0.5}, {"ref_paths", 0}, {"commutativity", true}}},
    {"kramers", {{"v", json::array()}, {"y0", json::array()}, {"T", 20.0}, {"dt", 0.0}, {"ref_dt", 1e-3}, {"n_times", 101}}},
    {"torus", {{"preset", "torus-1d"}, {"params", json::object()}, {"N", 16}, {"x0", json::array()}, {"fast_phase", 0.25}}},
    {"zvonkin",
     {{"d", 2}, {"alpha", -0.7}, {"N", 16}, {"amplitude", 1.0}, {"lambda0", 16.0}, {"theta", 0.15}, {"tol", 1e-13}}},
};

const json kCheckDefaults = {{"beta_min", nullptr}, {"beta_max", nullptr}, {"se_factor", 4.0},
                             {"rel_tol", nullptr},  {"residual_max", 1e-8}};

void add_check(RunSummary& s, const std::string& name, bool ok, double value, const std::string& threshold) {
  s.checks.push_back({name, ok, value, threshold});
}

std::string num(double v) { return format_double(v); }

void rate_checks(RunSummary& s, const ConvergenceReport& rep, const json& checks) {
  if (checks["beta_min"].is_null() && checks["beta_max"].is_null()) return;
  const double lo = checks["beta_min"].is_null() ? -1e300 : checks["beta_min"].get<double>();
  const double hi = checks["beta_max"].is_null() ? 1e300 : checks["beta_max"].get<double>();
  if (!rep.rate) {
    add_check(s, "rate_fitted", false, 0.0, "at least 3 eps values above the noise floor");
    return;
  }
  add_check(s, "beta_in_range", rep.rate->beta >= lo && rep.rate->beta <= hi, rep.rate->beta,
            "[" + num(lo) + ", " + num(hi) + "]");
}

MultiscaleSystem system_of(const ExperimentConfig& cfg) { return build_system(cfg.system); }

IntegrationOptions integration_of(const ExperimentConfig& cfg) {
  IntegrationOptions o;
  o.scheme = scheme_from_name(cfg.options["integration"]["scheme"].get<std::string>());
  o.dt = cfg.options["integration"]["dt"].get<double>();
  return o;
}

Vec z0_of(const ExperimentConfig& cfg, const MultiscaleSystem& sys) {
  const auto z = number_list(cfg.resolved["z0"], "z0");
  if (z.empty()) return Vec::Zero(sys.d + sys.vartheta);
  if (static_cast<int>(z.size()) != sys.d + sys.vartheta) throw ConfigError("z0 must have d + vartheta entries");
  return to_vec(z);
}

void run_validate(const ExperimentConfig& cfg, RunSummary& s) {
  const MultiscaleSystem sys = system_of(cfg);
  const RowMat probes = probe_grid(sys.d + sys.vartheta, 200);
  json r;
  r["name"] = sys.name;
  r["dims"] = {{"d", sys.d}, {"vartheta", sys.vartheta}, {"m", sys.m}};
  r["flags"] = {{"linear_fast", sys.flags.linear_fast}, {"averaging", sys.flags.averaging},
                {"langevin", sys.flags.langevin},       {"periodic", sys.flags.periodic},
                {"nondegenerate_fast", sys.flags.nondegenerate_fast}};
  r["structure"] = {{"fully_linear", sys.structure.fully_linear}, {"slow_affine_x", sys.structure.slow_affine_x},
                    {"fast_x_free_noise", sys.structure.fast_x_free_noise}};
  r["lambda_hat"] = sys.lambda_hat;
  r["Lambda_hat"] = sys.Lambda_hat;
  r["default_scheme"] = scheme_name(resolve_scheme(sys, Scheme::Auto));
  double gerr = 0.0;
  for (const auto* f : {&sys.b, &sys.c, &sys.sigma, &sys.F, &sys.H, &sys.G, &sys.A})
    if (f->eval) gerr = std::max(gerr, gradient_check(*f, sys.d, sys.vartheta, probes));
  r["gradient_check"] = gerr;
  add_check(s, "gradient_check", gerr <= 1e-5, gerr, "<= 1e-5");
  if (sys.flags.nondegenerate_fast) add_check(s, "ellipticity", sys.lambda_hat > 0.0, sys.lambda_hat, "> 0");
  write_json_file(cfg.output + "/system.json", r);
  s.results = r;
}

void run_converge(const ExperimentConfig& cfg, RunSummary& s) {
  const MultiscaleSystem sys = system_of(cfg);
  const TestObservable phi = make_observable(cfg.observable, sys);
  const auto& ro = cfg.options["reference"];
  const HomogenizedReference ref =
      make_reference(sys, ro["kind"].get<std::string>(), ro["dt"].get<double>(), ro["n_paths"].get<std::size_t>());
  const ConvergenceReport rep =
      convergence_study(sys, phi, ref, cfg.eps, cfg.t, z0_of(cfg, sys), cfg.n_paths, cfg.seed, integration_of(cfg));
  write_surface_csv(rep, cfg.output + "/surface.csv");
  write_json_file(cfg.output + "/report.json", report_to_json(rep));
  emit_plotdata(rep, cfg.output);
  rate_checks(s, rep, cfg.checks);
  s.results = report_to_json(rep);
}

void run_stationary(const ExperimentConfig& cfg, RunSummary& s) {
  const MultiscaleSystem sys = system_of(cfg);
  const TestObservable phi = make_observable(cfg.observable, sys);
  const auto& so = cfg.options["stationary"];
  StationaryOptions st;
  st.T_long = so["T_long"].get<double>();
  st.burn_frac = so["burn_frac"].get<double>();
  st.sample_dt = so["sample_dt"].get<double>();
  st.ref_paths = so["ref_paths"].get<std::size_t>();
  const auto& ro = cfg.options["reference"];
  const HomogenizedReference ref =
      make_reference(sys, ro["kind"].get<std::string>(), ro["dt"].get<double>(), ro["n_paths"].get<std::size_t>());
  const Vec z0 = z0_of(cfg, sys);
  const double k = cfg.checks["se_factor"].get<double>();
  CsvWriter w(cfg.output + "/stationary.csv",
              {"eps", "multiscale", "multiscale_stderr", "reference", "reference_stderr", "gap", "stderr"});
  json r = json::array();
  for (std::size_t i = 0; i < cfg.eps.size(); ++i) {
    const StationaryGap g =
        stationary_gap(sys, phi, cfg.eps[i], ref, z0, cfg.n_paths, derive_seed(cfg.seed, i), st, integration_of(cfg));
    w.row({cfg.eps[i], g.multiscale, g.multiscale_se, g.reference, g.reference_se, g.gap, g.stderr_});
    r.push_back({{"eps", cfg.eps[i]}, {"gap", g.gap}, {"stderr", g.stderr_}});
  }
  json res = {{"gaps", r}};
  if (so["commutativity"].get<bool>() && cfg.eps.size() >= 2) {
    const CommutativityResult c = commutativity_check(sys, phi, cfg.eps, ref, z0, cfg.n_paths, cfg.seed, st,
                                                      integration_of(cfg));
    res["commutativity"] = {{"A", c.A}, {"A_stderr", c.A_se}, {"B", c.B}, {"B_stderr", c.B_se},
                            {"discrepancy", c.discrepancy}, {"stderr", c.combined_se}};
    add_check(s, "commutativity", c.discrepancy <= k * c.combined_se, c.discrepancy, "<= " + num(k) + " SE");
  }
  write_json_file(cfg.output + "/stationary.json", res);
  s.results = res;
}

std::vector<double> kramers_grid(const ExperimentConfig& cfg, double T) {
  if (!cfg.t.empty()) {
    std::vector<double> g = cfg.t;
    if (g.front() != 0.0) g.insert(g.begin(), 0.0);
    return g;
  }
  const int n = cfg.options["kramers"]["n_times"].get<int>();
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = T * i / static_cast<double>(n - 1);
  return g;
}

void curve_csv(const ThermoCurve& c, const std::string& path) {
  CsvWriter w(path, {"t", "value", "stderr", "reference", "ref_stderr"});
  for (std::size_t i = 0; i < c.t.size(); ++i) w.row({c.t[i], c.value[i], c.value_se[i], c.reference[i], c.reference_se[i]});
}

void run_kramers(const ExperimentConfig& cfg, RunSummary& s) {
  const MultiscaleSystem sys = system_of(cfg);
  const LangevinSystem ls = make_langevin(sys);
  const auto& ko = cfg.options["kramers"];
  const int d = ls.dim();
  auto v = number_list(ko["v"], "kramers.v");
  auto y0 = number_list(ko["y0"], "kramers.y0");
  if (v.empty()) v.assign(static_cast<std::size_t>(d), 0.0);
  if (y0.empty()) y0.assign(static_cast<std::size_t>(d), 0.0);
  if (static_cast<int>(v.size()) != d || static_cast<int>(y0.size()) != d)
    throw ConfigError("kramers.v and kramers.y0 need d entries");
  const double T = ko["T"].get<double>();
  const auto grid = kramers_grid(cfg, T);
  const TrajectoryEnsemble ref =
      sk_homogenized(ls, to_vec(y0), grid.back(), ko["ref_dt"].get<double>(), cfg.n_paths, derive_seed(cfg.seed, 77), grid);
  ConvergenceReport energy_rep, epr_rep;
  for (auto* rep : {&energy_rep, &epr_rep}) {
    rep->system = sys.name;
    rep->eps = cfg.eps;
    rep->t = grid;
    rep->seed = cfg.seed;
    rep->n_paths = cfg.n_paths;
  }
  energy_rep.observable = "energy";
  epr_rep.observable = "entropy_production";
  json per_eps = json::array();
  bool ok_all = true;
  double worst = 0.0;
  ThermoCurve last_e, last_p;
  const double k = cfg.checks["se_factor"].get<double>();
  for (std::size_t i = 0; i < cfg.eps.size(); ++i) {
    const double eps = cfg.eps[i];
    const TrajectoryEnsemble ens =
        sk_simulate(ls, eps, to_vec(v), to_vec(y0), grid.back(), ko["dt"].get<double>(), cfg.n_paths, cfg.seed, grid);
    const ThermoCurve ce = energy_curve(ens, ls, ref);
    const ThermoCurve cp = entropy_production_curve(ens, ls, ref);
    curve_csv(ce, cfg.output + "/energy_eps" + std::to_string(i) + ".csv");
    curve_csv(cp, cfg.output + "/entropy_eps" + std::to_string(i) + ".csv");
    double se_max = 0.0, sp_max = 0.0;
    for (std::size_t ti = 0; ti < grid.size(); ++ti) {
      for (auto [c, rep] : {std::pair{&ce, &energy_rep}, std::pair{&cp, &epr_rep}}) {
        ErrorCell cell;
        cell.eps = eps;
        cell.t = grid[ti];
        cell.value = c->value[ti];
        cell.value_se = c->value_se[ti];
        cell.reference = c->reference[ti];
        cell.reference_se = c->reference_se[ti];
        // the layer window t < 10 eps^2 is excluded from the uniform gap
        const bool post = grid[ti] >= 10.0 * eps * eps;
        cell.error = post ? c->gap[ti] : 0.0;
        cell.stderr_ = c->gap_se[ti];
        rep->cells.push_back(cell);
        if (post && !cfg.checks["rel_tol"].is_null()) {
          const double allow = cfg.checks["rel_tol"].get<double>() * std::abs(c->reference[ti]) + k * c->gap_se[ti];
          if (c->gap[ti] > allow) ok_all = false;
          worst = std::max(worst, c->gap[ti] / std::max(allow, 1e-300));
        }
      }
      if (grid[ti] >= 10.0 * eps * eps) {
        se_max = std::max(se_max, ce.gap[ti]);
        sp_max = std::max(sp_max, cp.gap[ti]);
      }
    }
    per_eps.push_back({{"eps", eps}, {"energy_sup_gap", se_max}, {"entropy_sup_gap", sp_max}, {"n_failed", ens.n_failed}});
    last_e = ce;
    last_p = cp;
  }
  summarize_report(energy_rep);
  summarize_report(epr_rep);
  write_surface_csv(energy_rep, cfg.output + "/energy_surface.csv");
  write_surface_csv(epr_rep, cfg.output + "/entropy_surface.csv");
  emit_plotdata(energy_rep, cfg.output, "energy");
  emit_curve(last_e, cfg.output + "/curve_energy.dat");
  emit_curve(last_p, cfg.output + "/curve_entropy.dat");
  // KL correction along the last eps run against the homogenized law
  ThermoCurve kl;
  kl.t = grid;
  for (std::size_t ti = 0; ti < grid.size(); ++ti) {
    double acc = 0.0, acc2 = 0.0, n = 0.0;
    for (std::size_t p = 0; p < ref.n_paths; ++p) {
      if (ref.failed[p]) continue;
      const double v2 = kl_correction(ls.Sigma(Eigen::Map<const Vec>(ref.state(p, ti), d)));
      acc += v2;
      acc2 += v2 * v2;
      n += 1.0;
    }
    const double m = acc / n;
    kl.value.push_back(m);
    kl.value_se.push_back(std::sqrt(std::max(0.0, acc2 / n - m * m) / n));
    kl.reference.push_back(m);
    kl.reference_se.push_back(kl.value_se.back());
    kl.gap.push_back(0.0);
    kl.gap_se.push_back(0.0);
  }
  emit_curve(kl, cfg.output + "/curve_kl.dat");
  json res = {{"per_eps", per_eps}, {"energy", report_to_json(energy_rep)}, {"entropy", report_to_json(epr_rep)}};
  if (energy_rep.rate) res["energy_beta"] = energy_rep.rate->beta;
  if (epr_rep.rate) res["entropy_beta"] = epr_rep.rate->beta;
  if (!cfg.checks["rel_tol"].is_null())
    add_check(s, "post_layer_gap", ok_all, worst, "gap <= rel_tol * reference + se_factor * SE");
  rate_checks(s, energy_rep, cfg.checks);
  write_json_file(cfg.output + "/kramers.json", res);
  s.results = res;
}

void run_torus(const ExperimentConfig& cfg, RunSummary& s) {
  const auto& to = cfg.options["torus"];
  const std::string preset = to["preset"].get<std::string>();
  json params = preset_defaults(preset);
  for (auto it = to["params"].begin(); it != to["params"].end(); ++it) {
    if (!params.contains(it.key())) throw ConfigError("unknown key '" + it.key() + "' in torus.params");
    params[it.key()] = it.value();
  }
  const int N = to["N"].get<int>();
  params["N"] = N;
  const TorusProblem prob = torus_problem_preset(preset, params);
  const TorusHomogData data = effective_torus(prob.a, prob.b, prob.c, N);
  const TorusHomogData data2 = effective_torus(prob.a, prob.b, prob.c, 2 * N);
  const double drift = std::max({(data.F - data2.F).cwiseAbs().maxCoeff(), (data.G - data2.G).cwiseAbs().maxCoeff(),
                                 (data.bbar - data2.bbar).cwiseAbs().maxCoeff(), data.mu.max_abs_diff(data2.mu),
                                 data.phi.max_abs_diff(data2.phi)});
  {
    CsvWriter w(cfg.output + "/effective.csv", {"N", "bbar0", "F0", "G00", "density_min", "cell_residual", "centering"});
    for (const auto* dd : {&data, &data2})
      w.row({static_cast<double>(dd->N), dd->bbar(0), dd->F(0), dd->G(0, 0), dd->density_min, dd->cell_residual,
             dd->centering});
  }
  add_check(s, "cutoff_drift", drift <= 1e-4, drift, "<= 1e-4");
  json res = {{"bbar", std::vector<double>(data.bbar.data(), data.bbar.data() + data.bbar.size())},
              {"F", std::vector<double>(data.F.data(), data.F.data() + data.F.size())},
              {"G00", data.G(0, 0)},
              {"cutoff_drift", drift}};
  if (!cfg.eps.empty()) {
    FourierField phi(prob.d, 1, 1);
    std::vector<int> k(static_cast<std::size_t>(prob.d), 0);
    k[0] = 1;
    phi.at(0, phi.index(k.data())) = 0.5;
    k[0] = -1;
    phi.at(0, phi.index(k.data())) = 0.5;
    auto x0 = number_list(to["x0"], "torus.x0");
    if (x0.empty()) x0.assign(static_cast<std::size_t>(prob.d), 0.0);
    TorusErrorOptions topts;
    topts.N = N;
    topts.fast_phase = to["fast_phase"].get<double>();
    topts.integration = integration_of(cfg);
    const ConvergenceReport rep =
        torus_uniform_error(prob, phi, cfg.eps, cfg.t, to_vec(x0), cfg.n_paths, cfg.seed, topts);
    write_surface_csv(rep, cfg.output + "/surface.csv");
    write_json_file(cfg.output + "/report.json", report_to_json(rep));
    emit_plotdata(rep, cfg.output);
    rate_checks(s, rep, cfg.checks);
    res["report"] = report_to_json(rep);
  }
  write_json_file(cfg.output + "/torus.json", res);
  s.results = res;
}

void run_zvonkin(const ExperimentConfig& cfg, RunSummary& s) {
  const auto& zo = cfg.options["zvonkin"];
  const int d = zo["d"].get<int>();
  const double alpha = zo["alpha"].get<double>();
  const FourierField b = synth_divergence_free_drift(d, alpha, zo["N"].get<int>(), zo["amplitude"].get<double>(), cfg.seed);
  FourierField f = b;
  for (int c = 0; c < d; ++c)
    for (std::size_t i = 0; i < f.n_modes(); ++i) f.at(c, i) = -b.at(c, i);
  ZvonkinOptions opt;
  opt.lambda0 = zo["lambda0"].get<double>();
  opt.theta = zo["theta"].get<double>();
  opt.tol = zo["tol"].get<double>();
  const ZvonkinTransform zv = zvonkin_solve(b, f, opt);
  const TransformedSystem ts = zvonkin_transform_system(b, FourierField(d, 0, d), zv);
  const double rmax = cfg.checks["residual_max"].get<double>();
  add_check(s, "residual", zv.residual <= rmax, zv.residual, "<= " + num(rmax));
  add_check(s, "contraction", zv.q_hat < 1.0, zv.q_hat, "< 1");
  add_check(s, "grad_bound", zv.grad_sup <= 0.5, zv.grad_sup, "<= 0.5");
  add_check(s, "lambda_trend", zv.u_norm_doubled < zv.u_norm, zv.u_norm_doubled / zv.u_norm, "< 1");
  add_check(s, "roundtrip", ts.roundtrip <= 1e-10, ts.roundtrip, "<= 1e-10");
  json res = {{"lambda", zv.lambda},       {"doublings", zv.doublings},   {"q_hat", zv.q_hat},
              {"residual", zv.residual},   {"grad_sup", zv.grad_sup},     {"u_norm", zv.u_norm},
              {"u_norm_doubled", zv.u_norm_doubled}, {"trend_expected", zv.trend_expected},
              {"roundtrip", ts.roundtrip}, {"ellipticity_min", ts.ellipticity_min},
              {"ellipticity_max", ts.ellipticity_max}, {"divergence_defect", divergence_defect(b)}};
  write_json_file(cfg.output + "/zvonkin.json", res);
  write_json_file(cfg.output + "/drift.json", b.to_json());
  write_json_file(cfg.output + "/u.json", zv.u.to_json());
  s.results = res;
}

}  // namespace

HomogenizedReference make_reference(const MultiscaleSystem& sys, const std::string& kind, double dt,
                                    std::size_t n_paths) {
  if (kind != "auto" && kind != "gaussian" && kind != "montecarlo")
    throw ConfigError("reference.kind must be auto, gaussian or montecarlo");
  auto model = std::make_shared<EffectiveModel>(std::make_shared<MultiscaleSystem>(sys));
  HomogenizedReference ref;
  ref.vartheta = sys.vartheta;
  ref.dt = dt;
  ref.n_paths = n_paths;
  ref.F = [model](const double* y, double* o) { model->drift(y, o); };
  ref.sigma_bar = [model](const double* y, double* o) { model->sigma_bar(y, o); };
  ref.kind = HomogenizedReference::Kind::MonteCarlo;
  if (kind == "montecarlo") return ref;
  // affine drift and constant diffusion, checked at a few points
  const int vt = sys.vartheta;
  const EffectiveDynamics e0 = model->at(Vec::Zero(vt));
  Mat D(vt, vt);
  for (int j = 0; j < vt; ++j) {
    Vec ej = Vec::Zero(vt);
    ej(j) = 1.0;
    D.col(j) = model->at(ej).F - e0.F;
  }
  bool affine = true;
  for (double s : {-1.3, 0.7, 2.1}) {
    Vec y = Vec::LinSpaced(vt, s, -0.5 * s);
    const EffectiveDynamics e = model->at(y);
    const double scale = 1.0 + e.F.norm() + e.G.norm();
    if ((e.F - (D * y + e0.F)).norm() > 1e-8 * scale || (e.G - e0.G).norm() > 1e-8 * scale) affine = false;
  }
  if (affine && vt <= 3 && min_sym_eigenvalue(-D) > 0.0) {
    ref.kind = HomogenizedReference::Kind::GaussianLinear;
    ref.drift = D;
    ref.offset = e0.F;
    ref.G = e0.G;
  } else if (kind == "gaussian") {
    throw ConfigError("reference.kind gaussian needs an affine stable effective drift with constant diffusion");
  }
  return ref;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  only_keys(j, {"kind", "system", "observable", "eps", "t", "n_paths", "seed", "output", "z0", "integration",
                "reference", "stationary", "kramers", "torus", "zvonkin", "checks"},
            "config");
  ExperimentConfig c;
  if (!j.contains("kind") || !j["kind"].is_string()) throw ConfigError("config needs a string 'kind'");
  c.kind = j["kind"].get<std::string>();
  static const std::set<std::string> kinds{"validate", "converge", "stationary", "kramers", "torus", "zvonkin"};
  if (!kinds.count(c.kind)) throw ConfigError("unknown kind '" + c.kind + "'");
  if (!j.contains("seed") || !j["seed"].is_number_integer() || j["seed"].get<std::int64_t>() < 0)
    throw ConfigError("config needs a non-negative integer 'seed'");
  c.seed = j["seed"].get<std::uint64_t>();
  c.output = j.value("output", std::string("homoscale_out"));
  c.n_paths = j.value("n_paths", std::size_t{1000});
  if (c.n_paths < 2) throw ConfigError("n_paths must be at least 2");
  if (j.contains("eps")) c.eps = number_list(j["eps"], "eps");
  if (j.contains("t")) c.t = number_list(j["t"], "t");
  for (std::size_t i = 0; i < c.eps.size(); ++i) {
    if (!(c.eps[i] > 0.0 && c.eps[i] < 1.0)) throw ConfigError("eps values must lie in (0, 1)");
    if (i > 0 && !(c.eps[i] < c.eps[i - 1])) throw ConfigError("eps must be strictly decreasing");
  }
  for (std::size_t i = 1; i < c.t.size(); ++i)
    if (!(c.t[i] > c.t[i - 1])) throw ConfigError("t must be strictly increasing");
  if (!c.t.empty() && c.t.front() < 0.0) throw ConfigError("t must be non-negative");
  const bool needs_system = c.kind != "torus" && c.kind != "zvonkin";
  if (needs_system && !j.contains("system")) throw ConfigError("kind '" + c.kind + "' needs a 'system'");
  c.system = j.value("system", json::object());
  if (c.kind == "converge" || c.kind == "stationary") {
    if (!j.contains("observable") || !j["observable"].is_string()) throw ConfigError("kind '" + c.kind + "' needs an 'observable'");
    if (c.eps.empty()) throw ConfigError("kind '" + c.kind + "' needs a non-empty 'eps' grid");
  }
  if (c.kind == "converge" && c.t.empty()) throw ConfigError("kind 'converge' needs a 't' grid");
  if (c.kind == "kramers" && c.eps.empty()) throw ConfigError("kind 'kramers' needs a non-empty 'eps' grid");
  if (c.kind == "torus" && !c.eps.empty() && c.t.empty()) throw ConfigError("torus rate runs need a 't' grid");
  c.observable = j.value("observable", std::string());
  for (auto it = kKindDefaults.begin(); it != kKindDefaults.end(); ++it)
    c.options[it.key()] = defaulted(j.value(it.key(), json()), it.value(), it.key());
  c.checks = defaulted(j.value("checks", json()), kCheckDefaults, "checks");
  c.resolved = {{"kind", c.kind}, {"system", c.system},   {"observable", c.observable}, {"eps", c.eps},
                {"t", c.t},       {"n_paths", c.n_paths}, {"seed", c.seed},             {"output", c.output},
                {"z0", j.value("z0", json::array())},     {"checks", c.checks}};
  if (needs_system && c.system.contains("preset") && c.system["preset"].is_string()) {
    json full = preset_defaults(c.system["preset"].get<std::string>());
    if (c.system.contains("coefficients"))
      for (auto it = c.system["coefficients"].begin(); it != c.system["coefficients"].end(); ++it) full[it.key()] = it.value();
    c.resolved["system_resolved_coefficients"] = full;
  }
  for (auto it = c.options.begin(); it != c.options.end(); ++it) c.resolved[it.key()] = it.value();
  return c;
}

RunSummary run_experiment(const ExperimentConfig& cfg) {
  RunSummary s;
  s.kind = cfg.kind;
  s.output = cfg.output;
  ensure_directory(cfg.output);
  write_json_file(cfg.output + "/config.resolved.json", cfg.resolved);
  try {
    if (cfg.kind == "validate") run_validate(cfg, s);
    else if (cfg.kind == "converge") run_converge(cfg, s);
    else if (cfg.kind == "stationary") run_stationary(cfg, s);
    else if (cfg.kind == "kramers") run_kramers(cfg, s);
    else if (cfg.kind == "torus") run_torus(cfg, s);
    else if (cfg.kind == "zvonkin") run_zvonkin(cfg, s);
  } catch (const std::exception& e) {
    s.error = e.what();
  }
  bool ok = s.error.empty();
  for (const auto& c : s.checks) ok = ok && c.passed;
  s.exit_code = ok ? 0 : (s.error.empty() ? 1 : 2);
  json checks = json::array();
  for (const auto& c : s.checks)
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"threshold", c.threshold}});
  write_json_file(cfg.output + "/summary.json", {{"kind", s.kind},
                                                 {"checks", checks},
                                                 {"error", s.error.empty() ? json(nullptr) : json(s.error)},
                                                 {"exit_code", s.exit_code}});
  return s;
}

RunSummary run_experiment_file(const std::string& path, std::optional<std::uint64_t> seed_override,
                               const std::string& output_override) {
  json j = read_json_file(path);
  if (seed_override) j["seed"] = *seed_override;
  if (!output_override.empty()) j["output"] = output_override;
  return run_experiment(ExperimentConfig::from_json(j));
}

std::vector<std::string> emit_plotdata(const ConvergenceReport& rep, const std::string& dir, const std::string& stem) {
  if (rep.eps.empty() || rep.cells.empty()) throw PreconditionError("emit_plotdata: empty report");
  ConvergenceReport r = rep;
  if (r.sup_error.size() != r.eps.size()) summarize_report(r);
  std::vector<std::string> files;
  const std::string rate = dir + "/" + stem + "_rate.dat";
  {
    CsvWriter w(rate, {"log10_eps", "log10_sup_error"});
    for (std::size_t i = 0; i < r.eps.size(); ++i) w.row({std::log10(r.eps[i]), std::log10(r.sup_error[i])});
  }
  files.push_back(rate);
  if (r.layer) {
    const std::string layer = dir + "/" + stem + "_layer.dat";
    CsvWriter w(layer, {"t_over_eps2", "log_error"});
    for (std::size_t i = 0; i < r.layer->gap.size(); ++i)
      w.row({r.layer->t_over_eps2[i], std::log(std::abs(r.layer->gap[i]))});
    files.push_back(layer);
  }
  return files;
}

void emit_curve(const ThermoCurve& c, const std::string& path) {
  if (c.t.empty()) throw PreconditionError("emit_curve: empty curve");
  CsvWriter w(path, {"t", "value", "reference"});
  for (std::size_t i = 0; i < c.t.size(); ++i) w.row({c.t[i], c.value[i], c.reference[i]});
}

void write_surface_csv(const ConvergenceReport& rep, const std::string& path) {
  CsvWriter w(path, {"eps", "t", "error", "stderr"});
  for (const auto& c : rep.cells) w.row({c.eps, c.t, c.error, c.stderr_});
}

json report_to_json(const ConvergenceReport& r) {
  json cells = json::array();
  for (const auto& c : r.cells)
    cells.push_back({c.eps, c.t, c.value, c.value_se, c.reference, c.reference_se, c.error, c.stderr_});
  json j = {{"system", r.system},        {"observable", r.observable}, {"eps", r.eps},
            {"t", r.t},                  {"cells", cells},             {"sup_error", r.sup_error},
            {"sup_stderr", r.sup_stderr}, {"sup_t", r.sup_t},          {"seed", r.seed},
            {"n_paths", r.n_paths},      {"n_failed", r.n_failed},     {"rate_message", r.rate_message}};
  if (r.rate)
    j["rate"] = {{"beta", r.rate->beta}, {"ci_lo", r.rate->ci_lo}, {"ci_hi", r.rate->ci_hi},
                 {"log_c", r.rate->log_c}, {"n_used", r.rate->n_used}};
  if (r.layer)
    j["layer"] = {{"resolved", r.layer->resolved}, {"kappa", r.layer->kappa}, {"ci_lo", r.layer->ci_lo},
                  {"ci_hi", r.layer->ci_hi},       {"message", r.layer->message},
                  {"t_over_eps2", r.layer->t_over_eps2}, {"gap", r.layer->gap}, {"gap_se", r.layer->gap_se}};
  return j;
}

ConvergenceReport report_from_json(const json& j) {
  ConvergenceReport r;
  r.system = j.value("system", std::string());
  r.observable = j.value("observable", std::string());
  r.eps = j.at("eps").get<std::vector<double>>();
  r.t = j.at("t").get<std::vector<double>>();
  for (const auto& c : j.at("cells")) {
    const auto v = c.get<std::vector<double>>();
    if (v.size() != 8) throw ConfigError("report cells need 8 entries");
    r.cells.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]});
  }
  r.seed = j.value("seed", std::uint64_t{0});
  r.n_paths = j.value("n_paths", std::size_t{0});
  r.n_failed = j.value("n_failed", std::size_t{0});
  if (r.cells.size() != r.eps.size() * r.t.size()) throw ConfigError("report cells do not match the grids");
  summarize_report(r);
  if (j.contains("layer")) {
    BoundaryLayerFit b;
    const auto& l = j["layer"];
    b.resolved = l.value("resolved", false);
    b.kappa = l.value("kappa", 0.0);
    b.ci_lo = l.value("ci_lo", 0.0);
    b.ci_hi = l.value("ci_hi", 0.0);
    b.message = l.value("message", std::string());
    b.t_over_eps2 = l.value("t_over_eps2", std::vector<double>{});
    b.gap = l.value("gap", std::vector<double>{});
    b.gap_se = l.value("gap_se", std::vector<double>{});
    r.layer = b;
  }
  return r;
}

}  // namespace homoscale
