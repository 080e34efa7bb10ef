#include "homoscale/effective.hpp"
#include "homoscale/experiment.hpp"
#include "homoscale/kramers.hpp"
#include "homoscale/linalg.hpp"
#include "homoscale/presets.hpp"
#include "homoscale/sde.hpp"
#include "homoscale/torus.hpp"
#include "homoscale/zvonkin.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace homoscale;

namespace {

nlohmann::json from_py(const py::object& o) {
  auto json_mod = py::module_::import("json");
  return nlohmann::json::parse(py::str(json_mod.attr("dumps")(o)).cast<std::string>());
}

py::object to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

py::array_t<double> ensemble_array(const TrajectoryEnsemble& e) {
  py::array_t<double> a({e.n_paths, e.times.size(), e.state_dim});
  std::copy(e.data.begin(), e.data.end(), a.mutable_data());
  return a;
}

py::dict simulate(const std::string& preset, py::object params, double eps, const Vec& z0, double T,
                  std::size_t n_paths, std::uint64_t seed, const std::vector<double>& times, const std::string& scheme,
                  double dt) {
  const MultiscaleSystem sys = make_preset(preset, from_py(params));
  IntegrationOptions o;
  o.scheme = scheme_from_name(scheme);
  o.dt = dt;
  o.output_times = times;
  TrajectoryEnsemble e;
  {
    py::gil_scoped_release release;
    e = integrate_multiscale(sys, eps, z0, T, n_paths, seed, o);
  }
  py::dict out;
  out["times"] = e.times;
  out["states"] = ensemble_array(e);
  out["failed"] = std::vector<bool>(e.failed.begin(), e.failed.end());
  out["dt"] = e.meta.dt;
  out["scheme"] = e.meta.scheme;
  return out;
}

py::dict effective(const std::string& preset, py::object params, const Vec& y, const std::string& route) {
  auto sys = std::make_shared<MultiscaleSystem>(make_preset(preset, from_py(params)));
  EffectiveModel::Route r = EffectiveModel::Route::Auto;
  if (route == "general") r = EffectiveModel::Route::General;
  else if (route == "sk") r = EffectiveModel::Route::SK;
  else if (route != "auto") throw ConfigError("route must be auto, general or sk");
  const EffectiveDynamics e = EffectiveModel(sys, r).at(y);
  py::dict out;
  out["F"] = e.F;
  out["G"] = e.G;
  out["sigma_bar"] = e.sigma_bar;
  out["provenance"] = e.provenance;
  return out;
}

py::dict torus_effective(const std::string& preset, py::object params, int N) {
  nlohmann::json p = from_py(params);
  const TorusProblem prob = torus_problem_preset(preset, p);
  const TorusHomogData d = effective_torus(prob.a, prob.b, prob.c, N);
  py::dict out;
  out["bbar"] = d.bbar;
  out["F"] = d.F;
  out["G"] = d.G;
  out["density_min"] = d.density_min;
  out["cell_residual"] = d.cell_residual;
  return out;
}

py::dict zvonkin(int d, double alpha, int N, double amplitude, std::uint64_t seed) {
  const FourierField b = synth_divergence_free_drift(d, alpha, N, amplitude, seed);
  FourierField f = b;
  for (int c = 0; c < d; ++c)
    for (std::size_t i = 0; i < f.n_modes(); ++i) f.at(c, i) = -b.at(c, i);
  const ZvonkinTransform z = zvonkin_solve(b, f);
  py::dict out;
  out["lambda"] = z.lambda;
  out["q_hat"] = z.q_hat;
  out["residual"] = z.residual;
  out["grad_sup"] = z.grad_sup;
  out["u_norm"] = z.u_norm;
  out["u_norm_doubled"] = z.u_norm_doubled;
  out["doublings"] = z.doublings;
  return out;
}

py::dict run(py::object config) {
  RunSummary s;
  const ExperimentConfig cfg = ExperimentConfig::from_json(from_py(config));
  {
    py::gil_scoped_release release;
    s = run_experiment(cfg);
  }
  py::list checks;
  for (const auto& c : s.checks) {
    py::dict d;
    d["name"] = c.name;
    d["passed"] = c.passed;
    d["value"] = c.value;
    d["threshold"] = c.threshold;
    checks.append(d);
  }
  py::dict out;
  out["exit_code"] = s.exit_code;
  out["error"] = s.error;
  out["output"] = s.output;
  out["checks"] = checks;
  out["results"] = to_py(s.results);
  return out;
}

}  // namespace

PYBIND11_MODULE(_homoscale, m) {
  m.doc() = "Multiscale diffusion homogenization core";
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("preset_names", &preset_names);
  m.def("preset_defaults", [](const std::string& n) { return to_py(preset_defaults(n)); });
  m.def("solve_lyapunov", &solve_lyapunov, py::arg("A"), py::arg("M"));
  m.def("lyapunov_residual", &lyapunov_residual, py::arg("A"), py::arg("S"), py::arg("M"));
  m.def("simulate", &simulate, py::arg("preset"), py::arg("params") = py::dict(), py::arg("eps"), py::arg("z0"),
        py::arg("T"), py::arg("n_paths"), py::arg("seed"), py::arg("times") = std::vector<double>{},
        py::arg("scheme") = "auto", py::arg("dt") = 0.0);
  m.def("effective", &effective, py::arg("preset"), py::arg("params") = py::dict(), py::arg("y"),
        py::arg("route") = "auto");
  m.def("torus_effective", &torus_effective, py::arg("preset"), py::arg("params") = py::dict(), py::arg("N") = 16);
  m.def("zvonkin", &zvonkin, py::arg("d") = 2, py::arg("alpha") = -0.7, py::arg("N") = 16,
        py::arg("amplitude") = 1.0, py::arg("seed") = 0);
  m.def("run_experiment", &run, py::arg("config"));
}
