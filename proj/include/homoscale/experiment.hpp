#pragma once

#include "homoscale/convergence.hpp"
#include "homoscale/kramers.hpp"
#include "homoscale/system.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace homoscale {

// Homogenized reference chosen for a system: Gaussian-linear when the
// effective drift is affine with constant diffusion, Monte Carlo otherwise.
// kind: auto | gaussian | montecarlo.
HomogenizedReference make_reference(const MultiscaleSystem& sys, const std::string& kind = "auto", double dt = 1e-3,
                                    std::size_t n_paths = 0);

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  std::string threshold;
};

struct ExperimentConfig {
  std::string kind;  // validate | converge | stationary | kramers | torus | zvonkin
  nlohmann::json system;
  std::string observable;
  std::vector<double> eps;
  std::vector<double> t;
  std::size_t n_paths = 1000;
  std::uint64_t seed = 0;
  std::string output;
  nlohmann::json options;  // kind-specific block, fully defaulted
  nlohmann::json checks;   // tolerance overrides / requested checks
  nlohmann::json resolved;

  // Parses and validates; unknown keys and malformed grids raise ConfigError
  // naming the key.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

struct RunSummary {
  std::string kind;
  std::string output;
  std::vector<CheckResult> checks;
  std::string error;
  int exit_code = 0;
  nlohmann::json results;
};

RunSummary run_experiment(const ExperimentConfig& cfg);
RunSummary run_experiment_file(const std::string& path, std::optional<std::uint64_t> seed_override = std::nullopt,
                               const std::string& output_override = "");

// Two-column plot files: rate line (log10_eps, log10_sup_error) and, when
// present, the boundary-layer line (t_over_eps2, log_error).
std::vector<std::string> emit_plotdata(const ConvergenceReport& report, const std::string& dir,
                                       const std::string& stem = "report");
// Curve file with columns t, value, reference.
void emit_curve(const ThermoCurve& curve, const std::string& path);

nlohmann::json report_to_json(const ConvergenceReport& report);
ConvergenceReport report_from_json(const nlohmann::json& j);
void write_surface_csv(const ConvergenceReport& report, const std::string& path);

}  // namespace homoscale
