#include "homoscale/common.hpp"
#include "homoscale/experiment.hpp"
#include "homoscale/io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

using namespace homoscale;

namespace {

int print_summary(const RunSummary& s) {
  for (const auto& c : s.checks)
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " value=" << format_double(c.value) << " threshold "
              << c.threshold << "\n";
  if (!s.error.empty()) std::cerr << "error: " << s.error << "\n";
  std::cout << "artifacts: " << s.output << "\n";
  return s.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"homoscale: multiscale diffusion homogenization experiments"};
  app.require_subcommand(1);
  std::string config, output;
  std::uint64_t seed = 0;

  const std::vector<std::string> kinds{"validate", "converge", "stationary", "kramers", "torus", "zvonkin"};
  for (const auto& k : kinds) {
    auto* sub = app.add_subcommand(k, "run a '" + k + "' experiment from a JSON config");
    sub->add_option("config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("-o,--output", output, "override the output directory");
  }
  std::string report_path, report_dir;
  auto* rep = app.add_subcommand("report", "emit plot data from a saved report.json");
  rep->add_option("report", report_path, "report.json")->required()->check(CLI::ExistingFile);
  rep->add_option("-o,--output", report_dir, "directory for plot files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (rep->parsed()) {
      const ConvergenceReport r = report_from_json(read_json_file(report_path));
      if (report_dir.empty()) report_dir = std::filesystem::path(report_path).parent_path().string();
      if (report_dir.empty()) report_dir = ".";
      ensure_directory(report_dir);
      for (const auto& f : emit_plotdata(r, report_dir)) std::cout << f << "\n";
      return 0;
    }
    for (const auto& k : kinds) {
      auto* sub = app.get_subcommand(k);
      if (!sub->parsed()) continue;
      nlohmann::json j = read_json_file(config);
      if (j.contains("kind") && j["kind"] != k)
        throw ConfigError("config kind '" + j["kind"].get<std::string>() + "' does not match subcommand '" + k + "'");
      j["kind"] = k;
      if (sub->count("--seed")) j["seed"] = seed;
      if (!output.empty()) j["output"] = output;
      return print_summary(run_experiment(ExperimentConfig::from_json(j)));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
