#include "homoscale/experiment.hpp"
#include "homoscale/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace homoscale;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("homoscale_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

json converge_config(const std::string& out) {
  return {{"kind", "converge"},
          {"system", {{"preset", "averaging-ou"}}},
          {"observable", "tanh_y1"},
          {"eps", {0.4, 0.2}},
          {"t", {0.5, 1.0}},
          {"n_paths", 600},
          {"seed", 3},
          {"z0", {0.0, 1.0}},
          {"output", out}};
}

}  // namespace

TEST(Config, UnknownKeyNamed) {
  json j = converge_config("x");
  j["epzilon"] = {0.1};
  try {
    ExperimentConfig::from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("epzilon"), std::string::npos);
  }
}

TEST(Config, GridAndSeedValidation) {
  json j = converge_config("x");
  j["eps"] = {0.1, 0.2};
  EXPECT_THROW(ExperimentConfig::from_json(j), ConfigError);
  j = converge_config("x");
  j["eps"] = {1.0, 0.2};
  EXPECT_THROW(ExperimentConfig::from_json(j), ConfigError);
  j = converge_config("x");
  j["t"] = {1.0, 0.5};
  EXPECT_THROW(ExperimentConfig::from_json(j), ConfigError);
  j = converge_config("x");
  j.erase("seed");
  EXPECT_THROW(ExperimentConfig::from_json(j), ConfigError);
  j = converge_config("x");
  j["checks"] = {{"beta_mn", 0.5}};
  EXPECT_THROW(ExperimentConfig::from_json(j), ConfigError);
}

TEST(Config, ResolvedEchoHasDefaults) {
  const ExperimentConfig c = ExperimentConfig::from_json(converge_config("x"));
  EXPECT_TRUE(c.resolved.contains("integration"));
  EXPECT_TRUE(c.resolved.contains("reference"));
  EXPECT_EQ(c.resolved["checks"]["se_factor"], 4.0);
}

TEST(PlotData, SyntheticRateLine) {
  ConvergenceReport r;
  r.eps = {0.4, 0.2, 0.1};
  r.t = {1.0};
  for (double e : r.eps) r.cells.push_back({e, 1.0, 0.0, 0.0, 0.0, 0.0, e, 1e-9});
  const auto dir = scratch("plot");
  std::filesystem::create_directories(dir);
  const auto files = emit_plotdata(r, dir.string());
  ASSERT_FALSE(files.empty());
  const CsvTable t = read_csv(files[0]);
  EXPECT_EQ(t.header, (std::vector<std::string>{"log10_eps", "log10_sup_error"}));
  for (std::size_t i = 1; i < t.rows.size(); ++i) {
    const double slope = (t.rows[i][1] - t.rows[i - 1][1]) / (t.rows[i][0] - t.rows[i - 1][0]);
    EXPECT_NEAR(slope, 1.0, 1e-14);
  }
  EXPECT_THROW(emit_plotdata(ConvergenceReport{}, dir.string()), PreconditionError);
  std::filesystem::remove_all(dir);
}

TEST(ReportJson, RoundTrip) {
  ConvergenceReport r;
  r.eps = {0.4, 0.2, 0.1};
  r.t = {1.0, 2.0};
  for (double e : r.eps)
    for (double t : r.t) r.cells.push_back({e, t, 1.0, 0.01, 1.0 - e * t, 0.0, e * t, 1e-4});
  summarize_report(r);
  const ConvergenceReport back = report_from_json(report_to_json(r));
  EXPECT_EQ(back.cells.size(), r.cells.size());
  EXPECT_EQ(back.sup_error, r.sup_error);
  ASSERT_TRUE(back.rate.has_value());
  EXPECT_EQ(back.rate->beta, r.rate->beta);
}

TEST(RunExperiment, ConvergeArtifactsAndDeterminism) {
  const auto a = scratch("conv_a"), b = scratch("conv_b");
  const RunSummary sa = run_experiment(ExperimentConfig::from_json(converge_config(a.string())));
  const RunSummary sb = run_experiment(ExperimentConfig::from_json(converge_config(b.string())));
  EXPECT_EQ(sa.exit_code, 0) << sa.error;
  for (const char* f : {"config.resolved.json", "summary.json", "surface.csv", "report.json", "report_rate.dat"})
    EXPECT_TRUE(std::filesystem::exists(a / f)) << f;
  EXPECT_EQ(slurp(a / "surface.csv"), slurp(b / "surface.csv"));
  EXPECT_EQ(read_csv((a / "surface.csv").string()).header, (std::vector<std::string>{"eps", "t", "error", "stderr"}));
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST(RunExperiment, KramersCurvesPresent) {
  const auto out = scratch("kramers");
  const json j = {{"kind", "kramers"},
                  {"system", {{"preset", "langevin-scalar"}}},
                  {"eps", {0.4, 0.2, 0.1}},
                  {"n_paths", 400},
                  {"seed", 1},
                  {"kramers", {{"T", 1.0}, {"n_times", 11}, {"v", {1.0}}}},
                  {"output", out.string()}};
  const RunSummary s = run_experiment(ExperimentConfig::from_json(j));
  EXPECT_EQ(s.error, "");
  for (const char* f : {"curve_energy.dat", "curve_entropy.dat", "curve_kl.dat", "energy_eps0.csv",
                        "entropy_eps2.csv"})
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  EXPECT_EQ(read_csv((out / "energy_eps0.csv").string()).header,
            (std::vector<std::string>{"t", "value", "stderr", "reference", "ref_stderr"}));
  std::filesystem::remove_all(out);
}

TEST(RunExperiment, DownstreamErrorGivesNonzeroExit) {
  const auto out = scratch("bad");
  const json j = {{"kind", "kramers"}, {"system", {{"preset", "averaging-ou"}}}, {"eps", {0.2}},
                  {"seed", 1},         {"n_paths", 10},                           {"output", out.string()}};
  const RunSummary s = run_experiment(ExperimentConfig::from_json(j));
  EXPECT_NE(s.exit_code, 0);
  EXPECT_FALSE(s.error.empty());
  const json summary = read_json_file((out / "summary.json").string());
  EXPECT_EQ(summary["exit_code"], s.exit_code);
  std::filesystem::remove_all(out);
}

TEST(RunExperiment, ZvonkinChecks) {
  const auto out = scratch("zv");
  const json j = {{"kind", "zvonkin"}, {"seed", 0}, {"zvonkin", {{"N", 8}}}, {"output", out.string()}};
  const RunSummary s = run_experiment(ExperimentConfig::from_json(j));
  EXPECT_EQ(s.exit_code, 0) << s.error;
  EXPECT_GE(s.checks.size(), 4u);
  std::filesystem::remove_all(out);
}

TEST(Csv, SeventeenDigitRoundTrip) {
  const auto dir = scratch("csv");
  std::filesystem::create_directories(dir);
  const double v = 0.1 + 0.2;
  {
    CsvWriter w((dir / "a.csv").string(), {"x"});
    w.row({v});
  }
  EXPECT_EQ(read_csv((dir / "a.csv").string()).rows[0][0], v);
  EXPECT_EQ(format_double(v), "0.30000000000000004");
  std::filesystem::remove_all(dir);
}
