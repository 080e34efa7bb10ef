#pragma once

#include "homoscale/common.hpp"
#include "homoscale/system.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace homoscale {

enum class Scheme { Auto, Explicit, ExactOU, LinearExact };

std::string scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

struct IntegrationOptions {
  Scheme scheme = Scheme::Auto;
  // Fine step; 0 selects the scheme default.
  double dt = 0.0;
  // Output grid starting at 0; empty means the uniform fine grid.
  std::vector<double> output_times;
  double blowup = 1e12;
};

struct EnsembleMeta {
  double eps = 1.0;
  double dt = 0.0;
  double T = 0.0;
  std::uint64_t seed = 0;
  std::string scheme;
  std::string system;
};

// States of all paths on the output grid, stored path-major:
// data[(path * n_times + ti) * state_dim + k].
struct TrajectoryEnsemble {
  std::size_t n_paths = 0;
  std::size_t state_dim = 0;
  int d = 0;  // leading fast block size (0 for homogenized ensembles)
  std::vector<double> times;
  std::vector<double> data;
  std::vector<std::uint8_t> failed;
  std::size_t n_failed = 0;
  EnsembleMeta meta;

  const double* state(std::size_t path, std::size_t ti) const {
    return data.data() + (path * times.size() + ti) * state_dim;
  }
  double* state(std::size_t path, std::size_t ti) { return data.data() + (path * times.size() + ti) * state_dim; }
  bool flagged() const { return n_failed > 0; }
};

// Receives each path state on the output grid; calls for one path come
// from one thread, in time order.
using PathObserver = std::function<void(std::size_t path, std::size_t ti, const double* z)>;

struct SimulationResult {
  std::vector<double> times;
  std::vector<std::uint8_t> failed;
  std::size_t n_failed = 0;
  double dt = 0.0;
  Scheme scheme = Scheme::Auto;
};

// Resolves Auto and the default step for a given system and epsilon.
Scheme resolve_scheme(const MultiscaleSystem& sys, Scheme requested);
double default_dt(const MultiscaleSystem& sys, Scheme scheme, double eps, double T, bool has_output_grid);

// Multiscale system with scales eps^-2, eps^-1, 1 and one Brownian increment
// per step shared by both rows. The Brownian path restricted to the output
// grid depends only on (seed, path), so runs at different eps share it.
SimulationResult simulate_multiscale(const MultiscaleSystem& sys, double eps, const Vec& z0, double T,
                                     std::size_t n_paths, std::uint64_t seed, const IntegrationOptions& opts,
                                     const PathObserver& observer);

TrajectoryEnsemble integrate_multiscale(const MultiscaleSystem& sys, double eps, const Vec& z0, double T,
                                        std::size_t n_paths, std::uint64_t seed,
                                        const IntegrationOptions& opts = {});

using VecFn = std::function<void(const double* y, double* out)>;

// Homogenized SDE dY = F(Y) dt + sqrt(2) SigmaBar(Y) dW by Euler-Maruyama.
// SigmaBar writes a row-major vartheta x vartheta block.
SimulationResult simulate_homogenized(const VecFn& F, const VecFn& sigma_bar, int vartheta, const Vec& y0,
                                      double T, double dt, std::size_t n_paths, std::uint64_t seed,
                                      const IntegrationOptions& opts, const PathObserver& observer);

TrajectoryEnsemble integrate_homogenized(const VecFn& F, const VecFn& sigma_bar, int vartheta, const Vec& y0,
                                         double T, double dt, std::size_t n_paths, std::uint64_t seed,
                                         const IntegrationOptions& opts = {});

struct ExpectationEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  double t = 0.0;       // grid time used
  double offset = 0.0;  // grid time minus requested time
  std::size_t n_used = 0;
};

// Sample mean and standard error of phi over non-failed paths at the grid
// time nearest to t.
ExpectationEstimate estimate_expectation(const TrajectoryEnsemble& ens, const TestObservable& phi, double t);

// Binary block (little-endian f64 with a dims header) plus JSON sidecar.
void write_ensemble(const TrajectoryEnsemble& ens, const std::string& path_prefix);
TrajectoryEnsemble read_ensemble(const std::string& path_prefix);
// CSV with columns t,path_id,z0,z1,...
void export_ensemble_csv(const TrajectoryEnsemble& ens, const std::string& path);

}  // namespace homoscale
