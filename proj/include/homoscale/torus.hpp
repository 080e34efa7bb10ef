#pragma once

#include "homoscale/common.hpp"
#include "homoscale/convergence.hpp"
#include "homoscale/fourier.hpp"
#include "homoscale/system.hpp"

#include <json.hpp>

#include <string>

namespace homoscale {

// Periodic diffusion generator L0 = a : grad^2 + b . grad with drift c at
// the intermediate scale. a has d*d components (row-major), b and c have d.
struct TorusProblem {
  std::string name;
  int d = 1;
  FourierField a;
  FourierField b;
  FourierField c;
};

TorusProblem torus_problem_preset(const std::string& name, const nlohmann::json& params);

// Solves L0^* mu = 0 with unit mass by a sparse Galerkin solve on {-N..N}^d.
// Throws NumericalError when the density dips below -1e-8 on the grid.
FourierField invariant_density_torus(const FourierField& a, const FourierField& b, int N);

// Solves L0 Phi = -rhs with int Phi dmu = 0 (bordered Galerkin system).
// Throws PreconditionError when |int rhs dmu| > 1e-10.
FourierField cell_problem_torus(const FourierField& a, const FourierField& b, const FourierField& rhs,
                                const FourierField& mu, int N);

// max over the grid of |L0 Phi + rhs|, relative to max |rhs| (or absolute
// when rhs vanishes).
double cell_residual(const FourierField& a, const FourierField& b, const FourierField& phi, const FourierField& rhs,
                     int M = 0);

// int (L0 psi) mu for a scalar band-limited psi.
double adjoint_pairing(const FourierField& a, const FourierField& b, const FourierField& mu, const FourierField& psi);

// int f g dmu-type pairing of two scalar series: sum_k f_k g_{-k}.
double pairing(const FourierField& f, int cf, const FourierField& g, int cg);

struct TorusHomogData {
  int N = 0;
  FourierField mu;
  FourierField phi;  // d components
  Vec bbar;
  Vec F;
  Mat G;
  double density_min = 0.0;
  double cell_residual = 0.0;
  double centering = 0.0;  // |int Phi dmu|
};

TorusHomogData effective_torus(const FourierField& a, const FourierField& b, const FourierField& c, int N);

// Multiscale form of the periodic problem: fast x = X/eps (unwrapped),
// slow Y = X - bbar t/eps, so b_fast = b, c_fast = c, sigma = a^{1/2},
// F = c, H = b - bbar, G = sigma.
MultiscaleSystem torus_multiscale_system(const TorusProblem& prob, const TorusHomogData& data);

// Used by the preset table.
MultiscaleSystem torus_preset_system(const std::string& name, const nlohmann::json& params);

// E phi(y0 + F t + sqrt(2 G) W_t) for a scalar band-limited phi.
double torus_reference_expectation(const FourierField& phi, const Vec& y0, const Vec& F, const Mat& G, double t);

struct TorusErrorOptions {
  int N = 16;
  double fast_phase = 0.25;  // initial fast position X0/eps mod 1
  IntegrationOptions integration;
};

// Uniform-in-time error of the centered slow variable against the Gaussian
// homogenized law. The start X0 = eps (round(x0/eps) + fast_phase) keeps the
// fast phase fixed across the eps grid.
ConvergenceReport torus_uniform_error(const TorusProblem& prob, const FourierField& phi,
                                      const std::vector<double>& eps_grid, const std::vector<double>& t_grid,
                                      const Vec& x0, std::size_t n_paths, std::uint64_t seed,
                                      const TorusErrorOptions& topts = {});

}  // namespace homoscale
