#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "csens/inference.hpp"

namespace csens {

// Built-in data generating processes for the validation harness.
//  linear_normal: continuous covariate, logit treatment, normal linear outcome;
//                 the fitted propensity distribution has no point masses.
//  discrete_mass: binary covariate, so the propensity takes two values
//                 (0.4 and 0.6) and the standard bootstrap can fail at c there.
enum class DgpId { linear_normal, discrete_mass };

DgpId parse_dgp(const std::string& name);
std::string dgp_name(DgpId id);

Sample generate_dgp(DgpId id, Eigen::Index n, SubstreamRng& rng);
DesignSpec dgp_design_spec();  // q = (1, x, w), r = (1, w); correctly specified

// Trimmed population ATE bounds at sensitivity c, computed from the known
// DGP parameters (exact piecewise integration in tau, quadrature over W).
BoundPair true_ate_bounds(DgpId id, double c, double eps);

struct SimConfig {
  DgpId dgp = DgpId::linear_normal;
  Eigen::Index n = 500;
  int reps = 200;
  int draws = 200;
  double alpha = 0.05;
  std::uint64_t seed = 20240101;
  Eigen::VectorXd c_grid;   // default: 21 uniform points on [0,1]
  Eigen::VectorXd eval_c;   // pointwise-coverage report points (subset of grid)
  double eps = 0.05;
  double tau_step = 0.01;   // simulation profile; analysis default is 0.005
  int n_quad = 128;
  int threads = 1;
  BootstrapMode mode = BootstrapMode::hdd;

  void apply_defaults();
};

struct SimResult {
  Eigen::VectorXd c_grid;
  Eigen::VectorXd eval_c;
  Eigen::VectorXd true_lower, true_upper;      // per grid point
  Eigen::VectorXd pointwise_coverage;          // per eval_c point
  double uniform_coverage = 0.0;               // all grid points covered
  Eigen::VectorXd mass_warning_rate;           // per grid point
  int reps = 0;
};

// Monte Carlo coverage of the pointwise and uniform ATE bands against the
// true trimmed identified set.
SimResult run_simulation(const SimConfig& config);

}  // namespace csens
