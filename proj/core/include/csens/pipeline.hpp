#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "csens/diagnostics.hpp"
#include "csens/inference.hpp"
#include "csens/simulate.hpp"

namespace csens {

struct RunConfig {
  std::string input;
  std::string outcome;
  std::string treatment;
  std::vector<std::string> covariates;
  bool interact_q = false;  // add x*w interactions to q(x,w)
  Link link = Link::logit;
  double eps = 0.05;
  Eigen::VectorXd c_grid;       // default: 21 uniform points on [0,1]
  double tau_step = 0.005;
  int n_quad = 500;
  int draws = 1000;
  std::uint64_t seed = 20240101;
  double alpha = 0.05;
  BootstrapMode mode = BootstrapMode::hdd;
  double eta_scale = 0.05;    // eta = eta_scale * n^(-1/4)
  double kappa_scale = 1.0;   // kappa = kappa_scale * n^(-1/3)
  std::vector<std::string> estimands = {"ate", "att"};
  std::string conclusion = "lower>=t";  // or "upper<=t"
  double threshold = 0.0;
  std::string out_dir = ".";
  int threads = 0;      // 0: all hardware threads
  int ipw_draws = 200;  // bootstrap draws for baseline IPW standard errors

  static RunConfig from_json(const nlohmann::ordered_json& j);
  static RunConfig from_file(const std::string& path);
  nlohmann::ordered_json to_json() const;

  void validate() const;
  DesignSpec design_spec() const;
  TuningParams tuning_for(Eigen::Index n) const;
  Conclusion parsed_conclusion() const;
  int resolved_threads() const;
};

// Resolve an estimand string against a loaded sample. Accepts
// "ate", "att", "e0", "e1", "cate@<row>", "cqte@<row>:<tau>" (rows 1-based).
Estimand resolve_estimand(const std::string& text, const Sample& sample);

// Full analysis: first stages, bound curves, bootstrap bands, breakdown
// points, leave-out-k diagnostics. Writes report.json plus CSV tables to
// config.out_dir and returns the report.
nlohmann::ordered_json cmd_analyze(const RunConfig& config);

// Leave-out-variable-k and overlap tables only (deltak.csv, overlap.csv).
nlohmann::ordered_json cmd_diagnose(const RunConfig& config);

// Quick bound evaluation without bootstrap.
BoundPair cmd_bounds(const RunConfig& config, const std::string& estimand, double c);

// Monte Carlo coverage harness; writes coverage.csv to out_dir.
nlohmann::ordered_json cmd_simulate(const SimConfig& sim, const std::string& out_dir);

// Lossless, locale-independent formatting used in all CSV output.
std::string format_double(double v);

}  // namespace csens
