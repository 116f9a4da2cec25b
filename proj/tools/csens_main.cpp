#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>

#include "csens/pipeline.hpp"

namespace {

using csens::RunConfig;

Eigen::VectorXd parse_c_grid(const std::string& text) {
  if (text.find(',') == std::string::npos) {
    const int k = std::stoi(text);
    if (k < 1) throw csens::ConfigError("c-grid count must be >= 1");
    Eigen::VectorXd g(k);
    for (int i = 0; i < k; ++i) g[i] = k == 1 ? 0.0 : static_cast<double>(i) / (k - 1);
    return g;
  }
  std::vector<double> values;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
  Eigen::VectorXd g(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) g[static_cast<Eigen::Index>(i)] = values[i];
  return g;
}

struct CommonFlags {
  std::string config_path;
  std::string c_grid_text;
  std::string link_text;
  std::string mode_text;
  std::string covariates_text;
  std::string estimands_text;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty()) out.push_back(cell);
  }
  return out;
}

void add_run_flags(CLI::App* cmd, RunConfig& cfg, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON config file; flags override it");
  cmd->add_option("--input", cfg.input, "input CSV path");
  cmd->add_option("--outcome", cfg.outcome, "outcome column");
  cmd->add_option("--treatment", cfg.treatment, "binary treatment column");
  cmd->add_option("--covariates", flags.covariates_text, "comma-separated covariate columns");
  cmd->add_option("--link", flags.link_text, "logit or probit");
  cmd->add_option("--epsilon", cfg.eps, "quantile trimming epsilon");
  cmd->add_option("--c-grid", flags.c_grid_text,
                  "grid size (uniform on [0,1]) or comma-separated values");
  cmd->add_option("--tau-step", cfg.tau_step, "quantile grid spacing");
  cmd->add_option("--nquad", cfg.n_quad, "quadrature points for the tau integral");
  cmd->add_option("--draws", cfg.draws, "bootstrap draws");
  cmd->add_option("--seed", cfg.seed, "RNG seed");
  cmd->add_option("--alpha", cfg.alpha, "1 - coverage level");
  cmd->add_option("--mode", flags.mode_text, "bootstrap mode: hdd or standard");
  cmd->add_option("--estimands", flags.estimands_text,
                  "comma list: ate,att,e0,e1,cate@<row>,cqte@<row>:<tau>");
  cmd->add_option("--conclusion", cfg.conclusion, "'lower>=t' or 'upper<=t'");
  cmd->add_option("--threshold", cfg.threshold, "conclusion threshold t");
  cmd->add_option("--out-dir", cfg.out_dir, "output directory");
  cmd->add_option("--threads", cfg.threads, "worker threads (0 = all cores)");
  cmd->add_option("--ipw-draws", cfg.ipw_draws, "bootstrap draws for baseline IPW SEs");
  cmd->add_flag("--interactions", cfg.interact_q, "add x*w interactions to q(x,w)");
}

RunConfig finalize_config(const CLI::App* cmd, RunConfig flags_cfg,
                          const CommonFlags& flags) {
  RunConfig cfg = flags_cfg;
  if (!flags.config_path.empty()) {
    RunConfig base = RunConfig::from_file(flags.config_path);
    // CLI flags override file values only when explicitly given.
    auto keep = [&](const std::string& name) { return cmd->count("--" + name) > 0; };
    if (!keep("input")) cfg.input = base.input;
    if (!keep("outcome")) cfg.outcome = base.outcome;
    if (!keep("treatment")) cfg.treatment = base.treatment;
    if (!keep("covariates")) cfg.covariates = base.covariates;
    if (!keep("link")) cfg.link = base.link;
    if (!keep("epsilon")) cfg.eps = base.eps;
    if (!keep("tau-step")) cfg.tau_step = base.tau_step;
    if (!keep("nquad")) cfg.n_quad = base.n_quad;
    if (!keep("draws")) cfg.draws = base.draws;
    if (!keep("seed")) cfg.seed = base.seed;
    if (!keep("alpha")) cfg.alpha = base.alpha;
    if (!keep("mode")) cfg.mode = base.mode;
    if (!keep("estimands")) cfg.estimands = base.estimands;
    if (!keep("conclusion")) cfg.conclusion = base.conclusion;
    if (!keep("threshold")) cfg.threshold = base.threshold;
    if (!keep("out-dir")) cfg.out_dir = base.out_dir;
    if (!keep("threads")) cfg.threads = base.threads;
    if (!keep("ipw-draws")) cfg.ipw_draws = base.ipw_draws;
    if (!keep("interactions")) cfg.interact_q = base.interact_q;
    if (!keep("c-grid")) cfg.c_grid = base.c_grid;
  }
  if (!flags.covariates_text.empty()) cfg.covariates = split_list(flags.covariates_text);
  if (!flags.estimands_text.empty()) cfg.estimands = split_list(flags.estimands_text);
  if (!flags.link_text.empty()) {
    if (flags.link_text == "logit") cfg.link = csens::Link::logit;
    else if (flags.link_text == "probit") cfg.link = csens::Link::probit;
    else throw csens::ConfigError("link must be 'logit' or 'probit'");
  }
  if (!flags.mode_text.empty()) {
    if (flags.mode_text == "hdd") cfg.mode = csens::BootstrapMode::hdd;
    else if (flags.mode_text == "standard") cfg.mode = csens::BootstrapMode::standard;
    else throw csens::ConfigError("mode must be 'hdd' or 'standard'");
  }
  if (!flags.c_grid_text.empty()) cfg.c_grid = parse_c_grid(flags.c_grid_text);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensitivity analysis for unconfoundedness via conditional c-dependence"};
  app.require_subcommand(1);

  RunConfig cfg;
  CommonFlags flags;

  auto* analyze = app.add_subcommand(
      "analyze", "bound curves, bands, breakdown points, diagnostics");
  add_run_flags(analyze, cfg, flags);

  auto* diagnose =
      app.add_subcommand("diagnose", "leave-out-k propensity and overlap tables");
  add_run_flags(diagnose, cfg, flags);

  auto* bounds = app.add_subcommand("bounds", "evaluate one bound pair (no bootstrap)");
  add_run_flags(bounds, cfg, flags);
  std::string bounds_estimand = "ate";
  double bounds_c = 0.0;
  bounds->add_option("--estimand", bounds_estimand, "estimand to evaluate");
  bounds->add_option("--c", bounds_c, "sensitivity parameter in [0,1]");

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo coverage harness");
  csens::SimConfig sim;
  std::string sim_dgp = "linear_normal";
  std::string sim_mode = "hdd";
  std::string sim_cgrid, sim_evalc, sim_outdir = ".";
  long long sim_n = 500;
  simulate->add_option("--dgp", sim_dgp, "linear_normal or discrete_mass");
  simulate->add_option("--n", sim_n, "sample size per replication");
  simulate->add_option("--reps", sim.reps, "Monte Carlo replications");
  simulate->add_option("--draws", sim.draws, "bootstrap draws per replication");
  simulate->add_option("--alpha", sim.alpha, "1 - coverage level");
  simulate->add_option("--seed", sim.seed, "RNG seed");
  simulate->add_option("--epsilon", sim.eps, "quantile trimming epsilon");
  simulate->add_option("--tau-step", sim.tau_step, "quantile grid spacing");
  simulate->add_option("--nquad", sim.n_quad, "quadrature points");
  simulate->add_option("--threads", sim.threads, "worker threads");
  simulate->add_option("--mode", sim_mode, "hdd or standard");
  simulate->add_option("--c-grid", sim_cgrid, "grid size or comma values");
  simulate->add_option("--eval-c", sim_evalc, "comma list of pointwise-coverage c values");
  simulate->add_option("--out-dir", sim_outdir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (analyze->parsed()) {
      const auto report = csens::cmd_analyze(finalize_config(analyze, cfg, flags));
      std::cout << "report written to "
                << report["config"]["out_dir"].get<std::string>() << "/report.json\n";
    } else if (diagnose->parsed()) {
      csens::cmd_diagnose(finalize_config(diagnose, cfg, flags));
      std::cout << "diagnostics written\n";
    } else if (bounds->parsed()) {
      const auto pair =
          csens::cmd_bounds(finalize_config(bounds, cfg, flags), bounds_estimand, bounds_c);
      std::cout << bounds_estimand << " c=" << csens::format_double(bounds_c) << " ["
                << csens::format_double(pair.lower) << ", "
                << csens::format_double(pair.upper) << "]\n";
    } else if (simulate->parsed()) {
      sim.dgp = csens::parse_dgp(sim_dgp);
      sim.n = static_cast<Eigen::Index>(sim_n);
      if (sim_mode == "standard") sim.mode = csens::BootstrapMode::standard;
      if (!sim_cgrid.empty()) sim.c_grid = parse_c_grid(sim_cgrid);
      if (!sim_evalc.empty()) {
        const auto vals = split_list(sim_evalc);
        sim.eval_c.resize(static_cast<Eigen::Index>(vals.size()));
        for (std::size_t i = 0; i < vals.size(); ++i)
          sim.eval_c[static_cast<Eigen::Index>(i)] = std::stod(vals[i]);
      }
      const auto report = csens::cmd_simulate(sim, sim_outdir);
      std::cout << "uniform coverage: "
                << csens::format_double(report["uniform_coverage"].get<double>())
                << "\n";
    }
  } catch (const csens::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const csens::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const csens::EstimationError& e) {
    std::cerr << "estimation error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
