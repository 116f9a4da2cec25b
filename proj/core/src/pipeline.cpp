#include "csens/pipeline.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace csens {

using nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

Eigen::VectorXd uniform_c_grid(int k) {
  Eigen::VectorXd g(k);
  for (int i = 0; i < k; ++i) g[i] = static_cast<double>(i) / (k - 1);
  return g;
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd from_std(const std::vector<double>& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << text;
}

}  // namespace

RunConfig RunConfig::from_json(const ordered_json& j) {
  RunConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).template get<std::decay_t<decltype(field)>>();
  };
  get("input", c.input);
  get("outcome", c.outcome);
  get("treatment", c.treatment);
  get("covariates", c.covariates);
  get("interact_q", c.interact_q);
  if (j.contains("link")) {
    const std::string s = j.at("link").get<std::string>();
    if (s == "logit") c.link = Link::logit;
    else if (s == "probit") c.link = Link::probit;
    else throw ConfigError("link must be 'logit' or 'probit'");
  }
  get("epsilon", c.eps);
  if (j.contains("c_grid")) {
    const auto& g = j.at("c_grid");
    if (g.is_number_integer())
      c.c_grid = uniform_c_grid(g.get<int>());
    else
      c.c_grid = from_std(g.get<std::vector<double>>());
  }
  get("tau_step", c.tau_step);
  get("n_quad", c.n_quad);
  get("draws", c.draws);
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  get("alpha", c.alpha);
  if (j.contains("mode")) {
    const std::string s = j.at("mode").get<std::string>();
    if (s == "hdd") c.mode = BootstrapMode::hdd;
    else if (s == "standard") c.mode = BootstrapMode::standard;
    else throw ConfigError("mode must be 'hdd' or 'standard'");
  }
  get("eta_scale", c.eta_scale);
  get("kappa_scale", c.kappa_scale);
  get("estimands", c.estimands);
  get("conclusion", c.conclusion);
  get("threshold", c.threshold);
  get("out_dir", c.out_dir);
  get("threads", c.threads);
  get("ipw_draws", c.ipw_draws);
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return from_json(j);
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["input"] = input;
  j["outcome"] = outcome;
  j["treatment"] = treatment;
  j["covariates"] = covariates;
  j["interact_q"] = interact_q;
  j["link"] = link == Link::logit ? "logit" : "probit";
  j["epsilon"] = eps;
  j["c_grid"] = to_std(c_grid);
  j["tau_step"] = tau_step;
  j["n_quad"] = n_quad;
  j["draws"] = draws;
  j["seed"] = seed;
  j["alpha"] = alpha;
  j["mode"] = mode == BootstrapMode::hdd ? "hdd" : "standard";
  j["eta_scale"] = eta_scale;
  j["kappa_scale"] = kappa_scale;
  j["estimands"] = estimands;
  j["conclusion"] = conclusion;
  j["threshold"] = threshold;
  j["out_dir"] = out_dir;
  j["threads"] = threads;
  j["ipw_draws"] = ipw_draws;
  return j;
}

void RunConfig::validate() const {
  if (input.empty()) throw ConfigError("missing input path");
  if (outcome.empty() || treatment.empty())
    throw ConfigError("outcome and treatment column names are required");
  if (covariates.empty()) throw ConfigError("at least one covariate is required");
  if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("epsilon must lie in (0, 0.5)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (draws < 1) throw ConfigError("draws must be >= 1");
  if (estimands.empty()) throw ConfigError("estimand list is empty");
  if (conclusion != "lower>=t" && conclusion != "upper<=t")
    throw ConfigError("conclusion must be 'lower>=t' or 'upper<=t'");
}

DesignSpec RunConfig::design_spec() const {
  return interact_q ? DesignSpec::interacted(covariates) : DesignSpec::linear(covariates);
}

TuningParams RunConfig::tuning_for(Eigen::Index n) const {
  TuningParams t;
  t.eps = eps;
  t.eps_small = eps / 2.0;
  t.eta = std::min(eta_scale * std::pow(static_cast<double>(n), -0.25),
                   0.95 * (t.eps - t.eps_small));
  t.kappa = kappa_scale * std::pow(static_cast<double>(n), -1.0 / 3.0);
  t.tau_step = tau_step;
  t.n_quad = n_quad;
  t.validate();
  return t;
}

Conclusion RunConfig::parsed_conclusion() const {
  return conclusion == "upper<=t" ? Conclusion::upper_at_most
                                  : Conclusion::lower_at_least;
}

int RunConfig::resolved_threads() const {
  if (threads > 0) return threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

Estimand resolve_estimand(const std::string& text, const Sample& sample) {
  const auto at = text.find('@');
  if (at == std::string::npos) return Estimand::parse(text);

  const std::string head = text.substr(0, at);
  const std::string rest = text.substr(at + 1);
  Estimand e;
  std::string row_text = rest;
  if (head == "cqte") {
    const auto colon = rest.find(':');
    if (colon == std::string::npos)
      throw ConfigError("cqte estimand needs 'cqte@<row>:<tau>'");
    row_text = rest.substr(0, colon);
    e.tau = std::stod(rest.substr(colon + 1));
    if (e.tau <= 0.0 || e.tau >= 1.0) throw ConfigError("cqte tau must lie in (0,1)");
    e.kind = Estimand::Kind::cqte;
  } else if (head == "cate") {
    e.kind = Estimand::Kind::cate;
  } else {
    throw ConfigError("unknown estimand '" + text + "'");
  }
  long row = 0;
  try {
    row = std::stol(row_text);
  } catch (const std::exception&) {
    throw ConfigError("bad row index in estimand '" + text + "'");
  }
  if (row < 1 || row > sample.n())
    throw ConfigError("estimand row index out of range in '" + text + "'");
  e.w_row = sample.w.row(row - 1);
  return e;
}

namespace {

ordered_json band_json(const ConfidenceBand& band) {
  ordered_json j;
  j["alpha"] = band.alpha;
  j["lb"] = band.lb;
  j["ub"] = band.ub;
  if (!band.warning.empty()) j["warning"] = band.warning;
  return j;
}

ordered_json curve_json(const BoundCurve& curve) {
  ordered_json j;
  std::vector<double> lo, up;
  for (const auto& p : curve.pairs) {
    lo.push_back(p.lower);
    up.push_back(p.upper);
  }
  j["lower"] = lo;
  j["upper"] = up;
  return j;
}

std::string curve_csv(const BoundCurve& curve, const ConfidenceBand& band) {
  std::string out = "c,lower,upper,lb,ub\n";
  for (Eigen::Index k = 0; k < curve.c_grid.size(); ++k) {
    out += format_double(curve.c_grid[k]) + "," +
           format_double(curve.pairs[static_cast<std::size_t>(k)].lower) + "," +
           format_double(curve.pairs[static_cast<std::size_t>(k)].upper) + "," +
           format_double(band.lb[static_cast<std::size_t>(k)]) + "," +
           format_double(band.ub[static_cast<std::size_t>(k)]) + "\n";
  }
  return out;
}

ordered_json leave_out_json(const LeaveOutReport& rep) {
  ordered_json rows = ordered_json::array();
  for (const auto& r : rep.rows) {
    ordered_json row;
    row["covariate"] = r.covariate;
    row["p50"] = r.delta.p50;
    row["p75"] = r.delta.p75;
    row["p90"] = r.delta.p90;
    row["cbar_k"] = r.delta.cbar_k;
    if (r.delta.has_cbp) row["cdf_at_cbp"] = r.delta.cdf_at_cbp;
    row["loo_ate_change_pct"] = r.ate_change.defined ? ordered_json(r.ate_change.pct)
                                                     : ordered_json(nullptr);
    rows.push_back(row);
  }
  return rows;
}

std::string leave_out_csv(const LeaveOutReport& rep) {
  std::string out = "covariate,p50,p75,p90,cbar_k,cdf_at_cbp,loo_ate_change_pct\n";
  for (const auto& r : rep.rows) {
    out += r.covariate + "," + format_double(r.delta.p50) + "," +
           format_double(r.delta.p75) + "," + format_double(r.delta.p90) + "," +
           format_double(r.delta.cbar_k) + ",";
    out += r.delta.has_cbp ? format_double(r.delta.cdf_at_cbp) : std::string();
    out += ",";
    out += r.ate_change.defined ? format_double(r.ate_change.pct) : std::string("undefined");
    out += "\n";
  }
  return out;
}

ordered_json overlap_json(const OverlapReport& rep) {
  ordered_json j;
  j["min_p"] = rep.min_p;
  j["max_p"] = rep.max_p;
  j["deciles"] = to_std(rep.deciles);
  j["cbar"] = rep.cbar;
  j["flagged_rows"] = rep.flagged;
  return j;
}

struct LoadedData {
  Sample sample;
  std::shared_ptr<DesignMatrices> design;
};

LoadedData load_and_build(const RunConfig& config) {
  LoadedData d;
  d.sample = load_csv(config.input, config.outcome, config.treatment, config.covariates);
  d.design = std::make_shared<DesignMatrices>(
      build_design(d.sample, config.design_spec()));
  return d;
}

}  // namespace

ordered_json cmd_analyze(const RunConfig& raw) {
  RunConfig config = raw;
  if (config.c_grid.size() == 0) config.c_grid = uniform_c_grid(21);
  config.validate();

  LoadedData data = load_and_build(config);
  const Sample& sample = data.sample;
  const TuningParams tuning = config.tuning_for(sample.n());
  const ThetaHat theta = fit_theta(sample, data.design, config.link, tuning);

  std::vector<Estimand> estimands;
  for (const auto& text : config.estimands)
    estimands.push_back(resolve_estimand(text, sample));

  BootstrapConfig bcfg;
  bcfg.draws = config.draws;
  bcfg.seed = config.seed;
  bcfg.mode = config.mode;
  bcfg.alpha = config.alpha;
  bcfg.tuning = tuning;
  bcfg.threads = config.resolved_threads();

  const BootstrapDraws draws =
      run_bootstrap(sample, theta, config.link, bcfg, estimands, config.c_grid);

  const IpwBaseline ipw =
      ipw_baseline(sample, *data.design, config.link, config.ipw_draws, config.seed);
  const OverlapReport overlap = overlap_report(sample, *data.design, theta.prop);

  ordered_json report;
  report["tool"] = "csens 0.1.0";
  report["config"] = config.to_json();
  report["n"] = sample.n();
  report["tuning"] = {{"epsilon", tuning.eps},
                      {"eps_small", tuning.eps_small},
                      {"eta", tuning.eta},
                      {"kappa", tuning.kappa},
                      {"tau_step", tuning.tau_step},
                      {"n_quad", tuning.n_quad}};
  if (!data.design->dropped.empty()) report["dropped_columns"] = data.design->dropped;
  report["baseline_ipw"] = {{"ate", ipw.ate},
                            {"att", ipw.att},
                            {"se_ate", ipw.se_ate},
                            {"se_att", ipw.se_att},
                            {"draws", ipw.draws},
                            {"seed", ipw.seed}};
  report["overlap"] = overlap_json(overlap);

  ordered_json mass;
  mass["c"] = to_std(config.c_grid);
  mass["fraction_near_c"] = to_std(draws.mass_point_fraction);
  std::vector<bool> warn;
  for (Eigen::Index k = 0; k < draws.mass_point_fraction.size(); ++k)
    warn.push_back(draws.mass_point_fraction[k] >= kMassPointWarnFraction);
  mass["warning"] = warn;
  report["propensity_mass_points"] = mass;
  report["rejected_resamples"] = draws.rejected_resamples;

  const std::filesystem::path out_dir(config.out_dir);
  std::filesystem::create_directories(out_dir);

  std::string breakdown_csv = "estimand,conclusion,threshold,c_bp,c_lower\n";
  ordered_json est_json;
  for (std::size_t e = 0; e < estimands.size(); ++e) {
    const BoundCurve curve =
        bound_curve(estimands[e], sample, theta, config.c_grid, config.n_quad);
    const BoundCurve mono = rearrange_monotone(curve);
    const ConfidenceBand pw = pointwise_band(curve, draws.draws[e], config.alpha, sample.n());
    const ConfidenceBand un = uniform_band(mono, draws.draws[e], config.alpha, sample.n());

    const Conclusion conclusion = config.parsed_conclusion();
    const BreakdownResult bp = breakdown_point(mono, conclusion, config.threshold);
    const double c_lower = breakdown_ci(pw, conclusion, config.threshold);

    ordered_json je;
    je["c_grid"] = to_std(config.c_grid);
    je["curve"] = curve_json(curve);
    je["curve_monotone"] = curve_json(mono);
    je["pointwise_band"] = band_json(pw);
    je["uniform_band"] = band_json(un);
    je["breakdown"] = {{"conclusion", config.conclusion},
                       {"threshold", config.threshold},
                       {"c_bp", bp.c_bp},
                       {"c_lower", c_lower}};
    est_json[config.estimands[e]] = je;

    write_text_file(out_dir / ("curve_" + config.estimands[e] + ".csv"),
                    curve_csv(curve, pw));
    breakdown_csv += config.estimands[e] + "," + config.conclusion + "," +
                     format_double(config.threshold) + "," + format_double(bp.c_bp) +
                     "," + format_double(c_lower) + "\n";
  }
  report["estimands"] = est_json;

  const LeaveOutReport loo = leave_out_report(
      sample, config.design_spec(), config.link,
      est_json.contains("ate")
          ? std::optional<double>(est_json["ate"]["breakdown"]["c_bp"].get<double>())
          : std::nullopt);
  report["delta_k"] = leave_out_json(loo);

  write_text_file(out_dir / "deltak.csv", leave_out_csv(loo));
  write_text_file(out_dir / "breakdown.csv", breakdown_csv);
  write_text_file(out_dir / "report.json", report.dump(2) + "\n");
  return report;
}

ordered_json cmd_diagnose(const RunConfig& raw) {
  RunConfig config = raw;
  if (config.c_grid.size() == 0) config.c_grid = uniform_c_grid(21);
  config.validate();

  LoadedData data = load_and_build(config);
  const PropensityFit fit = fit_propensity(*data.design, data.sample.x, config.link);
  const OverlapReport overlap = overlap_report(data.sample, *data.design, fit);
  const LeaveOutReport loo =
      leave_out_report(data.sample, config.design_spec(), config.link);

  ordered_json report;
  report["tool"] = "csens 0.1.0";
  report["n"] = data.sample.n();
  report["overlap"] = overlap_json(overlap);
  report["delta_k"] = leave_out_json(loo);

  const std::filesystem::path out_dir(config.out_dir);
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "deltak.csv", leave_out_csv(loo));
  std::string ocsv = "metric,value\nmin_p," + format_double(overlap.min_p) +
                     "\nmax_p," + format_double(overlap.max_p) + "\ncbar," +
                     format_double(overlap.cbar) + "\nflagged_rows," +
                     std::to_string(overlap.flagged) + "\n";
  for (int d = 1; d <= 9; ++d)
    ocsv += "p" + std::to_string(d * 10) + "," +
            format_double(overlap.deciles[d - 1]) + "\n";
  write_text_file(out_dir / "overlap.csv", ocsv);
  return report;
}

BoundPair cmd_bounds(const RunConfig& raw, const std::string& estimand, double c) {
  RunConfig config = raw;
  if (config.c_grid.size() == 0) config.c_grid = uniform_c_grid(21);
  config.validate();
  if (c < 0.0 || c > 1.0) throw ConfigError("c must lie in [0,1]");

  LoadedData data = load_and_build(config);
  const TuningParams tuning = config.tuning_for(data.sample.n());
  const ThetaHat theta = fit_theta(data.sample, data.design, config.link, tuning);
  const Estimand e = resolve_estimand(estimand, data.sample);
  return estimand_bounds(e, data.sample, theta, c, config.n_quad);
}

ordered_json cmd_simulate(const SimConfig& raw, const std::string& out_dir) {
  SimConfig sim = raw;
  sim.apply_defaults();
  const SimResult res = run_simulation(sim);

  ordered_json report;
  report["tool"] = "csens 0.1.0";
  report["dgp"] = dgp_name(sim.dgp);
  report["n"] = sim.n;
  report["reps"] = res.reps;
  report["draws"] = sim.draws;
  report["alpha"] = sim.alpha;
  report["mode"] = sim.mode == BootstrapMode::hdd ? "hdd" : "standard";
  report["seed"] = sim.seed;
  report["tau_step"] = sim.tau_step;
  report["n_quad"] = sim.n_quad;
  report["c_grid"] = to_std(res.c_grid);
  report["true_lower"] = to_std(res.true_lower);
  report["true_upper"] = to_std(res.true_upper);
  report["eval_c"] = to_std(res.eval_c);
  report["pointwise_coverage"] = to_std(res.pointwise_coverage);
  report["uniform_coverage"] = res.uniform_coverage;
  report["mass_warning_rate"] = to_std(res.mass_warning_rate);

  std::string csv = "c,true_lower,true_upper,mass_warning_rate\n";
  for (Eigen::Index k = 0; k < res.c_grid.size(); ++k)
    csv += format_double(res.c_grid[k]) + "," + format_double(res.true_lower[k]) + "," +
           format_double(res.true_upper[k]) + "," +
           format_double(res.mass_warning_rate[k]) + "\n";
  csv += "\neval_c,pointwise_coverage\n";
  for (Eigen::Index j = 0; j < res.eval_c.size(); ++j)
    csv += format_double(res.eval_c[j]) + "," +
           format_double(res.pointwise_coverage[j]) + "\n";
  csv += "\nuniform_coverage," + format_double(res.uniform_coverage) + "\n";

  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  write_text_file(dir / "coverage.csv", csv);
  write_text_file(dir / "simulation.json", report.dump(2) + "\n");
  return report;
}

}  // namespace csens
