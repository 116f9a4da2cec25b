#include "csens/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "csens/bound_engine.hpp"
#include "csens/inference.hpp"

namespace csens {

namespace {

Eigen::VectorXd fitted_probabilities(const Sample& sample, const DesignMatrices& design,
                                     const PropensityFit& fit) {
  Eigen::VectorXd p(sample.n());
  for (Eigen::Index i = 0; i < sample.n(); ++i)
    p[i] = predict_propensity(fit, design.r_row(sample.w.row(i)), 1);
  return p;
}

}  // namespace

Eigen::VectorXd delta_k(const Sample& sample, const DesignSpec& spec,
                        const DesignMatrices& full_design,
                        const PropensityFit& fit_full, const std::string& covariate,
                        Link link) {
  const DesignSpec loo_spec = spec.without_covariate(covariate);
  if (loo_spec.r_terms.empty())
    throw ConfigError("leave-out design for '" + covariate + "' has no r(w) terms");
  if (loo_spec.r_terms.size() == spec.r_terms.size())
    throw ConfigError("covariate '" + covariate + "' does not appear in the r(w) design");

  const DesignMatrices loo_design = build_design(sample, loo_spec);
  const PropensityFit fit_loo = fit_propensity(loo_design, sample.x, link);

  const Eigen::VectorXd p_full = fitted_probabilities(sample, full_design, fit_full);
  const Eigen::VectorXd p_loo = fitted_probabilities(sample, loo_design, fit_loo);
  return (p_full - p_loo).cwiseAbs();
}

double empirical_quantile(Eigen::VectorXd values, double p) {
  const Eigen::Index n = values.size();
  if (n == 0) throw ConfigError("quantile of empty sample");
  std::sort(values.data(), values.data() + n);
  if (p <= 0.0) return values[0];
  if (p >= 1.0) return values[n - 1];
  const double h = static_cast<double>(n - 1) * p;
  const auto lo = static_cast<Eigen::Index>(std::floor(h));
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= n) return values[n - 1];
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

DeltaSummary delta_quantiles(const Eigen::VectorXd& delta, std::optional<double> c_bp) {
  DeltaSummary s;
  s.p50 = empirical_quantile(delta, 0.50);
  s.p75 = empirical_quantile(delta, 0.75);
  s.p90 = empirical_quantile(delta, 0.90);
  s.cbar_k = delta.maxCoeff();
  if (c_bp) {
    s.has_cbp = true;
    int count = 0;
    for (Eigen::Index i = 0; i < delta.size(); ++i)
      if (delta[i] <= *c_bp) ++count;
    s.cdf_at_cbp = static_cast<double>(count) / static_cast<double>(delta.size());
  }
  return s;
}

DensityEstimate delta_density(const Eigen::VectorXd& delta,
                              std::optional<double> bandwidth) {
  const Eigen::Index n = delta.size();
  if (n < 2) throw ConfigError("density estimate needs at least 2 observations");

  double bw;
  if (bandwidth) {
    bw = *bandwidth;
    if (bw <= 0.0) throw ConfigError("bandwidth must be positive");
  } else {
    const double mean = delta.mean();
    const double sd = std::sqrt((delta.array() - mean).square().sum() /
                                static_cast<double>(n - 1));
    const double iqr =
        empirical_quantile(delta, 0.75) - empirical_quantile(delta, 0.25);
    double spread = sd;
    if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
    if (spread <= 0.0) spread = std::max(1e-4, std::abs(mean) * 1e-3 + 1e-6);
    bw = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  }

  constexpr int kGridPoints = 512;
  const double hi = delta.maxCoeff() + 3.0 * bw;
  DensityEstimate est;
  est.bandwidth = bw;
  est.grid.resize(kGridPoints);
  est.density.resize(kGridPoints);
  const double step = hi / static_cast<double>(kGridPoints - 1);
  const double norm = 1.0 / (bw * std::sqrt(2.0 * M_PI) * static_cast<double>(n));
  for (int g = 0; g < kGridPoints; ++g) {
    const double x = static_cast<double>(g) * step;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z1 = (x - delta[i]) / bw;
      const double z2 = (x + delta[i]) / bw;  // reflection at zero
      acc += std::exp(-0.5 * z1 * z1) + std::exp(-0.5 * z2 * z2);
    }
    est.grid[g] = x;
    est.density[g] = acc * norm;
  }
  return est;
}

IpwPoint ipw_point(const Sample& sample, const DesignMatrices& design,
                   const PropensityFit& fit) {
  const Eigen::VectorXd p = fitted_probabilities(sample, design, fit);
  std::vector<Eigen::Index> bad;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p[i] < 1e-10 || p[i] > 1.0 - 1e-10) bad.push_back(i);
  if (!bad.empty()) {
    std::string rows;
    for (std::size_t j = 0; j < bad.size() && j < 8; ++j)
      rows += (j ? "," : "") + std::to_string(bad[j] + 1);
    throw EstimationError("ipw: fitted propensity numerically at 0/1 for rows " + rows);
  }

  double sw1 = 0.0, swy1 = 0.0, sw0 = 0.0, swy0 = 0.0;
  double sa0 = 0.0, say0 = 0.0, sy1 = 0.0;
  int n1 = 0;
  for (Eigen::Index i = 0; i < sample.n(); ++i) {
    const double y = sample.y[i];
    if (sample.x[i] == 1) {
      const double w = 1.0 / p[i];
      sw1 += w;
      swy1 += w * y;
      sy1 += y;
      ++n1;
    } else {
      const double w = 1.0 / (1.0 - p[i]);
      sw0 += w;
      swy0 += w * y;
      const double a = p[i] / (1.0 - p[i]);
      sa0 += a;
      say0 += a * y;
    }
  }
  if (n1 == 0 || sw0 == 0.0) throw EstimationError("ipw: a treatment arm is empty");
  IpwPoint out;
  out.ate = swy1 / sw1 - swy0 / sw0;
  out.att = sy1 / static_cast<double>(n1) - (sa0 > 0.0 ? say0 / sa0 : 0.0);
  return out;
}

IpwBaseline ipw_baseline(const Sample& sample, const DesignMatrices& design,
                         Link link, int draws, std::uint64_t seed) {
  const PropensityFit fit = fit_propensity(design, sample.x, link);
  const IpwPoint point = ipw_point(sample, design, fit);

  IpwBaseline out;
  out.ate = point.ate;
  out.att = point.att;
  out.draws = draws;
  out.seed = seed;
  if (draws < 2) return out;

  std::vector<double> ates, atts;
  ates.reserve(static_cast<std::size_t>(draws));
  atts.reserve(static_cast<std::size_t>(draws));
  for (int b = 0; b < draws; ++b) {
    SubstreamRng rng(seed, static_cast<std::uint64_t>(b));
    for (int attempt = 0; attempt < 100; ++attempt) {
      const std::vector<int> idx = resample_indices(sample.n(), rng);
      try {
        const Sample star = resample_sample(sample, idx);
        const DesignMatrices dstar = resample_design(design, idx);
        const PropensityFit fstar = fit_propensity(dstar, star.x, link);
        const IpwPoint pt = ipw_point(star, dstar, fstar);
        ates.push_back(pt.ate);
        atts.push_back(pt.att);
        break;
      } catch (const EstimationError&) {
        if (attempt == 99)
          throw EstimationError("ipw bootstrap: 100 consecutive degenerate resamples");
      }
    }
  }
  auto sd = [](const std::vector<double>& v) {
    const double mean =
        pairwise_sum(v) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
  };
  out.se_ate = sd(ates);
  out.se_att = sd(atts);
  return out;
}

LooAteChange loo_ate_change(const Sample& sample, const DesignSpec& spec,
                            const std::string& covariate, Link link) {
  const DesignMatrices full = build_design(sample, spec);
  const PropensityFit fit_full = fit_propensity(full, sample.x, link);
  const double base = ipw_point(sample, full, fit_full).ate;

  const DesignSpec loo_spec = spec.without_covariate(covariate);
  const DesignMatrices loo = build_design(sample, loo_spec);
  const PropensityFit fit_loo = fit_propensity(loo, sample.x, link);
  const double reduced = ipw_point(sample, loo, fit_loo).ate;

  LooAteChange out;
  if (std::abs(base) <= 1e-12) {
    out.defined = false;
    out.pct = 0.0;
    return out;
  }
  out.pct = std::abs((base - reduced) / base) * 100.0;
  return out;
}

OverlapReport overlap_report(const Sample& sample, const DesignMatrices& design,
                             const PropensityFit& fit) {
  const Eigen::VectorXd p = fitted_probabilities(sample, design, fit);
  OverlapReport rep;
  rep.min_p = p.minCoeff();
  rep.max_p = p.maxCoeff();
  rep.deciles.resize(9);
  for (int d = 1; d <= 9; ++d)
    rep.deciles[d - 1] = empirical_quantile(p, static_cast<double>(d) / 10.0);
  rep.cbar = std::max(rep.max_p, 1.0 - rep.min_p);
  rep.flagged = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p[i] < 0.01 || p[i] > 0.99) ++rep.flagged;
  return rep;
}

LeaveOutReport leave_out_report(const Sample& sample, const DesignSpec& spec,
                                Link link, std::optional<double> c_bp) {
  const DesignMatrices full = build_design(sample, spec);
  const PropensityFit fit_full = fit_propensity(full, sample.x, link);

  LeaveOutReport report;
  for (const auto& name : sample.names) {
    const bool referenced =
        std::any_of(spec.r_terms.begin(), spec.r_terms.end(),
                    [&](const Term& t) { return t.references(name); });
    if (!referenced) continue;
    LeaveOutRow row;
    row.covariate = name;
    row.delta = delta_quantiles(delta_k(sample, spec, full, fit_full, name, link), c_bp);
    row.ate_change = loo_ate_change(sample, spec, name, link);
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace csens
