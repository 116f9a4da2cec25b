#include "csens/inference.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>

#include "csens/parallel.hpp"

namespace csens {

void BootstrapConfig::validate() const {
  if (draws < 1) throw ConfigError("bootstrap draws must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  tuning.validate();
}

double ConfidenceBand::lb_at(double c) const {
  const Eigen::Index k = c_grid.size();
  if (kind == Kind::uniform_interpolated) {
    for (Eigen::Index j = 0; j < k; ++j)
      if (c <= c_grid[j] + 1e-15) return lb[static_cast<std::size_t>(j)];
    return lb.back();
  }
  if (c <= c_grid[0]) return lb.front();
  if (c >= c_grid[k - 1]) return lb.back();
  Eigen::Index j = 0;
  while (j + 1 < k && c_grid[j + 1] < c) ++j;
  const double f = (c - c_grid[j]) / (c_grid[j + 1] - c_grid[j]);
  return (1.0 - f) * lb[static_cast<std::size_t>(j)] +
         f * lb[static_cast<std::size_t>(j + 1)];
}

double ConfidenceBand::ub_at(double c) const {
  const Eigen::Index k = c_grid.size();
  if (kind == Kind::uniform_interpolated) {
    for (Eigen::Index j = 0; j < k; ++j)
      if (c <= c_grid[j] + 1e-15) return ub[static_cast<std::size_t>(j)];
    return ub.back();
  }
  if (c <= c_grid[0]) return ub.front();
  if (c >= c_grid[k - 1]) return ub.back();
  Eigen::Index j = 0;
  while (j + 1 < k && c_grid[j + 1] < c) ++j;
  const double f = (c - c_grid[j]) / (c_grid[j + 1] - c_grid[j]);
  return (1.0 - f) * ub[static_cast<std::size_t>(j)] +
         f * ub[static_cast<std::size_t>(j + 1)];
}

std::vector<int> resample_indices(Eigen::Index n, SubstreamRng& rng) {
  if (n < 1) throw ConfigError("resample size must be >= 1");
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (auto& i : idx)
    i = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n)));
  return idx;
}

Sample resample_sample(const Sample& sample, const std::vector<int>& indices) {
  Sample out;
  const Eigen::Index m = static_cast<Eigen::Index>(indices.size());
  out.y.resize(m);
  out.x.resize(m);
  out.w.resize(m, sample.w.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    const int j = indices[static_cast<std::size_t>(i)];
    out.y[i] = sample.y[j];
    out.x[i] = sample.x[j];
    out.w.row(i) = sample.w.row(j);
  }
  out.names = sample.names;
  return out;
}

DesignMatrices resample_design(const DesignMatrices& design,
                               const std::vector<int>& indices) {
  DesignMatrices out;
  const Eigen::Index m = static_cast<Eigen::Index>(indices.size());
  out.qmat.resize(m, design.qmat.cols());
  out.rmat.resize(m, design.rmat.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    const int j = indices[static_cast<std::size_t>(i)];
    out.qmat.row(i) = design.qmat.row(j);
    out.rmat.row(i) = design.rmat.row(j);
  }
  out.q_terms = design.q_terms;
  out.r_terms = design.r_terms;
  out.cov_names = design.cov_names;
  return out;
}

namespace {

bool full_column_rank(const Eigen::MatrixXd& m) {
  const Eigen::Index d = m.cols();
  Eigen::MatrixXd ortho(m.rows(), d);
  double lead = -1.0;
  Eigen::Index kept = 0;
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::VectorXd col = m.col(j);
    for (Eigen::Index k = 0; k < kept; ++k) col -= ortho.col(k).dot(m.col(j)) * ortho.col(k);
    const double pivot = col.squaredNorm();
    if (lead < 0.0) {
      if (pivot <= 0.0) return false;
      lead = pivot;
    } else if (pivot < 1e-10 * lead) {
      return false;
    }
    ortho.col(kept++) = col / std::sqrt(pivot);
  }
  return true;
}

}  // namespace

ThetaHat bootstrap_theta(const Sample& sample, const DesignMatrices& design,
                         const std::vector<int>& indices, Link link,
                         const TuningParams& tuning) {
  const Sample star = resample_sample(sample, indices);
  const int treated = star.x.sum();
  if (treated == 0 || treated == static_cast<int>(star.n()))
    throw EstimationError("degenerate resample: single treatment arm");
  auto star_design = std::make_shared<DesignMatrices>(resample_design(design, indices));
  if (!full_column_rank(star_design->qmat) || !full_column_rank(star_design->rmat))
    throw EstimationError("degenerate resample: rank-deficient design");
  return fit_theta(star, star_design, link, tuning);
}

Direction bootstrap_direction(const ThetaHat& theta, const ThetaHat& theta_star,
                              Eigen::Index n) {
  if (theta.qr.gamma.rows() != theta_star.qr.gamma.rows() ||
      theta.qr.gamma.cols() != theta_star.qr.gamma.cols())
    throw ConfigError("bootstrap refit used a different quantile grid");
  const double rn = std::sqrt(static_cast<double>(n));
  Direction dir;
  dir.h1 = rn * (theta_star.prop.beta - theta.prop.beta);
  dir.h2 = rn * (theta_star.qr.gamma - theta.qr.gamma);
  return dir;
}

namespace {

// Per-row Gamma_2 integrals at theta-hat for one arm and one c.
struct RowIntegrals {
  std::vector<double> up, lo;
};

RowIntegrals row_gamma2(const Sample& sample, const ThetaHat& theta, int x, double c,
                        int n_quad) {
  const auto cache = detail::make_sample_arm_cache(sample, theta, x);
  RowIntegrals out;
  const std::size_t n = cache.rows.size();
  out.up.resize(n);
  out.lo.resize(n);
  std::vector<double> buf;
  for (std::size_t i = 0; i < n; ++i) {
    out.up[i] = detail::integral_upper(theta.qr, cache.rows[i], c, theta.eps, n_quad, buf);
    out.lo[i] = detail::integral_lower(theta.qr, cache.rows[i], c, theta.eps, n_quad, buf);
  }
  return out;
}

double resample_mean(const std::vector<double>& values, const std::vector<int>& indices,
                     std::vector<double>& buf) {
  buf.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i)
    buf[i] = values[static_cast<std::size_t>(indices[i])];
  return pairwise_sum(buf) / static_cast<double>(indices.size());
}

double gstar(const std::vector<double>& values, const std::vector<int>& indices,
             std::vector<double>& buf) {
  const double rn = std::sqrt(static_cast<double>(values.size()));
  const double mean_orig = pairwise_sum(values) / static_cast<double>(values.size());
  return rn * (resample_mean(values, indices, buf) - mean_orig);
}

struct AttStats {
  double p1 = 0.0, p0 = 0.0, mean_y1 = 0.0, mean_y0 = 0.0;
  std::vector<double> y_x1, y_x0, ind_x1, ind_x0;  // per-row g vectors
};

AttStats att_stats(const Sample& sample) {
  AttStats s;
  const std::size_t n = static_cast<std::size_t>(sample.n());
  s.y_x1.resize(n);
  s.y_x0.resize(n);
  s.ind_x1.resize(n);
  s.ind_x0.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool t = sample.x[static_cast<Eigen::Index>(i)] == 1;
    const double y = sample.y[static_cast<Eigen::Index>(i)];
    s.y_x1[i] = t ? y : 0.0;
    s.y_x0[i] = t ? 0.0 : y;
    s.ind_x1[i] = t ? 1.0 : 0.0;
    s.ind_x0[i] = t ? 0.0 : 1.0;
  }
  const double n1 = pairwise_sum(s.ind_x1);
  if (n1 == 0.0) throw EstimationError("att: no treated units");
  s.p1 = n1 / static_cast<double>(n);
  s.p0 = 1.0 - s.p1;
  s.mean_y1 = pairwise_sum(s.y_x1) / n1;
  const double n0 = static_cast<double>(n) - n1;
  s.mean_y0 = n0 == 0.0 ? 0.0 : pairwise_sum(s.y_x0) / n0;
  return s;
}

}  // namespace

BoundPair ep_component(int x, const Sample& sample, const ThetaHat& theta,
                       const std::vector<int>& indices, double c, int n_quad) {
  const RowIntegrals g2 = row_gamma2(sample, theta, x, c, n_quad);
  std::vector<double> buf;
  BoundPair out;
  out.upper = gstar(g2.up, indices, buf);
  out.lower = gstar(g2.lo, indices, buf);
  return out;
}

BoundPair mean_bound_draw(int x, const Sample& sample, const ThetaHat& theta,
                          const ThetaHat& theta_star, const std::vector<int>& indices,
                          double c, const TuningParams& tuning) {
  const Direction dir = bootstrap_direction(theta, theta_star, sample.n());
  const HddValue g3 = gamma3_hdd(x, sample, theta, dir, tuning, c);
  const BoundPair ep = ep_component(x, sample, theta, indices, c, tuning.n_quad);
  return BoundPair{g3.lower + ep.lower, g3.upper + ep.upper};
}

BoundPair ate_draw(const Sample& sample, const ThetaHat& theta,
                   const ThetaHat& theta_star, const std::vector<int>& indices,
                   double c, const TuningParams& tuning) {
  const BoundPair m1 = mean_bound_draw(1, sample, theta, theta_star, indices, c, tuning);
  const BoundPair m0 = mean_bound_draw(0, sample, theta, theta_star, indices, c, tuning);
  return BoundPair{m1.lower - m0.upper, m1.upper - m0.lower};
}

BoundPair att_draw(const Sample& sample, const ThetaHat& theta,
                   const ThetaHat& theta_star, const std::vector<int>& indices,
                   double c, const TuningParams& tuning) {
  const AttStats s = att_stats(sample);
  std::vector<double> buf;
  const double z_p1 = gstar(s.ind_x1, indices, buf);
  const double z_p0 = gstar(s.ind_x0, indices, buf);
  const double z_e1 = (gstar(s.y_x1, indices, buf) - s.mean_y1 * z_p1) / s.p1;
  const double z_e0 =
      s.p0 > 0.0 ? (gstar(s.y_x0, indices, buf) - s.mean_y0 * z_p0) / s.p0 : 0.0;

  const BoundPair m0 = mean_bound_draw(0, sample, theta, theta_star, indices, c, tuning);
  const BoundPair e0 = mean_bounds(0, sample, theta, c, tuning.n_quad);

  const double common = z_e1 + (s.p0 / s.p1) * z_e0 + (s.mean_y0 / s.p1) * z_p0;
  BoundPair out;
  out.upper = common - m0.lower / s.p1 +
              (e0.lower - s.mean_y0 * s.p0) / (s.p1 * s.p1) * z_p1;
  out.lower = common - m0.upper / s.p1 +
              (e0.upper - s.mean_y0 * s.p0) / (s.p1 * s.p1) * z_p1;
  return out;
}

BoundPair cqte_draw(const Eigen::Ref<const Eigen::RowVectorXd>& w_row, double tau,
                    const ThetaHat& theta, const ThetaHat& theta_star, Eigen::Index n,
                    double c, const TuningParams& tuning) {
  const Direction dir = bootstrap_direction(theta, theta_star, n);
  const HddValue g1 = gamma1_hdd(1, w_row, tau, theta, dir, tuning, c);
  const HddValue g0 = gamma1_hdd(0, w_row, tau, theta, dir, tuning, c);
  return BoundPair{g1.lower - g0.upper, g1.upper - g0.lower};
}

BoundPair cate_draw(const Eigen::Ref<const Eigen::RowVectorXd>& w_row,
                    const ThetaHat& theta, const ThetaHat& theta_star, Eigen::Index n,
                    double c, const TuningParams& tuning) {
  const Direction dir = bootstrap_direction(theta, theta_star, n);
  const HddValue g1 = gamma2_hdd(1, w_row, theta, dir, tuning, c);
  const HddValue g0 = gamma2_hdd(0, w_row, theta, dir, tuning, c);
  return BoundPair{g1.lower - g0.upper, g1.upper - g0.lower};
}

double critical_value(const std::vector<BoundPair>& draws_at_c, double alpha) {
  const std::size_t b = draws_at_c.size();
  if (b < 20) throw ConfigError("critical_value requires at least 20 draws");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  std::vector<double> m(b);
  for (std::size_t i = 0; i < b; ++i)
    m[i] = std::max(draws_at_c[i].lower, -draws_at_c[i].upper);
  std::sort(m.begin(), m.end());
  const auto rank = static_cast<std::size_t>(
      std::ceil((1.0 - alpha) * static_cast<double>(b)));
  return m[std::clamp<std::size_t>(rank, 1, b) - 1];
}

ConfidenceBand pointwise_band(const BoundCurve& curve,
                              const std::vector<std::vector<BoundPair>>& draws,
                              double alpha, Eigen::Index n) {
  if (draws.size() != curve.pairs.size())
    throw ConfigError("pointwise_band: draw grid does not match curve grid");
  ConfidenceBand band;
  band.kind = ConfidenceBand::Kind::pointwise;
  band.alpha = alpha;
  band.c_grid = curve.c_grid;
  const double rn = std::sqrt(static_cast<double>(n));
  for (std::size_t k = 0; k < curve.pairs.size(); ++k) {
    const double d = critical_value(draws[k], alpha);
    band.lb.push_back(curve.pairs[k].lower - d / rn);
    band.ub.push_back(curve.pairs[k].upper + d / rn);
  }
  return band;
}

ConfidenceBand uniform_band(const BoundCurve& curve,
                            const std::vector<std::vector<BoundPair>>& draws,
                            double alpha, Eigen::Index n) {
  const std::size_t kk = curve.pairs.size();
  if (draws.size() != kk)
    throw ConfigError("uniform_band: draw grid does not match curve grid");
  const std::size_t b = draws.empty() ? 0 : draws[0].size();
  if (b < 20) throw ConfigError("uniform_band requires at least 20 draws");

  // Studentized sup-t critical values over the grid.
  std::vector<std::vector<double>> m(kk, std::vector<double>(b));
  std::vector<double> sigma(kk);
  for (std::size_t k = 0; k < kk; ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      m[k][i] = std::max(draws[k][i].lower, -draws[k][i].upper);
      mean += m[k][i];
    }
    mean /= static_cast<double>(b);
    double ss = 0.0;
    for (std::size_t i = 0; i < b; ++i) ss += (m[k][i] - mean) * (m[k][i] - mean);
    sigma[k] = std::max(std::sqrt(ss / static_cast<double>(b - 1)), 1e-12);
  }
  std::vector<double> sup(b);
  for (std::size_t i = 0; i < b; ++i) {
    double v = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < kk; ++k) v = std::max(v, m[k][i] / sigma[k]);
    sup[i] = v;
  }
  std::sort(sup.begin(), sup.end());
  const auto rank = static_cast<std::size_t>(
      std::ceil((1.0 - alpha) * static_cast<double>(b)));
  const double tstar = sup[std::clamp<std::size_t>(rank, 1, b) - 1];

  ConfidenceBand band;
  band.kind = ConfidenceBand::Kind::uniform_interpolated;
  band.alpha = alpha;
  band.c_grid = curve.c_grid;
  const double rn = std::sqrt(static_cast<double>(n));
  for (std::size_t k = 0; k < kk; ++k) {
    band.lb.push_back(curve.pairs[k].lower - tstar * sigma[k] / rn);
    band.ub.push_back(curve.pairs[k].upper + tstar * sigma[k] / rn);
  }
  // Monotone step envelope: running extrema keep coverage and make the
  // interpolated band nondecreasing (ub) / nonincreasing (lb) in c.
  for (std::size_t k = 1; k < kk; ++k) {
    band.ub[k] = std::max(band.ub[k], band.ub[k - 1]);
    band.lb[k] = std::min(band.lb[k], band.lb[k - 1]);
  }
  if (curve.c_grid.size() > 0 &&
      (curve.c_grid[0] > 1e-12 || curve.c_grid[curve.c_grid.size() - 1] < 1.0 - 1e-12))
    band.warning = "c grid omits an endpoint of [0,1]; uniform band extrapolates";
  return band;
}

double breakdown_ci(const ConfidenceBand& band, Conclusion conclusion,
                    double threshold) {
  const Eigen::Index k = band.c_grid.size();
  if (k == 0) throw ConfigError("breakdown_ci: empty band");
  auto edge = [&](Eigen::Index j) {
    return conclusion == Conclusion::lower_at_least ? band.lb[static_cast<std::size_t>(j)]
                                                    : band.ub[static_cast<std::size_t>(j)];
  };
  auto holds = [&](Eigen::Index j) {
    return conclusion == Conclusion::lower_at_least ? edge(j) >= threshold
                                                    : edge(j) <= threshold;
  };
  if (!holds(0)) return 0.0;
  Eigen::Index last_ok = 0;
  while (last_ok + 1 < k && holds(last_ok + 1)) ++last_ok;
  if (last_ok + 1 == k) return 1.0;
  const double c0 = band.c_grid[last_ok], c1 = band.c_grid[last_ok + 1];
  const double e0 = edge(last_ok), e1 = edge(last_ok + 1);
  if (std::abs(e1 - e0) < 1e-300) return c0;
  return std::clamp(c0 + (threshold - e0) / (e1 - e0) * (c1 - c0), c0, c1);
}

Eigen::VectorXd mass_point_report(const Sample& sample, const ThetaHat& theta,
                                  const Eigen::VectorXd& c_grid, double kappa) {
  const Eigen::Index n = sample.n();
  Eigen::VectorXd p_hat(n);
  for (Eigen::Index i = 0; i < n; ++i)
    p_hat[i] =
        predict_propensity(theta.prop, theta.design->r_row(sample.w.row(i)), 1);
  Eigen::VectorXd frac(c_grid.size());
  for (Eigen::Index k = 0; k < c_grid.size(); ++k) {
    const double c = c_grid[k];
    int count = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::abs(p_hat[i] - c) <= kappa || std::abs(p_hat[i] - (1.0 - c)) <= kappa)
        ++count;
    frac[k] = static_cast<double>(count) / static_cast<double>(n);
  }
  return frac;
}

namespace {

// Draw a non-degenerate resample and refit; counts rejected attempts.
ThetaHat draw_theta_star(const Sample& sample, const DesignMatrices& design, Link link,
                         const TuningParams& tuning, SubstreamRng& rng,
                         std::vector<int>& indices, std::atomic<int>& rejected) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    indices = resample_indices(sample.n(), rng);
    try {
      return bootstrap_theta(sample, design, indices, link, tuning);
    } catch (const EstimationError&) {
      rejected.fetch_add(1);
    }
  }
  throw EstimationError("bootstrap: more than 100 consecutive degenerate resamples");
}

}  // namespace

BootstrapDraws run_bootstrap(const Sample& sample, const ThetaHat& theta, Link link,
                             const BootstrapConfig& config,
                             const std::vector<Estimand>& estimands,
                             const Eigen::VectorXd& c_grid) {
  config.validate();
  if (estimands.empty()) throw ConfigError("run_bootstrap: no estimands requested");
  if (config.mode == BootstrapMode::standard)
    return standard_bootstrap(sample, theta, link, config, estimands, c_grid);

  const Eigen::Index n = sample.n();
  const Eigen::Index kk = c_grid.size();
  const int nb = config.draws;
  const int n_quad = config.tuning.n_quad;

  BootstrapDraws out;
  out.mode = BootstrapMode::hdd;
  out.c_grid = c_grid;
  out.estimands = estimands;
  out.draws.assign(estimands.size(),
                   std::vector<std::vector<BoundPair>>(
                       static_cast<std::size_t>(kk),
                       std::vector<BoundPair>(static_cast<std::size_t>(nb))));
  out.mass_point_fraction = mass_point_report(sample, theta, c_grid, config.tuning.kappa);

  bool need_mean[2] = {false, false};
  bool need_att = false;
  for (const auto& e : estimands) {
    switch (e.kind) {
      case Estimand::Kind::ate: need_mean[0] = need_mean[1] = true; break;
      case Estimand::Kind::att: need_mean[0] = true; need_att = true; break;
      case Estimand::Kind::e_mean: need_mean[e.arm] = true; break;
      default: break;  // conditional estimands use their own row caches
    }
  }

  // Draw-independent state.
  struct ArmStatic {
    std::vector<detail::HddRowCache> rows;
    // per c: per-row Gamma_2 integrals at theta-hat (for the EP component)
    std::vector<RowIntegrals> g2;
  };
  ArmStatic arm[2];
  for (int x = 0; x < 2; ++x) {
    if (!need_mean[x]) continue;
    arm[x].rows.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      arm[x].rows.push_back(detail::make_hdd_row_cache(theta, x, sample.w.row(i)));
    arm[x].g2.resize(static_cast<std::size_t>(kk));
    std::vector<double> buf;
    for (Eigen::Index k = 0; k < kk; ++k) {
      auto& g2 = arm[x].g2[static_cast<std::size_t>(k)];
      g2.up.resize(static_cast<std::size_t>(n));
      g2.lo.resize(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& rc = arm[x].rows[static_cast<std::size_t>(i)];
        const ArmRowCache ac{rc.L, rc.gq};
        g2.up[static_cast<std::size_t>(i)] =
            detail::integral_upper(theta.qr, ac, c_grid[k], theta.eps, n_quad, buf);
        g2.lo[static_cast<std::size_t>(i)] =
            detail::integral_lower(theta.qr, ac, c_grid[k], theta.eps, n_quad, buf);
      }
    }
  }

  AttStats att;
  std::vector<double> e0_lo(static_cast<std::size_t>(kk)), e0_up(static_cast<std::size_t>(kk));
  if (need_att) {
    att = att_stats(sample);
    for (Eigen::Index k = 0; k < kk; ++k) {
      const auto& g2 = arm[0].g2[static_cast<std::size_t>(k)];
      e0_lo[static_cast<std::size_t>(k)] = pairwise_sum(g2.lo) / static_cast<double>(n);
      e0_up[static_cast<std::size_t>(k)] = pairwise_sum(g2.up) / static_cast<double>(n);
    }
  }

  // Conditional-estimand row caches.
  struct CondStatic {
    detail::HddRowCache row1, row0;
  };
  std::vector<CondStatic> cond(estimands.size());
  for (std::size_t e = 0; e < estimands.size(); ++e) {
    const auto& est = estimands[e];
    if (est.kind == Estimand::Kind::cate || est.kind == Estimand::Kind::cqte) {
      cond[e].row1 = detail::make_hdd_row_cache(theta, 1, est.w_row);
      cond[e].row0 = detail::make_hdd_row_cache(theta, 0, est.w_row);
    }
  }

  std::atomic<int> rejected{0};
  const double eps = theta.eps;
  const double eta = config.tuning.eta, kap = config.tuning.kappa;

  auto work = [&](int b) {
    SubstreamRng rng(config.seed, static_cast<std::uint64_t>(b));
    std::vector<int> indices;
    const ThetaHat theta_star =
        draw_theta_star(sample, *theta.design, link, config.tuning, rng, indices, rejected);
    const Direction dir = bootstrap_direction(theta, theta_star, n);

    // hdd3[x][k] and ep[x][k] for the mean-level estimands
    std::vector<double> bu, bl, buf;
    std::array<std::vector<HddValue>, 2> hdd3;
    std::array<std::vector<BoundPair>, 2> ep;
    for (int x = 0; x < 2; ++x) {
      if (!need_mean[x]) continue;
      hdd3[static_cast<std::size_t>(x)].resize(static_cast<std::size_t>(kk));
      ep[static_cast<std::size_t>(x)].resize(static_cast<std::size_t>(kk));
      // per-row hq tables for this draw
      Eigen::MatrixXd hq(theta.qr.gamma.rows(), n);
      Eigen::VectorXd rho(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& rc = arm[x].rows[static_cast<std::size_t>(i)];
        hq.col(i) = dir.h2 * rc.q;
        rho[i] = rc.ratio_scalar * rc.r.dot(dir.h1);
      }
      std::vector<double> up(static_cast<std::size_t>(n)), lo(static_cast<std::size_t>(n));
      for (Eigen::Index k = 0; k < kk; ++k) {
        const double c = c_grid[k];
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto& rc = arm[x].rows[static_cast<std::size_t>(i)];
          const HddValue v =
              detail::gamma2_kernel(theta.qr, eps, eta, kap, c, n_quad, rc.L, rho[i],
                                    rc.gq, hq.col(i), bu, bl);
          up[static_cast<std::size_t>(i)] = v.upper;
          lo[static_cast<std::size_t>(i)] = v.lower;
        }
        HddValue g3;
        g3.upper = pairwise_sum(up) / static_cast<double>(n);
        g3.lower = pairwise_sum(lo) / static_cast<double>(n);
        hdd3[static_cast<std::size_t>(x)][static_cast<std::size_t>(k)] = g3;

        const auto& g2 = arm[x].g2[static_cast<std::size_t>(k)];
        BoundPair e;
        e.upper = gstar(g2.up, indices, buf);
        e.lower = gstar(g2.lo, indices, buf);
        ep[static_cast<std::size_t>(x)][static_cast<std::size_t>(k)] = e;
      }
    }

    double z_p1 = 0.0, z_p0 = 0.0, z_e1 = 0.0, z_e0 = 0.0;
    if (need_att) {
      z_p1 = gstar(att.ind_x1, indices, buf);
      z_p0 = gstar(att.ind_x0, indices, buf);
      z_e1 = (gstar(att.y_x1, indices, buf) - att.mean_y1 * z_p1) / att.p1;
      z_e0 = att.p0 > 0.0
                 ? (gstar(att.y_x0, indices, buf) - att.mean_y0 * z_p0) / att.p0
                 : 0.0;
    }

    for (std::size_t e = 0; e < estimands.size(); ++e) {
      const auto& est = estimands[e];
      for (Eigen::Index k = 0; k < kk; ++k) {
        const double c = c_grid[k];
        BoundPair pair;
        switch (est.kind) {
          case Estimand::Kind::ate: {
            const auto& m1 = hdd3[1][static_cast<std::size_t>(k)];
            const auto& m0 = hdd3[0][static_cast<std::size_t>(k)];
            const auto& e1 = ep[1][static_cast<std::size_t>(k)];
            const auto& e0 = ep[0][static_cast<std::size_t>(k)];
            pair.upper = (m1.upper + e1.upper) - (m0.lower + e0.lower);
            pair.lower = (m1.lower + e1.lower) - (m0.upper + e0.upper);
            break;
          }
          case Estimand::Kind::att: {
            const auto& m0 = hdd3[0][static_cast<std::size_t>(k)];
            const auto& e0 = ep[0][static_cast<std::size_t>(k)];
            const double lo0 = m0.lower + e0.lower;
            const double up0 = m0.upper + e0.upper;
            const double common =
                z_e1 + (att.p0 / att.p1) * z_e0 + (att.mean_y0 / att.p1) * z_p0;
            pair.upper = common - lo0 / att.p1 +
                         (e0_lo[static_cast<std::size_t>(k)] - att.mean_y0 * att.p0) /
                             (att.p1 * att.p1) * z_p1;
            pair.lower = common - up0 / att.p1 +
                         (e0_up[static_cast<std::size_t>(k)] - att.mean_y0 * att.p0) /
                             (att.p1 * att.p1) * z_p1;
            break;
          }
          case Estimand::Kind::e_mean: {
            const auto& m = hdd3[static_cast<std::size_t>(est.arm)][static_cast<std::size_t>(k)];
            const auto& epc = ep[static_cast<std::size_t>(est.arm)][static_cast<std::size_t>(k)];
            pair.upper = m.upper + epc.upper;
            pair.lower = m.lower + epc.lower;
            break;
          }
          case Estimand::Kind::cate: {
            const auto& cs = cond[e];
            const double rho1 = cs.row1.ratio_scalar * cs.row1.r.dot(dir.h1);
            const double rho0 = cs.row0.ratio_scalar * cs.row0.r.dot(dir.h1);
            const Eigen::VectorXd hq1 = dir.h2 * cs.row1.q;
            const Eigen::VectorXd hq0 = dir.h2 * cs.row0.q;
            const HddValue g1 = detail::gamma2_kernel(theta.qr, eps, eta, kap, c, n_quad,
                                                      cs.row1.L, rho1, cs.row1.gq, hq1, bu, bl);
            const HddValue g0 = detail::gamma2_kernel(theta.qr, eps, eta, kap, c, n_quad,
                                                      cs.row0.L, rho0, cs.row0.gq, hq0, bu, bl);
            pair.upper = g1.upper - g0.lower;
            pair.lower = g1.lower - g0.upper;
            break;
          }
          case Estimand::Kind::cqte: {
            const auto& cs = cond[e];
            const double rho1 = cs.row1.ratio_scalar * cs.row1.r.dot(dir.h1);
            const double rho0 = cs.row0.ratio_scalar * cs.row0.r.dot(dir.h1);
            const Eigen::VectorXd hq1 = dir.h2 * cs.row1.q;
            const Eigen::VectorXd hq0 = dir.h2 * cs.row0.q;
            const HddValue g1 = detail::gamma1_kernel(theta.qr, eps, eta, kap, c, est.tau,
                                                      cs.row1.L, rho1, cs.row1.gq, hq1);
            const HddValue g0 = detail::gamma1_kernel(theta.qr, eps, eta, kap, c, est.tau,
                                                      cs.row0.L, rho0, cs.row0.gq, hq0);
            pair.upper = g1.upper - g0.lower;
            pair.lower = g1.lower - g0.upper;
            break;
          }
        }
        out.draws[e][static_cast<std::size_t>(k)][static_cast<std::size_t>(b)] = pair;
      }
    }
  };

  parallel_for(nb, config.threads, work);
  out.rejected_resamples = rejected.load();
  return out;
}

BootstrapDraws standard_bootstrap(const Sample& sample, const ThetaHat& theta,
                                  Link link, const BootstrapConfig& config,
                                  const std::vector<Estimand>& estimands,
                                  const Eigen::VectorXd& c_grid) {
  config.validate();
  const Eigen::Index n = sample.n();
  const Eigen::Index kk = c_grid.size();
  const int nb = config.draws;
  const int n_quad = config.tuning.n_quad;
  const double rn = std::sqrt(static_cast<double>(n));

  BootstrapDraws out;
  out.mode = BootstrapMode::standard;
  out.c_grid = c_grid;
  out.estimands = estimands;
  out.draws.assign(estimands.size(),
                   std::vector<std::vector<BoundPair>>(
                       static_cast<std::size_t>(kk),
                       std::vector<BoundPair>(static_cast<std::size_t>(nb))));
  out.mass_point_fraction = mass_point_report(sample, theta, c_grid, config.tuning.kappa);

  // Original bound estimates per (estimand, c).
  std::vector<BoundCurve> base;
  base.reserve(estimands.size());
  for (const auto& e : estimands)
    base.push_back(bound_curve(e, sample, theta, c_grid, n_quad));

  std::atomic<int> rejected{0};
  auto work = [&](int b) {
    SubstreamRng rng(config.seed, static_cast<std::uint64_t>(b));
    std::vector<int> indices;
    const ThetaHat theta_star =
        draw_theta_star(sample, *theta.design, link, config.tuning, rng, indices, rejected);
    const Sample star = resample_sample(sample, indices);
    for (std::size_t e = 0; e < estimands.size(); ++e) {
      const BoundCurve curve_star =
          bound_curve(estimands[e], star, theta_star, c_grid, n_quad);
      for (Eigen::Index k = 0; k < kk; ++k) {
        BoundPair pair;
        pair.lower = rn * (curve_star.pairs[static_cast<std::size_t>(k)].lower -
                           base[e].pairs[static_cast<std::size_t>(k)].lower);
        pair.upper = rn * (curve_star.pairs[static_cast<std::size_t>(k)].upper -
                           base[e].pairs[static_cast<std::size_t>(k)].upper);
        out.draws[e][static_cast<std::size_t>(k)][static_cast<std::size_t>(b)] = pair;
      }
    }
  };

  parallel_for(nb, config.threads, work);
  out.rejected_resamples = rejected.load();
  return out;
}

}  // namespace csens
