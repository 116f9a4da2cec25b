#include "csens/bound_engine.hpp"

#include <algorithm>
#include <cmath>

namespace csens {

std::string Estimand::label() const {
  switch (kind) {
    case Kind::ate: return "ate";
    case Kind::att: return "att";
    case Kind::e_mean: return arm == 1 ? "e1" : "e0";
    case Kind::cate: return "cate";
    case Kind::cqte: return "cqte";
  }
  return "?";
}

Estimand Estimand::parse(const std::string& text) {
  Estimand e;
  if (text == "ate") e.kind = Kind::ate;
  else if (text == "att") e.kind = Kind::att;
  else if (text == "e0") { e.kind = Kind::e_mean; e.arm = 0; }
  else if (text == "e1") { e.kind = Kind::e_mean; e.arm = 1; }
  else if (text == "cate") e.kind = Kind::cate;
  else if (text == "cqte") e.kind = Kind::cqte;
  else throw ConfigError("unknown estimand '" + text + "'");
  return e;
}

double pairwise_sum(const double* v, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

ArmRowCache make_arm_row_cache(const ThetaHat& theta, int x,
                               const Eigen::Ref<const Eigen::RowVectorXd>& w_row) {
  ArmRowCache cache;
  const Eigen::VectorXd q = theta.design->q_row(x, w_row);
  const Eigen::VectorXd r = theta.design->r_row(w_row);
  cache.p = predict_propensity(theta.prop, r, x);
  cache.gq = theta.qr.gamma * q;
  return cache;
}

namespace detail {

SampleArmCache make_sample_arm_cache(const Sample& sample, const ThetaHat& theta, int x) {
  SampleArmCache cache;
  cache.rows.reserve(static_cast<std::size_t>(sample.n()));
  for (Eigen::Index i = 0; i < sample.n(); ++i)
    cache.rows.push_back(make_arm_row_cache(theta, x, sample.w.row(i)));
  return cache;
}

BoundPair mean_bounds_cached(const SampleArmCache& cache, const ThetaHat& theta,
                             double c, int n_quad) {
  const std::size_t n = cache.rows.size();
  std::vector<double> lo(n), up(n), buf;
  for (std::size_t i = 0; i < n; ++i) {
    up[i] = integral_upper(theta.qr, cache.rows[i], c, theta.eps, n_quad, buf);
    lo[i] = integral_lower(theta.qr, cache.rows[i], c, theta.eps, n_quad, buf);
  }
  BoundPair out;
  out.lower = pairwise_sum(lo) / static_cast<double>(n);
  out.upper = pairwise_sum(up) / static_cast<double>(n);
  return out;
}

}  // namespace detail

BoundPair cq_bound(int x, const Eigen::Ref<const Eigen::RowVectorXd>& w_row,
                   double tau, const ThetaHat& theta, double c) {
  const ArmRowCache cache = make_arm_row_cache(theta, x, w_row);
  BoundPair out;
  out.upper = detail::interp_table(
      theta.qr, cache.gq, s_index(SIndex::S2, tau, c, cache.p, theta.eps));
  out.lower = detail::interp_table(
      theta.qr, cache.gq, s_index(SIndex::S4, tau, c, cache.p, theta.eps));
  return out;
}

BoundPair cqte_bounds(const Eigen::Ref<const Eigen::RowVectorXd>& w_row, double tau,
                      const ThetaHat& theta, double c) {
  const BoundPair b1 = cq_bound(1, w_row, tau, theta, c);
  const BoundPair b0 = cq_bound(0, w_row, tau, theta, c);
  return BoundPair{b1.lower - b0.upper, b1.upper - b0.lower};
}

BoundPair e_bounds(int x, const Eigen::Ref<const Eigen::RowVectorXd>& w_row,
                   const ThetaHat& theta, double c, int n_quad) {
  const ArmRowCache cache = make_arm_row_cache(theta, x, w_row);
  std::vector<double> buf;
  BoundPair out;
  out.upper = detail::integral_upper(theta.qr, cache, c, theta.eps, n_quad, buf);
  out.lower = detail::integral_lower(theta.qr, cache, c, theta.eps, n_quad, buf);
  return out;
}

BoundPair cate_bounds(const Eigen::Ref<const Eigen::RowVectorXd>& w_row,
                      const ThetaHat& theta, double c, int n_quad) {
  const BoundPair b1 = e_bounds(1, w_row, theta, c, n_quad);
  const BoundPair b0 = e_bounds(0, w_row, theta, c, n_quad);
  return BoundPair{b1.lower - b0.upper, b1.upper - b0.lower};
}

BoundPair mean_bounds(int x, const Sample& sample, const ThetaHat& theta, double c,
                      int n_quad) {
  const auto cache = detail::make_sample_arm_cache(sample, theta, x);
  return detail::mean_bounds_cached(cache, theta, c, n_quad);
}

BoundPair ate_bounds(const Sample& sample, const ThetaHat& theta, double c, int n_quad) {
  const BoundPair m1 = mean_bounds(1, sample, theta, c, n_quad);
  const BoundPair m0 = mean_bounds(0, sample, theta, c, n_quad);
  return BoundPair{m1.lower - m0.upper, m1.upper - m0.lower};
}

namespace {

struct AttPieces {
  double mean_y1 = 0.0, mean_y0 = 0.0, p1 = 0.0, p0 = 0.0;
};

AttPieces att_pieces(const Sample& sample) {
  AttPieces a;
  double s1 = 0.0, s0 = 0.0;
  int n1 = 0;
  for (Eigen::Index i = 0; i < sample.n(); ++i) {
    if (sample.x[i] == 1) {
      s1 += sample.y[i];
      ++n1;
    } else {
      s0 += sample.y[i];
    }
  }
  const int n = static_cast<int>(sample.n());
  if (n1 == 0) throw EstimationError("att: no treated units");
  a.p1 = static_cast<double>(n1) / n;
  a.p0 = 1.0 - a.p1;
  a.mean_y1 = s1 / n1;
  a.mean_y0 = n1 == n ? 0.0 : s0 / (n - n1);
  return a;
}

}  // namespace

BoundPair att_bounds(const Sample& sample, const ThetaHat& theta, double c, int n_quad) {
  const AttPieces a = att_pieces(sample);
  const BoundPair m0 = mean_bounds(0, sample, theta, c, n_quad);
  BoundPair out;
  out.lower = a.mean_y1 - (m0.upper - a.p0 * a.mean_y0) / a.p1;
  out.upper = a.mean_y1 - (m0.lower - a.p0 * a.mean_y0) / a.p1;
  return out;
}

BoundPair estimand_bounds(const Estimand& estimand, const Sample& sample,
                          const ThetaHat& theta, double c, int n_quad) {
  switch (estimand.kind) {
    case Estimand::Kind::ate: return ate_bounds(sample, theta, c, n_quad);
    case Estimand::Kind::att: return att_bounds(sample, theta, c, n_quad);
    case Estimand::Kind::e_mean: return mean_bounds(estimand.arm, sample, theta, c, n_quad);
    case Estimand::Kind::cate: return cate_bounds(estimand.w_row, theta, c, n_quad);
    case Estimand::Kind::cqte: return cqte_bounds(estimand.w_row, estimand.tau, theta, c);
  }
  throw ConfigError("unknown estimand kind");
}

BoundCurve bound_curve(const Estimand& estimand, const Sample& sample,
                       const ThetaHat& theta, const Eigen::VectorXd& c_grid,
                       int n_quad) {
  for (Eigen::Index k = 0; k < c_grid.size(); ++k) {
    if (c_grid[k] < 0.0 || c_grid[k] > 1.0) throw ConfigError("c grid must lie in [0,1]");
    if (k > 0 && c_grid[k] <= c_grid[k - 1])
      throw ConfigError("c grid must be strictly increasing");
  }
  BoundCurve curve;
  curve.estimand = estimand;
  curve.c_grid = c_grid;
  curve.pairs.reserve(static_cast<std::size_t>(c_grid.size()));

  // Mean-level estimands reuse the per-row caches across the whole grid.
  if (estimand.kind == Estimand::Kind::ate || estimand.kind == Estimand::Kind::att ||
      estimand.kind == Estimand::Kind::e_mean) {
    const bool need1 = estimand.kind == Estimand::Kind::ate ||
                       (estimand.kind == Estimand::Kind::e_mean && estimand.arm == 1);
    const bool need0 = estimand.kind != Estimand::Kind::e_mean || estimand.arm == 0;
    detail::SampleArmCache cache1, cache0;
    if (need1) cache1 = detail::make_sample_arm_cache(sample, theta, 1);
    if (need0) cache0 = detail::make_sample_arm_cache(sample, theta, 0);
    AttPieces a;
    if (estimand.kind == Estimand::Kind::att) a = att_pieces(sample);

    for (Eigen::Index k = 0; k < c_grid.size(); ++k) {
      const double c = c_grid[k];
      BoundPair pair;
      switch (estimand.kind) {
        case Estimand::Kind::ate: {
          const BoundPair m1 = detail::mean_bounds_cached(cache1, theta, c, n_quad);
          const BoundPair m0 = detail::mean_bounds_cached(cache0, theta, c, n_quad);
          pair = BoundPair{m1.lower - m0.upper, m1.upper - m0.lower};
          break;
        }
        case Estimand::Kind::att: {
          const BoundPair m0 = detail::mean_bounds_cached(cache0, theta, c, n_quad);
          pair.lower = a.mean_y1 - (m0.upper - a.p0 * a.mean_y0) / a.p1;
          pair.upper = a.mean_y1 - (m0.lower - a.p0 * a.mean_y0) / a.p1;
          break;
        }
        default:
          pair = detail::mean_bounds_cached(estimand.arm == 1 ? cache1 : cache0, theta,
                                            c, n_quad);
      }
      curve.pairs.push_back(pair);
    }
    return curve;
  }

  for (Eigen::Index k = 0; k < c_grid.size(); ++k)
    curve.pairs.push_back(estimand_bounds(estimand, sample, theta, c_grid[k], n_quad));
  return curve;
}

BoundCurve rearrange_monotone(const BoundCurve& curve) {
  BoundCurve out = curve;
  const std::size_t k = curve.pairs.size();
  std::vector<double> up(k), lo(k);
  for (std::size_t j = 0; j < k; ++j) {
    up[j] = curve.pairs[j].upper;
    lo[j] = curve.pairs[j].lower;
  }
  std::sort(up.begin(), up.end());
  std::sort(lo.begin(), lo.end(), std::greater<double>());
  for (std::size_t j = 0; j < k; ++j) {
    out.pairs[j].upper = up[j];
    out.pairs[j].lower = lo[j];
  }
  out.monotonized = true;
  return out;
}

BreakdownResult breakdown_point(const BoundCurve& curve, Conclusion conclusion,
                                double threshold) {
  if (!curve.monotonized)
    throw ConfigError("breakdown_point requires a monotonized curve");
  if (curve.pairs.empty()) throw ConfigError("breakdown_point: empty curve");

  auto edge = [&](std::size_t j) {
    return conclusion == Conclusion::lower_at_least ? curve.pairs[j].lower
                                                    : curve.pairs[j].upper;
  };
  auto holds = [&](std::size_t j) {
    return conclusion == Conclusion::lower_at_least ? edge(j) >= threshold
                                                    : edge(j) <= threshold;
  };

  BreakdownResult res;
  res.conclusion = conclusion;
  res.threshold = threshold;
  if (!holds(0)) {
    res.c_bp = 0.0;
    return res;
  }
  std::size_t last_ok = 0;
  while (last_ok + 1 < curve.pairs.size() && holds(last_ok + 1)) ++last_ok;
  if (last_ok + 1 == curve.pairs.size()) {
    res.c_bp = 1.0;
    return res;
  }
  const double c0 = curve.c_grid[static_cast<Eigen::Index>(last_ok)];
  const double c1 = curve.c_grid[static_cast<Eigen::Index>(last_ok + 1)];
  const double e0 = edge(last_ok), e1 = edge(last_ok + 1);
  if (std::abs(e1 - e0) < 1e-300) {
    res.c_bp = c0;
    return res;
  }
  res.c_bp = c0 + (threshold - e0) / (e1 - e0) * (c1 - c0);
  res.c_bp = std::clamp(res.c_bp, c0, c1);
  return res;
}

double cbar(const Sample& sample, const DesignMatrices& design,
            const PropensityFit& fit) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < sample.n(); ++i) {
    const double p = predict_propensity(fit, design.r_row(sample.w.row(i)), 1);
    m = std::max(m, std::max(p, 1.0 - p));
  }
  return m;
}

}  // namespace csens
