#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "csens/first_stage.hpp"

namespace csens {

// Raw (untrimmed) quantile-index maps. Both equal tau at c = 0.
inline double t_upper(double tau, double c, double p) {
  const double m = std::min(tau, 1.0 - tau);
  return std::min({tau + (c / p) * m, tau / p, 1.0});
}

inline double t_lower(double tau, double c, double p) {
  const double m = std::min(tau, 1.0 - tau);
  return std::max({tau - (c / p) * m, (tau - 1.0) / p + 1.0, 0.0});
}

// Trimmed index maps: S1 = min{ t-upper arms, 1-eps }, S2 = max{S1, eps},
// S3 = max{ t-lower arms, eps }, S4 = min{S3, 1-eps}.
enum class SIndex { S1, S2, S3, S4 };

inline double s_index(SIndex kind, double tau, double c, double p, double eps) {
  const double m = std::min(tau, 1.0 - tau);
  switch (kind) {
    case SIndex::S1:
      return std::min({tau + (c / p) * m, tau / p, 1.0 - eps});
    case SIndex::S2:
      return std::max(s_index(SIndex::S1, tau, c, p, eps), eps);
    case SIndex::S3:
      return std::max({tau - (c / p) * m, (tau - 1.0) / p + 1.0, eps});
    case SIndex::S4:
      return std::min(s_index(SIndex::S3, tau, c, p, eps), 1.0 - eps);
  }
  return tau;
}

struct BoundPair {
  double lower = 0.0;
  double upper = 0.0;
  double width() const { return upper - lower; }
};

struct Estimand {
  enum class Kind { ate, att, e_mean, cate, cqte };
  Kind kind = Kind::ate;
  int arm = 1;            // potential-outcome arm for e_mean
  Eigen::RowVectorXd w_row;  // covariate row for cate/cqte
  double tau = 0.5;       // quantile level for cqte

  std::string label() const;
  static Estimand parse(const std::string& text);  // "ate", "att", "e0", "e1"
};

struct BoundCurve {
  Estimand estimand;
  Eigen::VectorXd c_grid;  // increasing
  std::vector<BoundPair> pairs;
  bool monotonized = false;
};

enum class Conclusion { lower_at_least, upper_at_most };

struct BreakdownResult {
  double c_bp = 0.0;
  Conclusion conclusion = Conclusion::lower_at_least;
  double threshold = 0.0;
};

// Scalar tables for one covariate row and treatment arm: the propensity and
// q(x,w)'gamma_j on the quantile grid. All bound kernels run off these.
struct ArmRowCache {
  double p = 0.5;
  Eigen::VectorXd gq;  // grid length
};
ArmRowCache make_arm_row_cache(const ThetaHat& theta, int x,
                               const Eigen::Ref<const Eigen::RowVectorXd>& w_row);

// Conditional quantile bounds: upper = q'gamma(S2), lower = q'gamma(S4).
BoundPair cq_bound(int x, const Eigen::Ref<const Eigen::RowVectorXd>& w_row,
                   double tau, const ThetaHat& theta, double c);

// CQTE(tau|w) bounds: lower = lower_1 - upper_0, upper = upper_1 - lower_0.
BoundPair cqte_bounds(const Eigen::Ref<const Eigen::RowVectorXd>& w_row, double tau,
                      const ThetaHat& theta, double c);

// Midpoint quadrature of the CQTE bounds over tau in (0,1).
BoundPair cate_bounds(const Eigen::Ref<const Eigen::RowVectorXd>& w_row,
                      const ThetaHat& theta, double c, int n_quad = 500);

// Bounds on E(Y_x | W=w): quadrature of cq_bound over tau.
BoundPair e_bounds(int x, const Eigen::Ref<const Eigen::RowVectorXd>& w_row,
                   const ThetaHat& theta, double c, int n_quad = 500);

// Bounds on E(Y_x): sample average of e_bounds rows (pairwise summation).
BoundPair mean_bounds(int x, const Sample& sample, const ThetaHat& theta, double c,
                      int n_quad = 500);

BoundPair ate_bounds(const Sample& sample, const ThetaHat& theta, double c,
                     int n_quad = 500);
BoundPair att_bounds(const Sample& sample, const ThetaHat& theta, double c,
                     int n_quad = 500);

BoundPair estimand_bounds(const Estimand& estimand, const Sample& sample,
                          const ThetaHat& theta, double c, int n_quad = 500);

BoundCurve bound_curve(const Estimand& estimand, const Sample& sample,
                       const ThetaHat& theta, const Eigen::VectorXd& c_grid,
                       int n_quad = 500);

// Rearrangement: sorts the upper series nondecreasing and the lower series
// nonincreasing over the c grid, preserving each multiset of values.
BoundCurve rearrange_monotone(const BoundCurve& curve);

// Largest c on [0,1] keeping the conclusion true over the whole interval,
// refined by linear interpolation between grid points.
BreakdownResult breakdown_point(const BoundCurve& curve, Conclusion conclusion,
                                double threshold);

// Empirical surrogate for sup_w max{p(1|w), p(0|w)}.
double cbar(const Sample& sample, const DesignMatrices& design,
            const PropensityFit& fit);

// Pairwise (cascade) summation; deterministic and row-order independent
// once inputs are fixed.
double pairwise_sum(const double* v, std::size_t n);
inline double pairwise_sum(const std::vector<double>& v) {
  return pairwise_sum(v.data(), v.size());
}

namespace detail {

// Linear interpolation of a per-grid scalar table at clamped index u.
inline double interp_table(const QuantileProcessFit& qr,
                           const Eigen::Ref<const Eigen::VectorXd>& table, double u) {
  Eigen::Index j;
  double frac;
  qr.locate(qr.clamp(u), j, frac);
  if (frac == 0.0) return table[j];
  if (frac == 1.0) return table[j + 1];
  return (1.0 - frac) * table[j] + frac * table[j + 1];
}

// Quadrature kernels shared by the scalar ops and the batched curve/bootstrap
// paths; identical arithmetic in both.
inline double integral_upper(const QuantileProcessFit& qr, const ArmRowCache& cache,
                             double c, double eps, int n_quad, std::vector<double>& buf) {
  buf.resize(static_cast<std::size_t>(n_quad));
  const double h = 1.0 / static_cast<double>(n_quad);
  for (int k = 0; k < n_quad; ++k) {
    const double tau = (static_cast<double>(k) + 0.5) * h;
    const double s2 = s_index(SIndex::S2, tau, c, cache.p, eps);
    buf[static_cast<std::size_t>(k)] = interp_table(qr, cache.gq, s2);
  }
  return pairwise_sum(buf) * h;
}

inline double integral_lower(const QuantileProcessFit& qr, const ArmRowCache& cache,
                             double c, double eps, int n_quad, std::vector<double>& buf) {
  buf.resize(static_cast<std::size_t>(n_quad));
  const double h = 1.0 / static_cast<double>(n_quad);
  for (int k = 0; k < n_quad; ++k) {
    const double tau = (static_cast<double>(k) + 0.5) * h;
    const double s4 = s_index(SIndex::S4, tau, c, cache.p, eps);
    buf[static_cast<std::size_t>(k)] = interp_table(qr, cache.gq, s4);
  }
  return pairwise_sum(buf) * h;
}

// Per-arm caches for every sample row.
struct SampleArmCache {
  std::vector<ArmRowCache> rows;
};
SampleArmCache make_sample_arm_cache(const Sample& sample, const ThetaHat& theta, int x);

BoundPair mean_bounds_cached(const SampleArmCache& cache, const ThetaHat& theta,
                             double c, int n_quad);

}  // namespace detail

}  // namespace csens
