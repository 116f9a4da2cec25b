#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "csens/first_stage.hpp"

namespace csens {

// Per-row |p_hat(W) - p_hat_minus_k(W_minus_k)|: the marginal impact of
// covariate k on the fitted propensity score.
Eigen::VectorXd delta_k(const Sample& sample, const DesignSpec& spec,
                        const DesignMatrices& full_design,
                        const PropensityFit& fit_full, const std::string& covariate,
                        Link link);

// Type-7 (linear interpolation) empirical quantile.
double empirical_quantile(Eigen::VectorXd values, double p);

struct DeltaSummary {
  double p50 = 0.0, p75 = 0.0, p90 = 0.0;
  double cbar_k = 0.0;             // max observed value
  double cdf_at_cbp = 0.0;         // F_Delta(c_bp) when c_bp supplied
  bool has_cbp = false;
};
DeltaSummary delta_quantiles(const Eigen::VectorXd& delta,
                             std::optional<double> c_bp = std::nullopt);

struct DensityEstimate {
  Eigen::VectorXd grid;
  Eigen::VectorXd density;
  double bandwidth = 0.0;
};
// Gaussian KDE with Silverman bandwidth, reflected at zero (Delta_k >= 0).
DensityEstimate delta_density(const Eigen::VectorXd& delta,
                              std::optional<double> bandwidth = std::nullopt);

struct IpwBaseline {
  double ate = 0.0;
  double att = 0.0;
  double se_ate = 0.0;
  double se_att = 0.0;
  int draws = 0;
  std::uint64_t seed = 0;
};

// Normalized (ratio-form) IPW point estimates with bootstrap standard errors;
// the propensity score is refit on every resample.
IpwBaseline ipw_baseline(const Sample& sample, const DesignMatrices& design,
                         Link link, int draws, std::uint64_t seed);

// Point estimates only (no bootstrap).
struct IpwPoint {
  double ate = 0.0;
  double att = 0.0;
};
IpwPoint ipw_point(const Sample& sample, const DesignMatrices& design,
                   const PropensityFit& fit);

struct LooAteChange {
  double pct = 0.0;     // |(ATE - ATE_-k)/ATE| as a percentage
  bool defined = true;  // false when the baseline ATE is numerically zero
};
LooAteChange loo_ate_change(const Sample& sample, const DesignSpec& spec,
                            const std::string& covariate, Link link);

struct OverlapReport {
  double min_p = 0.0, max_p = 0.0;
  Eigen::VectorXd deciles;  // p10..p90
  double cbar = 0.0;
  int flagged = 0;  // rows with p outside [0.01, 0.99]
};
OverlapReport overlap_report(const Sample& sample, const DesignMatrices& design,
                             const PropensityFit& fit);

struct LeaveOutRow {
  std::string covariate;
  DeltaSummary delta;
  LooAteChange ate_change;
};

struct LeaveOutReport {
  std::vector<LeaveOutRow> rows;
};

LeaveOutReport leave_out_report(const Sample& sample, const DesignSpec& spec,
                                Link link, std::optional<double> c_bp = std::nullopt);

}  // namespace csens
