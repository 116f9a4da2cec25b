#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "csens/bound_engine.hpp"
#include "csens/hdd.hpp"
#include "csens/rng.hpp"

namespace csens {

enum class BootstrapMode { hdd, standard };

struct BootstrapConfig {
  int draws = 1000;
  std::uint64_t seed = 20240101;
  BootstrapMode mode = BootstrapMode::hdd;
  double alpha = 0.05;
  TuningParams tuning;
  int threads = 1;

  void validate() const;
};

// sqrt(n)-scaled bound deviations, one BoundPair per (estimand, c, draw).
struct BootstrapDraws {
  BootstrapMode mode = BootstrapMode::hdd;
  Eigen::VectorXd c_grid;
  std::vector<Estimand> estimands;
  // draws[e][k][b]: deviation pair for estimand e at c_grid[k], draw b
  std::vector<std::vector<std::vector<BoundPair>>> draws;
  int rejected_resamples = 0;
  // fraction of rows with fitted propensity within kappa of {c, 1-c}
  Eigen::VectorXd mass_point_fraction;

  int n_draws() const {
    return draws.empty() || draws[0].empty() ? 0
                                             : static_cast<int>(draws[0][0].size());
  }
};

// Warn when this share of the sample sits within kappa of {c, 1-c}; point
// masses there break standard-bootstrap validity.
inline constexpr double kMassPointWarnFraction = 0.05;

struct ConfidenceBand {
  enum class Kind { pointwise, uniform_grid, uniform_interpolated };
  Kind kind = Kind::pointwise;
  double alpha = 0.05;
  Eigen::VectorXd c_grid;
  std::vector<double> lb, ub;
  std::string warning;  // set when the grid misses an endpoint of [0,1]

  // Step-function evaluation for uniform-interpolated bands: the value at
  // the smallest grid point >= c. Pointwise bands interpolate linearly.
  double lb_at(double c) const;
  double ub_at(double c) const;
};

// n i.i.d. uniform draws with replacement from {0,...,n-1}.
std::vector<int> resample_indices(Eigen::Index n, SubstreamRng& rng);

Sample resample_sample(const Sample& sample, const std::vector<int>& indices);
DesignMatrices resample_design(const DesignMatrices& design,
                               const std::vector<int>& indices);

// Refit both first stages on the resampled rows (same grids and tuning).
// Throws EstimationError when the resample is degenerate: single treatment
// arm, rank-deficient design, or a failed refit.
ThetaHat bootstrap_theta(const Sample& sample, const DesignMatrices& design,
                         const std::vector<int>& indices, Link link,
                         const TuningParams& tuning);

// Direction (sqrt(n)(beta*-beta), sqrt(n)(gamma*-gamma)) on the tau grid.
Direction bootstrap_direction(const ThetaHat& theta, const ThetaHat& theta_star,
                              Eigen::Index n);

// Empirical-process component: sqrt(n) ( resample mean of Gamma_2 rows at the
// ORIGINAL theta minus the full-sample mean ). Returns (lower, upper) devs.
BoundPair ep_component(int x, const Sample& sample, const ThetaHat& theta,
                       const std::vector<int>& indices, double c, int n_quad = 500);

// Two-component draw for the E(Y_x) bounds: gamma3_hdd + ep_component.
BoundPair mean_bound_draw(int x, const Sample& sample, const ThetaHat& theta,
                          const ThetaHat& theta_star, const std::vector<int>& indices,
                          double c, const TuningParams& tuning);

BoundPair ate_draw(const Sample& sample, const ThetaHat& theta,
                   const ThetaHat& theta_star, const std::vector<int>& indices,
                   double c, const TuningParams& tuning);

BoundPair att_draw(const Sample& sample, const ThetaHat& theta,
                   const ThetaHat& theta_star, const std::vector<int>& indices,
                   double c, const TuningParams& tuning);

// Conditional-level draws (no empirical-process component).
BoundPair cqte_draw(const Eigen::Ref<const Eigen::RowVectorXd>& w_row, double tau,
                    const ThetaHat& theta, const ThetaHat& theta_star, Eigen::Index n,
                    double c, const TuningParams& tuning);
BoundPair cate_draw(const Eigen::Ref<const Eigen::RowVectorXd>& w_row,
                    const ThetaHat& theta, const ThetaHat& theta_star, Eigen::Index n,
                    double c, const TuningParams& tuning);

// ceil((1-alpha) B)-th order statistic of M_b = max(dev_lower, -dev_upper).
double critical_value(const std::vector<BoundPair>& draws_at_c, double alpha);

ConfidenceBand pointwise_band(const BoundCurve& curve,
                              const std::vector<std::vector<BoundPair>>& draws,
                              double alpha, Eigen::Index n);

// Studentized sup-t band over the grid, then monotone step interpolation.
// Pass the monotonized curve.
ConfidenceBand uniform_band(const BoundCurve& curve,
                            const std::vector<std::vector<BoundPair>>& draws,
                            double alpha, Eigen::Index n);

// Lower confidence bound for the breakdown point: the crossing of the band's
// binding edge with the threshold; [c_L, 1] is the one-sided interval.
double breakdown_ci(const ConfidenceBand& band, Conclusion conclusion, double threshold);

// Fraction of rows with fitted propensity within kappa of {c, 1-c}, per c.
Eigen::VectorXd mass_point_report(const Sample& sample, const ThetaHat& theta,
                                  const Eigen::VectorXd& c_grid, double kappa);

// One resample stream per draw feeds every estimand and c; reproducible from
// the seed and independent of thread count.
BootstrapDraws run_bootstrap(const Sample& sample, const ThetaHat& theta, Link link,
                             const BootstrapConfig& config,
                             const std::vector<Estimand>& estimands,
                             const Eigen::VectorXd& c_grid);

// Standard nonparametric bootstrap: refit and recompute the bound estimator
// on each resample.
BootstrapDraws standard_bootstrap(const Sample& sample, const ThetaHat& theta,
                                  Link link, const BootstrapConfig& config,
                                  const std::vector<Estimand>& estimands,
                                  const Eigen::VectorXd& c_grid);

}  // namespace csens
