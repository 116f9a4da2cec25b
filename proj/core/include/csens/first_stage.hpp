#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <memory>
#include <vector>

#include "csens/dataset.hpp"
#include "csens/errors.hpp"

namespace csens {

enum class Link { logit, probit };

// Link CDF, its density, and the likelihood L(x, z) = F(z)^x (1-F(z))^(1-x).
double link_cdf(Link link, double z);
double link_pdf(Link link, double z);
double likelihood(Link link, int x, double z);

struct PropensityFit {
  Link link = Link::logit;
  Eigen::VectorXd beta;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Newton-Raphson MLE with step-halving line search.
// Throws EstimationError on separation (|beta| > 1e3), singular Hessian,
// or failure to reach gradient sup-norm 1e-8 within 100 iterations.
PropensityFit fit_propensity(const DesignMatrices& design, const Eigen::VectorXi& x,
                             Link link);

// L(x, r(w)'beta); always in (0,1).
double predict_propensity(const PropensityFit& fit,
                          const Eigen::Ref<const Eigen::VectorXd>& r_row, int x);

struct QuantileProcessFit {
  Eigen::VectorXd tau_grid;   // strictly increasing, inside (0,1)
  Eigen::MatrixXd gamma;      // grid length x d_q
  Eigen::VectorXd objective;  // check-loss value per grid point
  double eps_small = 0.0;     // evaluation clamps to [eps_small, 1-eps_small]

  Eigen::Index d_q() const { return gamma.cols(); }

  // Interpolation bracket for a quantile index already clamped to the grid
  // range: gamma(u) = (1-frac)*gamma.row(j) + frac*gamma.row(j+1).
  void locate(double u, Eigen::Index& j, double& frac) const {
    const Eigen::Index g = tau_grid.size();
    if (uniform_) {
      const double tpos = (u - grid_lo_) / grid_step_;
      j = static_cast<Eigen::Index>(tpos);
      if (j > g - 2) j = g - 2;
      if (j < 0) j = 0;
      frac = tpos - static_cast<double>(j);
    } else {
      const double* lo = tau_grid.data();
      const double* it = std::upper_bound(lo, lo + g, u);
      j = static_cast<Eigen::Index>(it - lo) - 1;
      if (j > g - 2) j = g - 2;
      if (j < 0) j = 0;
      frac = (u - tau_grid[j]) / (tau_grid[j + 1] - tau_grid[j]);
    }
    if (frac < 1e-9) frac = 0.0;
    if (frac > 1.0 - 1e-9) frac = 1.0;
  }

  double clamp(double u) const {
    const double lo = std::max(eps_small, tau_grid[0]);
    const double hi = std::min(1.0 - eps_small, tau_grid[tau_grid.size() - 1]);
    return u < lo ? lo : (u > hi ? hi : u);
  }

 private:
  friend QuantileProcessFit fit_quantile_process(const DesignMatrices&,
                                                 const Eigen::VectorXd&,
                                                 const Eigen::VectorXd&, double);
  bool uniform_ = false;
  double grid_lo_ = 0.0, grid_step_ = 0.0;
};

// Linear quantile regression at every grid point. Adjacent fits are
// warm-started from the previous basis; ties across flat optima resolve to
// the lexicographically smallest vertex in coefficient order.
QuantileProcessFit fit_quantile_process(const DesignMatrices& design,
                                        const Eigen::VectorXd& y,
                                        const Eigen::VectorXd& tau_grid,
                                        double eps_small);

// gamma(u) with u clamped to [eps_small, 1-eps_small]; exact at grid points.
Eigen::VectorXd eval_gamma(const QuantileProcessFit& fit, double u);

// Central difference (gamma(tau+eta) - gamma(tau-eta)) / (2 eta).
// Requires [tau-eta, tau+eta] inside [eps_small, 1-eps_small].
Eigen::VectorXd gamma_derivative(const QuantileProcessFit& fit, double tau, double eta);

struct TuningParams {
  double eps = 0.05;        // quantile-index trimming
  double eps_small = 0.025; // quantile process domain margin
  double eta = 0.0;         // derivative step in tau units
  double kappa = 0.0;       // case-detection slackness
  double tau_step = 0.005;  // quantile grid spacing
  int n_quad = 500;         // midpoint quadrature points for the tau integral

  // eta = 0.05 n^(-1/4), kappa = n^(-1/3), eps_small = eps/2; eta is capped
  // below eps - eps_small so the derivative stencil stays inside the grid.
  static TuningParams defaults(Eigen::Index n, double eps = 0.05);

  void validate() const;

  Eigen::VectorXd make_tau_grid() const;
};

struct ThetaHat {
  PropensityFit prop;
  QuantileProcessFit qr;
  double eps = 0.05;
  double eps_small = 0.025;
  std::shared_ptr<const DesignMatrices> design;
};

// Fit both first stages on (sample, design) with the given tuning.
ThetaHat fit_theta(const Sample& sample, std::shared_ptr<const DesignMatrices> design,
                   Link link, const TuningParams& tuning);

}  // namespace csens
