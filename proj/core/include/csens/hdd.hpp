#pragma once

#include <Eigen/Dense>
#include <vector>

#include "csens/bound_engine.hpp"
#include "csens/first_stage.hpp"

namespace csens {

// A perturbation of the fitted first stages: h1 moves the propensity
// coefficients, h2 moves the quantile coefficient process (carried on the
// same tau grid as the fitted process, linearly interpolated off-grid).
struct Direction {
  Eigen::VectorXd h1;
  Eigen::MatrixXd h2;  // grid length x d_q
};

struct HddValue {
  double upper = 0.0;
  double lower = 0.0;
};

// (2x-1) F'(z) / L(x,z)^2 -- the scalar factor of L_beta/L^2.
double l_beta_ratio_scalar(Link link, int x, double z);

// Full vector L_beta(x, r'beta) / L(x, r'beta)^2 = scalar * r(w).
Eigen::VectorXd l_beta_ratio(Link link, int x, double z,
                             const Eigen::Ref<const Eigen::VectorXd>& r_row);

// Case functions for the directional derivatives of the clamped index maps.
// rho is l_beta_ratio'h1; L the likelihood value; kappa the slackness.
// Cases overlapping inside the kappa bands are summed exactly as defined.
inline double t1_case(double tau, double c, double eps, double kappa, double L,
                      double rho) {
  const double m = std::min(tau, 1.0 - tau);
  const double a = tau + (c / L) * m;  // c arm
  const double b = tau / L;            // ratio arm
  const double ce = 1.0 - eps;

  const double va = -c * m * rho;
  const double vb = -tau * rho;

  double t = 0.0;
  if (a < std::min(b, ce) - kappa) t += va;
  if (b < std::min(a, ce) - kappa) t += vb;
  // ce strictly smallest contributes zero

  const bool ab = std::abs(a - b) <= kappa;
  const bool ace = std::abs(a - ce) <= kappa;
  const bool bce = std::abs(b - ce) <= kappa;
  if (ab && std::max(a, b) < ce - kappa) t += std::min(va, vb);
  if (ace && std::max(a, ce) < b - kappa) t += std::min(va, 0.0);
  if (bce && std::max(b, ce) < a - kappa) t += std::min(vb, 0.0);
  if ((ab && ace) || (ab && bce) || (ace && bce)) t += std::min({va, vb, 0.0});
  return t;
}

inline double t2_case(double tau, double c, double eps, double kappa, double L,
                      double rho) {
  const double s1 = s_index(SIndex::S1, tau, c, L, eps);
  if (s1 > eps + kappa) return t1_case(tau, c, eps, kappa, L, rho);
  if (std::abs(s1 - eps) <= kappa)
    return std::max(t1_case(tau, c, eps, kappa, L, rho), 0.0);
  return 0.0;
}

inline double t3_case(double tau, double c, double eps, double kappa, double L,
                      double rho) {
  const double m = std::min(tau, 1.0 - tau);
  const double a = tau - (c / L) * m;
  const double b = (tau - 1.0) / L + 1.0;
  const double ce = eps;

  const double va = c * m * rho;
  const double vb = (1.0 - tau) * rho;

  double t = 0.0;
  if (a > std::max(b, ce) + kappa) t += va;
  if (b > std::max(a, ce) + kappa) t += vb;

  const bool ab = std::abs(a - b) <= kappa;
  const bool ace = std::abs(a - ce) <= kappa;
  const bool bce = std::abs(b - ce) <= kappa;
  if (ab && std::min(a, b) > ce + kappa) t += std::max(va, vb);
  if (ace && std::min(a, ce) > b + kappa) t += std::max(va, 0.0);
  if (bce && std::min(b, ce) > a + kappa) t += std::max(vb, 0.0);
  if ((ab && ace) || (ab && bce) || (ace && bce)) t += std::max({va, vb, 0.0});
  return t;
}

inline double t4_case(double tau, double c, double eps, double kappa, double L,
                      double rho) {
  const double s3 = s_index(SIndex::S3, tau, c, L, eps);
  if (s3 < 1.0 - eps - kappa) return t3_case(tau, c, eps, kappa, L, rho);
  if (std::abs(s3 - (1.0 - eps)) <= kappa)
    return std::min(t3_case(tau, c, eps, kappa, L, rho), 0.0);
  return 0.0;
}

// Derivative of the conditional quantile bounds in direction (h1,h2):
// upper = q'h2(S2) + q'gamma'(S2) T2, lower uses S4/T4.
HddValue gamma1_hdd(int x, const Eigen::Ref<const Eigen::RowVectorXd>& w_row,
                    double tau, const ThetaHat& theta, const Direction& dir,
                    const TuningParams& tuning, double c);

// Quadrature of gamma1_hdd over tau (same midpoint scheme as the bounds).
HddValue gamma2_hdd(int x, const Eigen::Ref<const Eigen::RowVectorXd>& w_row,
                    const ThetaHat& theta, const Direction& dir,
                    const TuningParams& tuning, double c);

// Sample average of gamma2_hdd over covariate rows.
HddValue gamma3_hdd(int x, const Sample& sample, const ThetaHat& theta,
                    const Direction& dir, const TuningParams& tuning, double c);

namespace detail {

// Draw-independent row state for one arm.
struct HddRowCache {
  double L = 0.5;            // L(x, r'beta)
  double ratio_scalar = 0.0; // (2x-1) F'(r'beta) / L^2
  Eigen::VectorXd q;
  Eigen::VectorXd r;
  Eigen::VectorXd gq;        // q'gamma_j on the grid
};
HddRowCache make_hdd_row_cache(const ThetaHat& theta, int x,
                               const Eigen::Ref<const Eigen::RowVectorXd>& w_row);

inline HddValue gamma1_kernel(const QuantileProcessFit& qr, double eps, double eta,
                              double kappa, double c, double tau, double L, double rho,
                              const Eigen::Ref<const Eigen::VectorXd>& gq,
                              const Eigen::Ref<const Eigen::VectorXd>& hq) {
  const double s2 = s_index(SIndex::S2, tau, c, L, eps);
  const double s4 = s_index(SIndex::S4, tau, c, L, eps);
  const double inv2eta = 1.0 / (2.0 * eta);
  const double t2 = t2_case(tau, c, eps, kappa, L, rho);
  const double t4 = t4_case(tau, c, eps, kappa, L, rho);

  HddValue v;
  v.upper = interp_table(qr, hq, s2);
  v.lower = interp_table(qr, hq, s4);
  if (t2 != 0.0)
    v.upper += t2 * (interp_table(qr, gq, s2 + eta) - interp_table(qr, gq, s2 - eta)) *
               inv2eta;
  if (t4 != 0.0)
    v.lower += t4 * (interp_table(qr, gq, s4 + eta) - interp_table(qr, gq, s4 - eta)) *
               inv2eta;
  return v;
}

HddValue gamma2_kernel(const QuantileProcessFit& qr, double eps, double eta,
                       double kappa, double c, int n_quad, double L, double rho,
                       const Eigen::Ref<const Eigen::VectorXd>& gq,
                       const Eigen::Ref<const Eigen::VectorXd>& hq,
                       std::vector<double>& buf_up, std::vector<double>& buf_lo);

}  // namespace detail

}  // namespace csens
