#include "csens/hdd.hpp"

#include <cmath>

namespace csens {

double l_beta_ratio_scalar(Link link, int x, double z) {
  const double L = likelihood(link, x, z);
  return (x == 1 ? 1.0 : -1.0) * link_pdf(link, z) / (L * L);
}

Eigen::VectorXd l_beta_ratio(Link link, int x, double z,
                             const Eigen::Ref<const Eigen::VectorXd>& r_row) {
  return l_beta_ratio_scalar(link, x, z) * r_row;
}

namespace detail {

HddRowCache make_hdd_row_cache(const ThetaHat& theta, int x,
                               const Eigen::Ref<const Eigen::RowVectorXd>& w_row) {
  HddRowCache cache;
  cache.q = theta.design->q_row(x, w_row);
  cache.r = theta.design->r_row(w_row);
  const double z = cache.r.dot(theta.prop.beta);
  cache.L = likelihood(theta.prop.link, x, z);
  cache.ratio_scalar = l_beta_ratio_scalar(theta.prop.link, x, z);
  cache.gq = theta.qr.gamma * cache.q;
  return cache;
}

HddValue gamma2_kernel(const QuantileProcessFit& qr, double eps, double eta,
                       double kappa, double c, int n_quad, double L, double rho,
                       const Eigen::Ref<const Eigen::VectorXd>& gq,
                       const Eigen::Ref<const Eigen::VectorXd>& hq,
                       std::vector<double>& buf_up, std::vector<double>& buf_lo) {
  buf_up.resize(static_cast<std::size_t>(n_quad));
  buf_lo.resize(static_cast<std::size_t>(n_quad));
  const double h = 1.0 / static_cast<double>(n_quad);
  for (int k = 0; k < n_quad; ++k) {
    const double tau = (static_cast<double>(k) + 0.5) * h;
    const HddValue v = gamma1_kernel(qr, eps, eta, kappa, c, tau, L, rho, gq, hq);
    buf_up[static_cast<std::size_t>(k)] = v.upper;
    buf_lo[static_cast<std::size_t>(k)] = v.lower;
  }
  HddValue out;
  out.upper = pairwise_sum(buf_up) * h;
  out.lower = pairwise_sum(buf_lo) * h;
  return out;
}

}  // namespace detail

namespace {

using detail::HddRowCache;

double rho_of(const HddRowCache& cache, const Direction& dir) {
  return cache.ratio_scalar * cache.r.dot(dir.h1);
}

}  // namespace

HddValue gamma1_hdd(int x, const Eigen::Ref<const Eigen::RowVectorXd>& w_row,
                    double tau, const ThetaHat& theta, const Direction& dir,
                    const TuningParams& tuning, double c) {
  const HddRowCache cache = detail::make_hdd_row_cache(theta, x, w_row);
  const Eigen::VectorXd hq = dir.h2 * cache.q;
  return detail::gamma1_kernel(theta.qr, theta.eps, tuning.eta, tuning.kappa, c, tau,
                               cache.L, rho_of(cache, dir), cache.gq, hq);
}

HddValue gamma2_hdd(int x, const Eigen::Ref<const Eigen::RowVectorXd>& w_row,
                    const ThetaHat& theta, const Direction& dir,
                    const TuningParams& tuning, double c) {
  const HddRowCache cache = detail::make_hdd_row_cache(theta, x, w_row);
  const Eigen::VectorXd hq = dir.h2 * cache.q;
  std::vector<double> bu, bl;
  return detail::gamma2_kernel(theta.qr, theta.eps, tuning.eta, tuning.kappa, c,
                               tuning.n_quad, cache.L, rho_of(cache, dir), cache.gq,
                               hq, bu, bl);
}

HddValue gamma3_hdd(int x, const Sample& sample, const ThetaHat& theta,
                    const Direction& dir, const TuningParams& tuning, double c) {
  const std::size_t n = static_cast<std::size_t>(sample.n());
  std::vector<double> up(n), lo(n), bu, bl;
  for (std::size_t i = 0; i < n; ++i) {
    const HddRowCache cache =
        detail::make_hdd_row_cache(theta, x, sample.w.row(static_cast<Eigen::Index>(i)));
    const Eigen::VectorXd hq = dir.h2 * cache.q;
    const HddValue v =
        detail::gamma2_kernel(theta.qr, theta.eps, tuning.eta, tuning.kappa, c,
                              tuning.n_quad, cache.L, rho_of(cache, dir), cache.gq,
                              hq, bu, bl);
    up[i] = v.upper;
    lo[i] = v.lower;
  }
  HddValue out;
  out.upper = pairwise_sum(up) / static_cast<double>(n);
  out.lower = pairwise_sum(lo) / static_cast<double>(n);
  return out;
}

}  // namespace csens
