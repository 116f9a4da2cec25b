#include "csens/first_stage.hpp"

#include <algorithm>
#include <cmath>

#include "csens/quantile_solver.hpp"

namespace csens {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double norm_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double norm_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

// log F and log(1-F) without catastrophic cancellation.
double log_link(Link link, double z, bool upper) {
  if (link == Link::logit) {
    // log F(z) = -log1p(exp(-z)), log(1-F(z)) = log F(-z)
    const double v = upper ? z : -z;
    return v > 0.0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
  }
  const double v = upper ? z : -z;  // log Phi(v)
  if (v > -37.0) return std::log(norm_cdf(v));
  // asymptotic tail: Phi(v) ~ phi(v)/(-v) (1 - 1/v^2 + 3/v^4)
  const double v2 = v * v;
  return -0.5 * v2 - std::log(-v) - 0.918938533204672742 +
         std::log1p(-1.0 / v2 + 3.0 / (v2 * v2));
}

// Inverse Mills ratio phi(z)/Phi(z), stable in the left tail.
double mills(double z) {
  if (z > -30.0) return norm_pdf(z) / norm_cdf(z);
  const double z2 = z * z;
  return -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2));
}

}  // namespace

double link_cdf(Link link, double z) {
  if (link == Link::logit) return 1.0 / (1.0 + std::exp(-z));
  return norm_cdf(z);
}

double link_pdf(Link link, double z) {
  if (link == Link::logit) {
    const double f = link_cdf(Link::logit, z);
    return f * (1.0 - f);
  }
  return norm_pdf(z);
}

double likelihood(Link link, int x, double z) {
  return std::exp(log_link(link, z, x == 1));
}

PropensityFit fit_propensity(const DesignMatrices& design, const Eigen::VectorXi& x,
                             Link link) {
  const Eigen::MatrixXd& R = design.rmat;
  const Eigen::Index n = R.rows(), d = R.cols();
  if (x.size() != n) throw DataError("treatment vector length does not match design");
  const int treated = x.sum();
  if (treated == 0 || treated == static_cast<int>(n))
    throw EstimationError("propensity fit requires both treatment arms");

  PropensityFit fit;
  fit.link = link;
  fit.beta = Eigen::VectorXd::Zero(d);

  auto loglik_at = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd z = R * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) ll += log_link(link, z[i], x[i] == 1);
    return ll;
  };

  double ll = loglik_at(fit.beta);
  const double grad_tol = 1e-8;
  const int max_iter = 100;

  for (int iter = 1; iter <= max_iter; ++iter) {
    const Eigen::VectorXd z = R * fit.beta;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd neg_hess = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      double gi, hi;  // d/dz log-lik and -d2/dz2 log-lik for row i
      if (link == Link::logit) {
        const double f = link_cdf(Link::logit, z[i]);
        gi = (x[i] == 1 ? 1.0 : 0.0) - f;
        hi = f * (1.0 - f);
      } else {
        const double s = x[i] == 1 ? 1.0 : -1.0;
        const double lam = mills(s * z[i]);
        gi = s * lam;
        hi = lam * (lam + s * z[i]);
      }
      grad.noalias() += gi * R.row(i).transpose();
      neg_hess.noalias() += hi * R.row(i).transpose() * R.row(i);
    }

    fit.iterations = iter;
    if (grad.lpNorm<Eigen::Infinity>() <= grad_tol) {
      // a flat gradient with extreme indices and perfect classification is
      // separation, not convergence: the MLE does not exist
      if (z.cwiseAbs().maxCoeff() > 15.0) {
        bool classified = true;
        for (Eigen::Index i = 0; i < n && classified; ++i)
          classified = (x[i] == 1) == (z[i] > 0.0);
        if (classified)
          throw EstimationError(
              "propensity fit did not converge: quasi-complete separation suspected "
              "(fitted probabilities numerically degenerate)");
      }
      fit.converged = true;
      fit.loglik = ll;
      return fit;
    }

    Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_hess);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw EstimationError("propensity fit: singular Hessian");
    const Eigen::VectorXd step = ldlt.solve(grad);

    double t = 1.0;
    double ll_new = loglik_at(fit.beta + t * step);
    while (!(ll_new > ll - 1e-14 * std::abs(ll)) && t > 1e-12) {
      t *= 0.5;
      ll_new = loglik_at(fit.beta + t * step);
    }
    if (t <= 1e-12)
      throw EstimationError("propensity fit did not converge: step search stalled");
    fit.beta += t * step;
    ll = ll_new;

    if (fit.beta.lpNorm<Eigen::Infinity>() > 1e3)
      throw EstimationError(
          "propensity fit did not converge: quasi-complete separation suspected "
          "(coefficient norm guard exceeded)");
  }
  throw EstimationError("propensity fit did not converge within 100 iterations");
}

double predict_propensity(const PropensityFit& fit,
                          const Eigen::Ref<const Eigen::VectorXd>& r_row, int x) {
  double z = r_row.dot(fit.beta);
  // keep probabilities strictly inside (0,1) in double precision
  const double zcap = fit.link == Link::probit ? 8.0 : 36.0;
  z = std::clamp(z, -zcap, zcap);
  const double f = link_cdf(fit.link, z);
  return x == 1 ? f : 1.0 - f;
}

QuantileProcessFit fit_quantile_process(const DesignMatrices& design,
                                        const Eigen::VectorXd& y,
                                        const Eigen::VectorXd& tau_grid,
                                        double eps_small) {
  const Eigen::Index g = tau_grid.size();
  if (g < 2) throw ConfigError("quantile grid needs at least two points");
  for (Eigen::Index j = 0; j < g; ++j) {
    if (tau_grid[j] <= 0.0 || tau_grid[j] >= 1.0)
      throw ConfigError("quantile grid must lie inside (0,1)");
    if (j > 0 && tau_grid[j] <= tau_grid[j - 1])
      throw ConfigError("quantile grid must be strictly increasing");
  }
  if (y.size() != design.qmat.rows())
    throw DataError("outcome length does not match design");

  QuantileProcessFit fit;
  fit.tau_grid = tau_grid;
  fit.eps_small = eps_small;
  fit.gamma.resize(g, design.d_q());
  fit.objective.resize(g);

  std::vector<int> warm;
  for (Eigen::Index j = 0; j < g; ++j) {
    const QrSolution sol =
        solve_quantile_lp(design.qmat, y, tau_grid[j], warm.empty() ? nullptr : &warm);
    fit.gamma.row(j) = sol.coef.transpose();
    fit.objective[j] = sol.objective;
    warm = sol.basis;
  }

  const double step0 = tau_grid[1] - tau_grid[0];
  fit.uniform_ = true;
  for (Eigen::Index j = 1; j + 1 < g; ++j)
    if (std::abs((tau_grid[j + 1] - tau_grid[j]) - step0) > 1e-12) {
      fit.uniform_ = false;
      break;
    }
  fit.grid_lo_ = tau_grid[0];
  fit.grid_step_ = step0;
  return fit;
}

Eigen::VectorXd eval_gamma(const QuantileProcessFit& fit, double u) {
  const double uc = fit.clamp(u);
  Eigen::Index j;
  double frac;
  fit.locate(uc, j, frac);
  if (frac == 0.0) return fit.gamma.row(j).transpose();
  if (frac == 1.0) return fit.gamma.row(j + 1).transpose();
  return ((1.0 - frac) * fit.gamma.row(j) + frac * fit.gamma.row(j + 1)).transpose();
}

Eigen::VectorXd gamma_derivative(const QuantileProcessFit& fit, double tau, double eta) {
  if (eta <= 0.0) throw ConfigError("derivative step must be positive");
  const double lo = std::max(fit.eps_small, fit.tau_grid[0]);
  const double hi = std::min(1.0 - fit.eps_small, fit.tau_grid[fit.tau_grid.size() - 1]);
  if (tau - eta < lo - 1e-12 || tau + eta > hi + 1e-12)
    throw ConfigError("derivative stencil leaves the quantile-process domain");
  return (eval_gamma(fit, tau + eta) - eval_gamma(fit, tau - eta)) / (2.0 * eta);
}

TuningParams TuningParams::defaults(Eigen::Index n, double eps) {
  TuningParams t;
  t.eps = eps;
  t.eps_small = eps / 2.0;
  t.eta = std::min(0.05 * std::pow(static_cast<double>(n), -0.25),
                   0.95 * (t.eps - t.eps_small));
  t.kappa = std::pow(static_cast<double>(n), -1.0 / 3.0);
  t.validate();
  return t;
}

void TuningParams::validate() const {
  if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("epsilon must lie in (0, 0.5)");
  if (!(eps_small > 0.0 && eps_small < eps))
    throw ConfigError("eps_small must lie in (0, epsilon)");
  if (!(eta > 0.0 && eta < eps - eps_small))
    throw ConfigError("eta must lie in (0, epsilon - eps_small)");
  if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
  if (!(tau_step > 0.0 && tau_step < 1.0)) throw ConfigError("invalid tau grid step");
  if (n_quad < 2) throw ConfigError("n_quad must be at least 2");
}

Eigen::VectorXd TuningParams::make_tau_grid() const {
  // uniform grid covering [eps_small, 1-eps_small]; when tau_step does not
  // divide the range, the spacing is adjusted to the nearest exact divisor
  const double lo = eps_small, hi = 1.0 - eps_small;
  const auto k = std::max<Eigen::Index>(
      2, static_cast<Eigen::Index>(std::round((hi - lo) / tau_step)));
  const double h = (hi - lo) / static_cast<double>(k);
  Eigen::VectorXd grid(k + 1);
  for (Eigen::Index j = 0; j <= k; ++j) grid[j] = lo + static_cast<double>(j) * h;
  grid[k] = hi;
  return grid;
}

ThetaHat fit_theta(const Sample& sample, std::shared_ptr<const DesignMatrices> design,
                   Link link, const TuningParams& tuning) {
  tuning.validate();
  ThetaHat theta;
  theta.eps = tuning.eps;
  theta.eps_small = tuning.eps_small;
  theta.design = design;
  theta.prop = fit_propensity(*design, sample.x, link);
  theta.qr = fit_quantile_process(*design, sample.y, tuning.make_tau_grid(),
                                  tuning.eps_small);
  return theta;
}

}  // namespace csens
