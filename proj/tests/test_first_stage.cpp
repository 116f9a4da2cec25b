#include <doctest.h>

#include <cmath>

#include "csens/first_stage.hpp"
#include "test_helpers.hpp"

using namespace csens;

namespace {

// n rows, intercept-only design, k treated.
struct InterceptOnly {
  Sample sample;
  DesignMatrices design;
};

InterceptOnly intercept_only(Eigen::Index n, int treated) {
  InterceptOnly f;
  f.sample.y = Eigen::VectorXd::LinSpaced(n, 0.0, 1.0);
  f.sample.x = Eigen::VectorXi::Zero(n);
  for (int i = 0; i < treated; ++i) f.sample.x[i] = 1;
  f.sample.w = Eigen::MatrixXd::Zero(n, 1);
  f.sample.names = {"w"};
  DesignSpec spec;
  spec.q_terms.push_back(Term{});
  spec.r_terms.push_back(Term{});
  f.design = build_design(f.sample, spec);
  return f;
}

}  // namespace

TEST_CASE("intercept-only logit MLE is the log odds") {
  const auto f = intercept_only(10, 3);
  const PropensityFit fit = fit_propensity(f.design, f.sample.x, Link::logit);
  CHECK(fit.converged);
  CHECK(fit.beta[0] == doctest::Approx(std::log(3.0 / 7.0)).epsilon(1e-8));
}

TEST_CASE("intercept-only probit MLE at balance is zero") {
  const auto f = intercept_only(10, 5);
  const PropensityFit fit = fit_propensity(f.design, f.sample.x, Link::probit);
  CHECK(std::abs(fit.beta[0]) < 1e-8);
}

TEST_CASE("binary covariate logit reproduces cell rates") {
  Sample s;
  const Eigen::Index n = 16;
  s.y = Eigen::VectorXd::Zero(n);
  s.x.resize(n);
  s.w.resize(n, 1);
  s.names = {"w"};
  // cell w=0: 2 of 8 treated; cell w=1: 6 of 8 treated
  for (Eigen::Index i = 0; i < n; ++i) {
    s.w(i, 0) = i < 8 ? 0.0 : 1.0;
    s.x[i] = (i < 8 ? i < 2 : i < 14) ? 1 : 0;
  }
  const DesignMatrices d = build_design(s, DesignSpec::linear({"w"}));
  const PropensityFit fit = fit_propensity(d, s.x, Link::logit);
  const double p0 = predict_propensity(fit, d.r_row(s.w.row(0)), 1);
  const double p1 = predict_propensity(fit, d.r_row(s.w.row(8)), 1);
  CHECK(p0 == doctest::Approx(0.25).epsilon(1e-8));
  CHECK(p1 == doctest::Approx(0.75).epsilon(1e-8));
}

TEST_CASE("predict_propensity basics") {
  PropensityFit fit;
  fit.link = Link::logit;
  fit.beta = Eigen::VectorXd::Zero(1);
  fit.converged = true;
  Eigen::VectorXd r(1);
  r << 1.0;
  CHECK(predict_propensity(fit, r, 1) == doctest::Approx(0.5));
  CHECK(predict_propensity(fit, r, 0) == doctest::Approx(0.5));
  CHECK(predict_propensity(fit, r, 1) + predict_propensity(fit, r, 0) ==
        doctest::Approx(1.0));

  fit.link = Link::probit;
  fit.beta[0] = 1.959964;
  CHECK(predict_propensity(fit, r, 1) == doctest::Approx(0.975).epsilon(1e-6));
}

TEST_CASE("separation raises an estimation error") {
  Sample s;
  const Eigen::Index n = 10;
  s.y = Eigen::VectorXd::Zero(n);
  s.x.resize(n);
  s.w.resize(n, 1);
  s.names = {"w"};
  for (Eigen::Index i = 0; i < n; ++i) {
    s.w(i, 0) = i < 5 ? -1.0 : 1.0;
    s.x[i] = i < 5 ? 0 : 1;  // perfectly separated
  }
  const DesignMatrices d = build_design(s, DesignSpec::linear({"w"}));
  CHECK_THROWS_AS(fit_propensity(d, s.x, Link::logit), EstimationError);
}

TEST_CASE("quantile process fit on an exact linear model") {
  const auto f = testing::fit_synthetic(60, 42);
  Sample s = f.sample;
  s.y = Eigen::VectorXd::Zero(s.n());
  for (Eigen::Index i = 0; i < s.n(); ++i) s.y[i] = 5.0 + 3.0 * s.w(i, 0);
  const auto grid = f.tuning.make_tau_grid();
  DesignSpec spec;
  spec.q_terms.push_back(Term{});
  spec.q_terms.push_back(Term{false, "w", 1});
  spec.r_terms.push_back(Term{});
  const DesignMatrices d = build_design(s, spec);
  const QuantileProcessFit fit =
      fit_quantile_process(d, s.y, grid, f.tuning.eps_small);
  for (Eigen::Index j = 0; j < grid.size(); j += 37) {
    CHECK(fit.gamma(j, 0) == doctest::Approx(5.0).epsilon(1e-9));
    CHECK(fit.gamma(j, 1) == doctest::Approx(3.0).epsilon(1e-9));
  }
}

TEST_CASE("intercept-only quantile path is monotone in tau") {
  SubstreamRng rng(5);
  Sample s;
  s.y.resize(40);
  for (Eigen::Index i = 0; i < 40; ++i) s.y[i] = rng.normal() * 2.0 + 1.0;
  s.x = Eigen::VectorXi::Zero(40);
  s.x.head(20).setOnes();
  s.w = Eigen::MatrixXd::Zero(40, 1);
  s.names = {"w"};
  DesignSpec spec;
  spec.q_terms.push_back(Term{});
  spec.r_terms.push_back(Term{});
  const DesignMatrices d = build_design(s, spec);
  Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(39, 0.025, 0.975);
  const QuantileProcessFit fit = fit_quantile_process(d, s.y, grid, 0.025);
  for (Eigen::Index j = 1; j < grid.size(); ++j)
    CHECK(fit.gamma(j, 0) >= fit.gamma(j - 1, 0) - 1e-12);
}

TEST_CASE("eval_gamma interpolation and clamping") {
  const auto fit = testing::tabulate_process(
      [](double tau) {
        Eigen::VectorXd v(2);
        v << tau, 2.0 * tau;
        return v;
      },
      2, 0.025, 0.05);

  SUBCASE("grid point is exact") {
    const Eigen::VectorXd v = eval_gamma(fit, fit.tau_grid[3]);
    CHECK(v[0] == fit.gamma(3, 0));
    CHECK(v[1] == fit.gamma(3, 1));
  }
  SUBCASE("midpoint averages the bracketing rows") {
    const double mid = 0.5 * (fit.tau_grid[2] + fit.tau_grid[3]);
    const Eigen::VectorXd v = eval_gamma(fit, mid);
    CHECK(v[0] == doctest::Approx(0.5 * (fit.gamma(2, 0) + fit.gamma(3, 0))).epsilon(1e-14));
  }
  SUBCASE("values below eps_small clamp") {
    const Eigen::VectorXd v = eval_gamma(fit, 0.001);
    CHECK(v[0] == fit.gamma(0, 0));
  }
}

TEST_CASE("gamma_derivative on tabulated functions") {
  SUBCASE("affine path gives the exact slope") {
    const auto fit = testing::tabulate_process(
        [](double tau) {
          Eigen::VectorXd v(1);
          v << 3.0 + 2.0 * tau;
          return v;
        },
        1, 0.025, 0.005);
    const Eigen::VectorXd d = gamma_derivative(fit, 0.5, 0.01);
    CHECK(d[0] == doctest::Approx(2.0).epsilon(1e-10));
  }
  SUBCASE("constant path gives zero") {
    const auto fit = testing::tabulate_process(
        [](double) {
          Eigen::VectorXd v(1);
          v << 7.0;
          return v;
        },
        1, 0.025, 0.005);
    CHECK(gamma_derivative(fit, 0.3, 0.02)[0] == doctest::Approx(0.0));
  }
  SUBCASE("quadratic path matches the analytic derivative") {
    const auto fit = testing::tabulate_process(
        [](double tau) {
          Eigen::VectorXd v(1);
          v << tau * tau;
          return v;
        },
        1, 0.025, 0.001);
    CHECK(gamma_derivative(fit, 0.5, 0.01)[0] == doctest::Approx(1.0).epsilon(1e-4));
  }
  SUBCASE("stencil outside the domain throws") {
    const auto fit = testing::tabulate_process(
        [](double tau) {
          Eigen::VectorXd v(1);
          v << tau;
          return v;
        },
        1, 0.025, 0.005);
    CHECK_THROWS_AS(gamma_derivative(fit, 0.03, 0.02), ConfigError);
  }
}

TEST_CASE("fits are deterministic") {
  const auto f1 = testing::fit_synthetic(80, 123);
  const auto f2 = testing::fit_synthetic(80, 123);
  CHECK(f1.theta.prop.beta == f2.theta.prop.beta);
  CHECK(f1.theta.qr.gamma == f2.theta.qr.gamma);
}

TEST_CASE("tuning defaults and validation") {
  const TuningParams t = TuningParams::defaults(445);
  CHECK(t.eps == doctest::Approx(0.05));
  CHECK(t.eps_small == doctest::Approx(0.025));
  CHECK(t.eta == doctest::Approx(0.05 * std::pow(445.0, -0.25)));
  CHECK(t.kappa == doctest::Approx(std::pow(445.0, -1.0 / 3.0)));

  TuningParams bad = t;
  bad.eta = 0.03;  // >= eps - eps_small
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  // tiny n: the default eta is capped to keep the stencil inside the domain
  const TuningParams tiny = TuningParams::defaults(5);
  CHECK(tiny.eta < tiny.eps - tiny.eps_small);
}

TEST_CASE("tau grid hits both endpoints") {
  const TuningParams t = TuningParams::defaults(500);
  const Eigen::VectorXd grid = t.make_tau_grid();
  CHECK(grid[0] == doctest::Approx(0.025));
  CHECK(grid[grid.size() - 1] == doctest::Approx(0.975));
  CHECK(grid.size() == 191);
}
