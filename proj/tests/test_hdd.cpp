#include <doctest.h>

#include <cmath>

#include "csens/hdd.hpp"
#include "test_helpers.hpp"

using namespace csens;

namespace {

ThetaHat smooth_theta(Eigen::Index n_rows, std::uint64_t seed, double eps = 0.05) {
  SubstreamRng rng(seed);
  Sample s;
  s.y.resize(n_rows);
  s.x.resize(n_rows);
  s.w.resize(n_rows, 1);
  s.names = {"w"};
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    s.w(i, 0) = rng.normal();
    s.x[i] = i % 2 == 0 ? 1 : 0;
    s.y[i] = rng.normal();
  }
  ThetaHat theta;
  theta.design = std::make_shared<DesignMatrices>(
      build_design(s, DesignSpec::linear({"w"})));
  theta.eps = eps;
  theta.eps_small = eps / 2.0;
  theta.prop.link = Link::logit;
  theta.prop.beta = Eigen::VectorXd(2);
  theta.prop.beta << 0.3, 0.5;
  theta.prop.converged = true;
  theta.qr = testing::tabulate_process(
      [](double tau) {
        Eigen::VectorXd v(3);
        v << 1.0 + std::sin(1.2 * tau), 0.9 + 0.2 * tau, -0.4 + 0.1 * tau;
        return v;
      },
      3, eps / 2.0, 0.005);
  return theta;
}

Sample rows_of(const ThetaHat&, Eigen::Index n_rows, std::uint64_t seed) {
  SubstreamRng rng(seed);
  Sample s;
  s.y.resize(n_rows);
  s.x.resize(n_rows);
  s.w.resize(n_rows, 1);
  s.names = {"w"};
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    s.w(i, 0) = 0.8 * rng.normal();
    s.x[i] = i % 2;
    s.y[i] = rng.normal();
  }
  return s;
}

Direction random_direction(const ThetaHat& theta, std::uint64_t seed) {
  SubstreamRng rng(seed);
  Direction dir;
  dir.h1.resize(theta.prop.beta.size());
  for (Eigen::Index j = 0; j < dir.h1.size(); ++j) dir.h1[j] = rng.normal();
  dir.h2.resize(theta.qr.gamma.rows(), theta.qr.gamma.cols());
  for (Eigen::Index j = 0; j < dir.h2.rows(); ++j) {
    const double tau = theta.qr.tau_grid[j];
    dir.h2(j, 0) = std::cos(3.0 * tau);
    dir.h2(j, 1) = 0.5 * tau;
    dir.h2(j, 2) = std::sin(2.0 * tau) - 0.2;
  }
  return dir;
}

double secant_t2(int x, double z_index, double r_dot_h1, double tau, double c,
                 double eps, double t) {
  const double l0 = likelihood(Link::logit, x, z_index);
  const double l1 = likelihood(Link::logit, x, z_index + t * r_dot_h1);
  return (s_index(SIndex::S2, tau, c, l1, eps) - s_index(SIndex::S2, tau, c, l0, eps)) / t;
}

double secant_t4(int x, double z_index, double r_dot_h1, double tau, double c,
                 double eps, double t) {
  const double l0 = likelihood(Link::logit, x, z_index);
  const double l1 = likelihood(Link::logit, x, z_index + t * r_dot_h1);
  return (s_index(SIndex::S4, tau, c, l1, eps) - s_index(SIndex::S4, tau, c, l0, eps)) / t;
}

}  // namespace

TEST_CASE("l_beta_ratio closed forms") {
  Eigen::VectorXd r(2);
  r << 1.0, 2.0;
  SUBCASE("logit at index zero, treated") {
    const Eigen::VectorXd v = l_beta_ratio(Link::logit, 1, 0.0, r);
    CHECK(v[0] == doctest::Approx(1.0).epsilon(1e-12));  // 0.25 / 0.25
    CHECK(v[1] == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("probit at index zero, untreated") {
    const Eigen::VectorXd v = l_beta_ratio(Link::probit, 0, 0.0, r);
    CHECK(v[0] == doctest::Approx(-1.5957691216).epsilon(1e-8));
  }
  SUBCASE("sign flips with the arm") {
    const double a = l_beta_ratio_scalar(Link::logit, 1, 0.7);
    const double b = l_beta_ratio_scalar(Link::logit, 0, 0.7);
    CHECK(a > 0.0);
    CHECK(b < 0.0);
  }
}

TEST_CASE("t1 case values") {
  const double eps = 0.05, kappa = 1e-6;
  SUBCASE("zero at c=0 in the interior") {
    CHECK(t1_case(0.5, 0.0, eps, kappa, 0.5, 1.3) == 0.0);
    CHECK(t3_case(0.5, 0.0, eps, kappa, 0.5, 1.3) == 0.0);
  }
  SUBCASE("ratio arm strictly smallest") {
    // tau/L < tau + (c/L) m and < 1-eps: tau=0.6, L=0.8, c=0.5
    const double tau = 0.6, L = 0.8, c = 0.5, rho = 0.9;
    REQUIRE(tau / L < std::min(tau + (c / L) * 0.4, 1.0 - eps) - kappa);
    CHECK(t1_case(tau, c, eps, kappa, L, rho) == doctest::Approx(-tau * rho));
  }
  SUBCASE("c arm strictly smallest") {
    const double tau = 0.3, L = 0.6, c = 0.2, rho = -0.7;
    REQUIRE(tau + (c / L) * 0.3 < std::min(tau / L, 1.0 - eps) - kappa);
    CHECK(t1_case(tau, c, eps, kappa, L, rho) ==
          doctest::Approx(-c * 0.3 * rho).epsilon(1e-12));
  }
  SUBCASE("clamp arm smallest gives zero") {
    const double tau = 0.9, L = 0.4, c = 0.9;
    REQUIRE(1.0 - eps < std::min(tau + (c / L) * 0.1, tau / L) - kappa);
    CHECK(t1_case(tau, c, eps, kappa, L, 1.0) == 0.0);
  }
  SUBCASE("lower mirror: escape arm strictly largest") {
    // (tau-1)/L + 1 > max(tau - (c/L) m, eps): tau=0.7, L=0.9
    const double tau = 0.7, L = 0.9, c = 0.5, rho = 1.1;
    REQUIRE((tau - 1.0) / L + 1.0 > std::max(tau - (c / L) * 0.3, eps) + kappa);
    CHECK(t3_case(tau, c, eps, kappa, L, rho) ==
          doctest::Approx((1.0 - tau) * rho).epsilon(1e-12));
  }
}

TEST_CASE("t2 and t4 gates") {
  const double eps = 0.05;
  SUBCASE("far above eps, t2 equals t1") {
    const double v1 = t1_case(0.5, 0.3, eps, 1e-6, 0.6, 0.8);
    const double v2 = t2_case(0.5, 0.3, eps, 1e-6, 0.6, 0.8);
    CHECK(v1 == v2);
  }
  SUBCASE("inside the eps band, negative values clamp to zero") {
    // tau=0.05, c=0.2, L=0.9: S1 = 0.0556 is within kappa=0.01 of eps and
    // the unclamped derivative is negative for rho > 0
    const double kappa = 0.01, tau = 0.05, c = 0.2, L = 0.9, rho = 1.0;
    REQUIRE(std::abs(s_index(SIndex::S1, tau, c, L, eps) - eps) <= kappa);
    REQUIRE(t1_case(tau, c, eps, kappa, L, rho) < 0.0);
    CHECK(t2_case(tau, c, eps, kappa, L, rho) == 0.0);
  }
  SUBCASE("below the band t2 vanishes") {
    CHECK(t2_case(0.01, 0.0, eps, 1e-6, 0.5, 3.0) == 0.0);
  }
  SUBCASE("t4 mirrors at the upper clamp") {
    const double kappa = 0.01, tau = 0.95, c = 0.2, L = 0.9, rho = 1.0;
    REQUIRE(std::abs(s_index(SIndex::S3, tau, c, L, eps) - (1.0 - eps)) <= kappa);
    REQUIRE(t3_case(tau, c, eps, kappa, L, rho) > 0.0);
    CHECK(t4_case(tau, c, eps, kappa, L, rho) == 0.0);
  }
}

TEST_CASE("exactly one pure case can be active") {
  SubstreamRng rng(23);
  for (int rep = 0; rep < 2000; ++rep) {
    const double tau = 0.01 + 0.98 * rng.uniform01();
    const double c = rng.uniform01();
    const double L = 0.05 + 0.9 * rng.uniform01();
    const double eps = 0.05;
    const double kappa = rng.uniform01() * 0.05;
    const double m = std::min(tau, 1.0 - tau);
    const double a = tau + (c / L) * m, b = tau / L, ce = 1.0 - eps;
    int pure = 0;
    if (a < std::min(b, ce) - kappa) ++pure;
    if (b < std::min(a, ce) - kappa) ++pure;
    if (ce < std::min(a, b) - kappa) ++pure;
    CHECK(pure <= 1);
    const double a2 = tau - (c / L) * m, b2 = (tau - 1.0) / L + 1.0;
    pure = 0;
    if (a2 > std::max(b2, eps) + kappa) ++pure;
    if (b2 > std::max(a2, eps) + kappa) ++pure;
    if (eps > std::max(a2, b2) + kappa) ++pure;
    CHECK(pure <= 1);
  }
}

TEST_CASE("positive homogeneity in the direction") {
  SubstreamRng rng(29);
  for (int rep = 0; rep < 200; ++rep) {
    const double tau = 0.02 + 0.96 * rng.uniform01();
    const double c = rng.uniform01();
    const double L = 0.1 + 0.8 * rng.uniform01();
    const double rho = rng.normal();
    const double lam = 0.1 + 3.0 * rng.uniform01();
    const double kappa = 1e-3;
    CHECK(t1_case(tau, c, 0.05, kappa, L, lam * rho) ==
          doctest::Approx(lam * t1_case(tau, c, 0.05, kappa, L, rho)).epsilon(1e-12));
    CHECK(t3_case(tau, c, 0.05, kappa, L, lam * rho) ==
          doctest::Approx(lam * t3_case(tau, c, 0.05, kappa, L, rho)).epsilon(1e-12));
  }
}

TEST_CASE("t2/t4 agree with finite-difference secants at clean points") {
  SubstreamRng rng(37);
  const double eps = 0.05, kappa = 1e-5, t = 1e-6;
  int checked = 0;
  for (int rep = 0; rep < 400 && checked < 120; ++rep) {
    const int x = rng.bounded(2) == 0 ? 0 : 1;
    const double z = 2.0 * rng.normal();
    const double tau = 0.02 + 0.96 * rng.uniform01();
    const double c = rng.uniform01();
    const double rh = rng.normal() * 2.0;
    const double L = likelihood(Link::logit, x, z);
    const double m = std::min(tau, 1.0 - tau);
    const double a = tau + (c / L) * m, b = tau / L;
    const double a2 = tau - (c / L) * m, b2 = (tau - 1.0) / L + 1.0;
    const double gap = std::min({std::abs(a - b), std::abs(a - (1.0 - eps)),
                                 std::abs(b - (1.0 - eps)),
                                 std::abs(s_index(SIndex::S1, tau, c, L, eps) - eps),
                                 std::abs(a2 - b2), std::abs(a2 - eps),
                                 std::abs(b2 - eps),
                                 std::abs(s_index(SIndex::S3, tau, c, L, eps) - (1.0 - eps))});
    if (gap <= 10 * kappa) continue;
    ++checked;
    const double rho = l_beta_ratio_scalar(Link::logit, x, z) * rh;
    const double an2 = t2_case(tau, c, eps, kappa, L, rho);
    const double nu2 = secant_t2(x, z, rh, tau, c, eps, t);
    CHECK(std::abs(an2 - nu2) <= std::max(1e-6, 1e-3 * std::abs(an2)));
    const double an4 = t4_case(tau, c, eps, kappa, L, rho);
    const double nu4 = secant_t4(x, z, rh, tau, c, eps, t);
    CHECK(std::abs(an4 - nu4) <= std::max(1e-6, 1e-3 * std::abs(an4)));
  }
  CHECK(checked >= 100);
}

TEST_CASE("gamma1_hdd structure") {
  ThetaHat theta = smooth_theta(8, 101);
  TuningParams tuning = TuningParams::defaults(400);
  tuning.kappa = 1e-3;
  tuning.n_quad = 200;
  Eigen::RowVectorXd w(1);
  w << 0.3;

  SUBCASE("zero direction maps to zero") {
    Direction zero;
    zero.h1 = Eigen::VectorXd::Zero(2);
    zero.h2 = Eigen::MatrixXd::Zero(theta.qr.gamma.rows(), 3);
    const HddValue v = gamma1_hdd(1, w, 0.5, theta, zero, tuning, 0.3);
    CHECK(v.upper == 0.0);
    CHECK(v.lower == 0.0);
  }
  SUBCASE("at c=0 only the h2 term survives") {
    const Direction dir = random_direction(theta, 7);
    const HddValue v = gamma1_hdd(1, w, 0.5, theta, dir, tuning, 0.0);
    const Eigen::VectorXd q = theta.design->q_row(1, w);
    Eigen::Index j;
    double frac;
    theta.qr.locate(0.5, j, frac);
    REQUIRE(frac == 0.0);  // 0.5 is a grid point
    CHECK(v.upper == doctest::Approx(dir.h2.row(j).dot(q)).epsilon(1e-13));
    CHECK(v.lower == doctest::Approx(dir.h2.row(j).dot(q)).epsilon(1e-13));
  }
  SUBCASE("additive in h2 for fixed h1") {
    Direction d1 = random_direction(theta, 11);
    Direction d2 = random_direction(theta, 13);
    d2.h1 = d1.h1;
    Direction sum = d1;
    sum.h2 = d1.h2 + d2.h2;
    const HddValue v1 = gamma1_hdd(1, w, 0.4, theta, d1, tuning, 0.3);
    const HddValue v2 = gamma1_hdd(1, w, 0.4, theta, d2, tuning, 0.3);
    const HddValue vs = gamma1_hdd(1, w, 0.4, theta, sum, tuning, 0.3);
    Direction base = d1;
    base.h2.setZero();
    const HddValue vb = gamma1_hdd(1, w, 0.4, theta, base, tuning, 0.3);
    CHECK(vs.upper == doctest::Approx(v1.upper + v2.upper - vb.upper).epsilon(1e-11));
    CHECK(vs.lower == doctest::Approx(v1.lower + v2.lower - vb.lower).epsilon(1e-11));
  }
}

TEST_CASE("gamma2_hdd quadrature") {
  ThetaHat theta = smooth_theta(8, 103);
  TuningParams tuning = TuningParams::defaults(400);
  tuning.kappa = 1e-4;
  Eigen::RowVectorXd w(1);
  w << -0.2;

  SUBCASE("zero direction integrates to zero") {
    Direction zero;
    zero.h1 = Eigen::VectorXd::Zero(2);
    zero.h2 = Eigen::MatrixXd::Zero(theta.qr.gamma.rows(), 3);
    tuning.n_quad = 128;
    const HddValue v = gamma2_hdd(1, w, theta, zero, tuning, 0.4);
    CHECK(v.upper == 0.0);
    CHECK(v.lower == 0.0);
  }
  SUBCASE("constant h2 with h1 = 0 integrates to the constant") {
    Direction dir;
    dir.h1 = Eigen::VectorXd::Zero(2);
    dir.h2 = Eigen::MatrixXd::Zero(theta.qr.gamma.rows(), 3);
    dir.h2.col(0).setConstant(2.0);
    dir.h2.col(1).setConstant(-1.0);
    tuning.n_quad = 256;
    const Eigen::VectorXd q = theta.design->q_row(1, w);
    const double expect = 2.0 * q[0] - 1.0 * q[1];
    const HddValue v = gamma2_hdd(1, w, theta, dir, tuning, 0.4);
    CHECK(v.upper == doctest::Approx(expect).epsilon(1e-13));
    CHECK(v.lower == doctest::Approx(expect).epsilon(1e-13));
  }
  SUBCASE("quadrature refinement is stable") {
    const Direction dir = random_direction(theta, 17);
    tuning.n_quad = 500;
    const HddValue coarse = gamma2_hdd(0, w, theta, dir, tuning, 0.25);
    tuning.n_quad = 1000;
    const HddValue fine = gamma2_hdd(0, w, theta, dir, tuning, 0.25);
    const double scale = 1.0 + std::abs(fine.upper) + std::abs(fine.lower);
    CHECK(std::abs(coarse.upper - fine.upper) <= 1e-4 * scale);
    CHECK(std::abs(coarse.lower - fine.lower) <= 1e-4 * scale);
  }
}

TEST_CASE("gamma3_hdd") {
  ThetaHat theta = smooth_theta(8, 107);
  TuningParams tuning = TuningParams::defaults(400);
  tuning.kappa = 1e-4;
  tuning.n_quad = 200;
  const Sample rows = rows_of(theta, 12, 51);

  SUBCASE("one-row sample equals gamma2_hdd") {
    Sample one = rows;
    one.y = rows.y.head(1);
    one.x = rows.x.head(1);
    one.w = rows.w.topRows(1);
    const Direction dir = random_direction(theta, 19);
    const HddValue v3 = gamma3_hdd(1, one, theta, dir, tuning, 0.3);
    const HddValue v2 = gamma2_hdd(1, rows.w.row(0), theta, dir, tuning, 0.3);
    CHECK(v3.upper == v2.upper);
    CHECK(v3.lower == v2.lower);
  }
  SUBCASE("additive in the full direction away from the kappa bands") {
    // propensities well inside (0,1) and kappa tiny: the Hadamard-
    // differentiable regime, so the derivative is linear in h
    TuningParams tight = tuning;
    tight.kappa = 1e-6;
    const Direction d1 = random_direction(theta, 29);
    const Direction d2 = random_direction(theta, 31);
    Direction sum;
    sum.h1 = d1.h1 + d2.h1;
    sum.h2 = d1.h2 + d2.h2;
    const double c = 0.3;
    const HddValue v1 = gamma3_hdd(1, rows, theta, d1, tight, c);
    const HddValue v2 = gamma3_hdd(1, rows, theta, d2, tight, c);
    const HddValue vs = gamma3_hdd(1, rows, theta, sum, tight, c);
    const double scale = 1.0 + std::abs(vs.upper) + std::abs(vs.lower);
    CHECK(std::abs(vs.upper - v1.upper - v2.upper) <= 1e-4 * scale);
    CHECK(std::abs(vs.lower - v1.lower - v2.lower) <= 1e-4 * scale);
  }

  SUBCASE("matches the numerical directional derivative of the bound map") {
    const Direction dir = random_direction(theta, 23);
    const double c = 0.35, t = 1e-5;
    const HddValue analytic = gamma3_hdd(1, rows, theta, dir, tuning, c);

    ThetaHat bumped = theta;
    bumped.prop.beta = theta.prop.beta + t * dir.h1;
    bumped.qr.gamma = theta.qr.gamma + t * dir.h2;
    const BoundPair base = mean_bounds(1, rows, theta, c, tuning.n_quad);
    const BoundPair bump = mean_bounds(1, rows, bumped, c, tuning.n_quad);
    const double nu_up = (bump.upper - base.upper) / t;
    const double nu_lo = (bump.lower - base.lower) / t;
    // tolerance covers the gap between the eta-window derivative of the
    // tabulated path and the local interpolation slope seen by the secant
    CHECK(std::abs(analytic.upper - nu_up) <=
          std::max(5e-4, 5e-3 * std::abs(analytic.upper)));
    CHECK(std::abs(analytic.lower - nu_lo) <=
          std::max(5e-4, 5e-3 * std::abs(analytic.lower)));
  }
}
