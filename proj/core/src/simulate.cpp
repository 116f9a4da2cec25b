#include "csens/simulate.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "csens/parallel.hpp"

namespace csens {

namespace {

// DGP parameters shared by both designs: Y = 1 + X + W + N(0,1).
constexpr double kYIntercept = 1.0;
constexpr double kTreatEffect = 1.0;
constexpr double kCovEffect = 1.0;

// linear_normal propensity: logit(0.2 + 0.6 w). discrete_mass propensity:
// 0.4 + 0.2 w for w in {0,1}.
constexpr double kBeta0 = 0.2;
constexpr double kBeta1 = 0.6;

double norm_quantile(double u) {
  static const boost::math::normal_distribution<> kStdNormal;
  return boost::math::quantile(kStdNormal, u);
}

double norm_pdf(double z) {
  return 0.3989422804014326779 * std::exp(-0.5 * z * z);
}

double true_propensity(DgpId id, double w) {
  if (id == DgpId::linear_normal)
    return 1.0 / (1.0 + std::exp(-(kBeta0 + kBeta1 * w)));
  return 0.4 + 0.2 * w;
}

// Exact integral of norm_quantile(S(tau)) over [a,b] where S is linear there:
// the antiderivative of the standard normal quantile is -pdf(quantile(u)).
double segment_integral(double a, double b, double ua, double ub) {
  const double beta = (ub - ua) / (b - a);
  if (std::abs(beta) < 1e-13) return (b - a) * norm_quantile(0.5 * (ua + ub));
  return (norm_pdf(norm_quantile(ua)) - norm_pdf(norm_quantile(ub))) / beta;
}

// Adaptive exact integration of norm_quantile(S(tau)) for piecewise-linear S.
template <typename F>
double integrate_piecewise(const F& s, double a, double b, double ua, double ub,
                           int depth) {
  const double mid = 0.5 * (a + b);
  const double um = s(mid);
  if (depth <= 0 || std::abs(um - 0.5 * (ua + ub)) < 1e-12)
    return segment_integral(a, mid, ua, um) + segment_integral(mid, b, um, ub);
  return integrate_piecewise(s, a, mid, ua, um, depth - 1) +
         integrate_piecewise(s, mid, b, um, ub, depth - 1);
}

double integral_q_s2(double p, double c, double eps) {
  auto s = [&](double tau) { return s_index(SIndex::S2, tau, c, p, eps); };
  return integrate_piecewise(s, 1e-12, 1.0 - 1e-12, s(1e-12), s(1.0 - 1e-12), 40);
}

double integral_q_s4(double p, double c, double eps) {
  auto s = [&](double tau) { return s_index(SIndex::S4, tau, c, p, eps); };
  return integrate_piecewise(s, 1e-12, 1.0 - 1e-12, s(1e-12), s(1.0 - 1e-12), 40);
}

// CATE bounds at covariate value w: the linear part cancels to kTreatEffect,
// leaving the quantile-tail integrals.
double cate_upper_true(DgpId id, double w, double c, double eps) {
  const double p1 = true_propensity(id, w);
  return kTreatEffect + integral_q_s2(p1, c, eps) - integral_q_s4(1.0 - p1, c, eps);
}

double cate_lower_true(DgpId id, double w, double c, double eps) {
  const double p1 = true_propensity(id, w);
  return kTreatEffect + integral_q_s4(p1, c, eps) - integral_q_s2(1.0 - p1, c, eps);
}

}  // namespace

DgpId parse_dgp(const std::string& name) {
  if (name == "linear_normal") return DgpId::linear_normal;
  if (name == "discrete_mass") return DgpId::discrete_mass;
  throw ConfigError("unknown DGP '" + name + "' (try linear_normal or discrete_mass)");
}

std::string dgp_name(DgpId id) {
  return id == DgpId::linear_normal ? "linear_normal" : "discrete_mass";
}

Sample generate_dgp(DgpId id, Eigen::Index n, SubstreamRng& rng) {
  Sample s;
  s.y.resize(n);
  s.x.resize(n);
  s.w.resize(n, 1);
  s.names = {"w"};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w =
        id == DgpId::linear_normal ? rng.normal() : (rng.uniform01() < 0.5 ? 0.0 : 1.0);
    const int x = rng.uniform01() < true_propensity(id, w) ? 1 : 0;
    const double y = kYIntercept + kTreatEffect * x + kCovEffect * w + rng.normal();
    s.w(i, 0) = w;
    s.x[i] = x;
    s.y[i] = y;
  }
  return s;
}

DesignSpec dgp_design_spec() { return DesignSpec::linear({"w"}); }

BoundPair true_ate_bounds(DgpId id, double c, double eps) {
  if (id == DgpId::discrete_mass) {
    BoundPair out;
    out.upper = 0.5 * (cate_upper_true(id, 0.0, c, eps) + cate_upper_true(id, 1.0, c, eps));
    out.lower = 0.5 * (cate_lower_true(id, 0.0, c, eps) + cate_lower_true(id, 1.0, c, eps));
    return out;
  }
  // E_W over N(0,1) by midpoint quadrature on [-8, 8].
  constexpr int kPoints = 8000;
  const double lo = -8.0, hi = 8.0;
  const double h = (hi - lo) / kPoints;
  double up = 0.0, lw = 0.0, mass = 0.0;
  for (int i = 0; i < kPoints; ++i) {
    const double w = lo + (i + 0.5) * h;
    const double weight = norm_pdf(w) * h;
    up += weight * cate_upper_true(id, w, c, eps);
    lw += weight * cate_lower_true(id, w, c, eps);
    mass += weight;
  }
  BoundPair out;
  out.upper = up / mass;
  out.lower = lw / mass;
  return out;
}

void SimConfig::apply_defaults() {
  if (c_grid.size() == 0) {
    c_grid.resize(21);
    for (int k = 0; k < 21; ++k) c_grid[k] = k / 20.0;
  }
  if (eval_c.size() == 0) {
    eval_c.resize(3);
    eval_c << 0.0, 0.05, 0.1;
  }
}

SimResult run_simulation(const SimConfig& raw) {
  SimConfig cfg = raw;
  cfg.apply_defaults();
  if (cfg.reps < 1) throw ConfigError("simulation needs at least 1 replication");

  const Eigen::Index kk = cfg.c_grid.size();
  SimResult res;
  res.c_grid = cfg.c_grid;
  res.eval_c = cfg.eval_c;
  res.reps = cfg.reps;
  res.true_lower.resize(kk);
  res.true_upper.resize(kk);
  for (Eigen::Index k = 0; k < kk; ++k) {
    const BoundPair truth = true_ate_bounds(cfg.dgp, cfg.c_grid[k], cfg.eps);
    res.true_lower[k] = truth.lower;
    res.true_upper[k] = truth.upper;
  }

  std::vector<Eigen::Index> eval_idx;
  for (Eigen::Index j = 0; j < cfg.eval_c.size(); ++j) {
    Eigen::Index found = -1;
    for (Eigen::Index k = 0; k < kk; ++k)
      if (std::abs(cfg.c_grid[k] - cfg.eval_c[j]) < 1e-12) found = k;
    if (found < 0) throw ConfigError("eval_c value not on the c grid");
    eval_idx.push_back(found);
  }

  TuningParams tuning = TuningParams::defaults(cfg.n, cfg.eps);
  tuning.tau_step = cfg.tau_step;
  tuning.n_quad = cfg.n_quad;
  tuning.validate();

  std::vector<std::vector<char>> covered_pw(
      eval_idx.size(), std::vector<char>(static_cast<std::size_t>(cfg.reps), 0));
  std::vector<char> covered_un(static_cast<std::size_t>(cfg.reps), 0);
  std::vector<std::vector<char>> warned(
      static_cast<std::size_t>(kk), std::vector<char>(static_cast<std::size_t>(cfg.reps), 0));

  Estimand ate;
  ate.kind = Estimand::Kind::ate;

  auto rep_work = [&](int r) {
    SubstreamRng gen(cfg.seed, static_cast<std::uint64_t>(r));
    const Sample sample = generate_dgp(cfg.dgp, cfg.n, gen);
    auto design = std::make_shared<DesignMatrices>(build_design(sample, dgp_design_spec()));
    const ThetaHat theta = fit_theta(sample, design, Link::logit, tuning);

    const BoundCurve curve = bound_curve(ate, sample, theta, cfg.c_grid, cfg.n_quad);
    const BoundCurve mono = rearrange_monotone(curve);

    BootstrapConfig bcfg;
    bcfg.draws = cfg.draws;
    bcfg.seed = mix_seed(cfg.seed ^ 0x9D2C5680ULL, static_cast<std::uint64_t>(r));
    bcfg.mode = cfg.mode;
    bcfg.alpha = cfg.alpha;
    bcfg.tuning = tuning;
    bcfg.threads = 1;
    const BootstrapDraws draws =
        run_bootstrap(sample, theta, Link::logit, bcfg, {ate}, cfg.c_grid);

    const ConfidenceBand pw = pointwise_band(curve, draws.draws[0], cfg.alpha, cfg.n);
    const ConfidenceBand un = uniform_band(mono, draws.draws[0], cfg.alpha, cfg.n);

    for (std::size_t j = 0; j < eval_idx.size(); ++j) {
      const auto k = static_cast<std::size_t>(eval_idx[j]);
      covered_pw[j][static_cast<std::size_t>(r)] =
          pw.lb[k] <= res.true_lower[eval_idx[j]] + 1e-10 &&
          pw.ub[k] >= res.true_upper[eval_idx[j]] - 1e-10;
    }
    bool all = true;
    for (Eigen::Index k = 0; k < kk; ++k) {
      if (!(un.lb[static_cast<std::size_t>(k)] <= res.true_lower[k] + 1e-10 &&
            un.ub[static_cast<std::size_t>(k)] >= res.true_upper[k] - 1e-10))
        all = false;
      warned[static_cast<std::size_t>(k)][static_cast<std::size_t>(r)] =
          draws.mass_point_fraction[k] >= kMassPointWarnFraction;
    }
    covered_un[static_cast<std::size_t>(r)] = all;
  };

  parallel_for(cfg.reps, cfg.threads, rep_work);

  res.pointwise_coverage.resize(static_cast<Eigen::Index>(eval_idx.size()));
  for (std::size_t j = 0; j < eval_idx.size(); ++j) {
    int cnt = 0;
    for (char v : covered_pw[j]) cnt += v;
    res.pointwise_coverage[static_cast<Eigen::Index>(j)] =
        static_cast<double>(cnt) / cfg.reps;
  }
  int cnt = 0;
  for (char v : covered_un) cnt += v;
  res.uniform_coverage = static_cast<double>(cnt) / cfg.reps;

  res.mass_warning_rate.resize(kk);
  for (Eigen::Index k = 0; k < kk; ++k) {
    int wc = 0;
    for (char v : warned[static_cast<std::size_t>(k)]) wc += v;
    res.mass_warning_rate[k] = static_cast<double>(wc) / cfg.reps;
  }
  return res;
}

}  // namespace csens
