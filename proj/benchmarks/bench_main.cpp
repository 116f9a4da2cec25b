#include <benchmark/benchmark.h>

#include <memory>

#include "csens/bound_engine.hpp"
#include "csens/hdd.hpp"
#include "csens/inference.hpp"
#include "csens/simulate.hpp"

using namespace csens;

namespace {

struct Fixture {
  Sample sample;
  std::shared_ptr<DesignMatrices> design;
  TuningParams tuning;
  ThetaHat theta;

  explicit Fixture(Eigen::Index n) {
    SubstreamRng gen(1234, 0);
    sample = generate_dgp(DgpId::linear_normal, n, gen);
    design = std::make_shared<DesignMatrices>(build_design(sample, dgp_design_spec()));
    tuning = TuningParams::defaults(n);
    tuning.tau_step = 0.01;
    tuning.n_quad = 128;
    theta = fit_theta(sample, design, Link::logit, tuning);
  }
};

Fixture& fixture500() {
  static Fixture f(500);
  return f;
}

}  // namespace

static void BM_QuantileProcessFit(benchmark::State& state) {
  auto& f = fixture500();
  const Eigen::VectorXd grid = f.tuning.make_tau_grid();
  for (auto _ : state) {
    auto fit = fit_quantile_process(*f.design, f.sample.y, grid, f.tuning.eps_small);
    benchmark::DoNotOptimize(fit.gamma);
  }
}
BENCHMARK(BM_QuantileProcessFit)->Unit(benchmark::kMillisecond);

static void BM_PropensityFit(benchmark::State& state) {
  auto& f = fixture500();
  for (auto _ : state) {
    auto fit = fit_propensity(*f.design, f.sample.x, Link::logit);
    benchmark::DoNotOptimize(fit.beta);
  }
}
BENCHMARK(BM_PropensityFit)->Unit(benchmark::kMicrosecond);

static void BM_AteBoundCurve21(benchmark::State& state) {
  auto& f = fixture500();
  Estimand ate;
  ate.kind = Estimand::Kind::ate;
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(21, 0.0, 1.0);
  for (auto _ : state) {
    auto curve = bound_curve(ate, f.sample, f.theta, grid, f.tuning.n_quad);
    benchmark::DoNotOptimize(curve.pairs.data());
  }
}
BENCHMARK(BM_AteBoundCurve21)->Unit(benchmark::kMillisecond);

static void BM_Gamma3Hdd(benchmark::State& state) {
  auto& f = fixture500();
  Direction dir;
  dir.h1 = Eigen::VectorXd::Constant(2, 0.3);
  dir.h2.resize(f.theta.qr.gamma.rows(), f.theta.qr.gamma.cols());
  for (Eigen::Index j = 0; j < dir.h2.rows(); ++j) {
    const double tau = f.theta.qr.tau_grid[j];
    dir.h2.row(j) << std::sin(tau), 0.5 * tau, 1.0 - tau;
  }
  for (auto _ : state) {
    auto v = gamma3_hdd(1, f.sample, f.theta, dir, f.tuning, 0.2);
    benchmark::DoNotOptimize(v.upper);
  }
}
BENCHMARK(BM_Gamma3Hdd)->Unit(benchmark::kMillisecond);

static void BM_HddBootstrapDraw(benchmark::State& state) {
  auto& f = fixture500();
  Estimand ate;
  ate.kind = Estimand::Kind::ate;
  Eigen::VectorXd grid(3);
  grid << 0.0, 0.1, 0.5;
  BootstrapConfig cfg;
  cfg.draws = 1;
  cfg.seed = 1;
  cfg.tuning = f.tuning;
  cfg.threads = 1;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    cfg.seed = ++seed;
    auto draws = run_bootstrap(f.sample, f.theta, Link::logit, cfg, {ate}, grid);
    benchmark::DoNotOptimize(draws.draws.data());
  }
}
BENCHMARK(BM_HddBootstrapDraw)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
