#include <cmath>
#include <vector>

#include "doctest.h"
#include "mfarb/noise.hpp"
#include "mfarb/sde.hpp"
#include "mfarb/stats.hpp"
#include "mfarb/types.hpp"
#include "mfarb/vsm.hpp"

using namespace mfarb;

namespace {

GameConfig base_config(int n, double T, double x0_each = 1.0) {
  GameConfig cfg;
  cfg.n = n;
  cfg.delta = 0.5;
  cfg.T = T;
  cfg.x0 = Vec::Constant(n, x0_each);
  cfg.seed = 13579;
  cfg.type_law.mu_c = -1.2;
  cfg.type_law.sigma_c = 0.3;
  return cfg;
}

}  // namespace

TEST_CASE("noise paths: addressing is stable, refinement-free, and N(0, dt)") {
  const NoisePath p = make_noise_path(42, 3, 64, 2, 1.0 / 64.0);
  CHECK(p.steps() == 64);
  CHECK(p.dims() == 2);
  const NoisePath q = make_noise_path(42, 3, 64, 2, 1.0 / 64.0);
  CHECK((p.dB - q.dB).cwiseAbs().maxCoeff() == 0.0);
  const NoisePath r = make_noise_path(42, 4, 64, 2, 1.0 / 64.0);
  CHECK((p.dB - r.dB).cwiseAbs().maxCoeff() > 0.0);

  // Moment sanity at 3 sigma: mean ~ N(0, dt/K), var ~ dt.
  const NoisePath big = make_noise_path(7, 0, 4096, 1, 1.0 / 256.0);
  const double m = big.dB.col(0).mean();
  const double v = big.dB.col(0).array().square().mean();
  const double dt = 1.0 / 256.0;
  CHECK(std::abs(m) <= 3.0 * std::sqrt(dt / 4096.0));
  CHECK(std::abs(v - dt) <= 3.0 * dt * std::sqrt(2.0 / 4096.0));
}

TEST_CASE("grid helpers round and reject off-grid times") {
  CHECK(step_count(1.0, 1.0 / 256.0) == 256);
  CHECK(step_count(0.5, 1.0 / 64.0) == 32);
  CHECK_THROWS_AS(step_count(1.0, 0.3), ConfigError);
  CHECK(step_index(0.25, 1.0, 1.0 / 64.0) == 16);
  CHECK_THROWS_AS(step_index(0.013, 1.0, 1.0 / 64.0), ConfigError);
}

TEST_CASE("log-euler capitalizations are exact for constant-coefficient dynamics") {
  // With beta, sigma constant the scheme is X_T = x0 exp((beta - |sigma|^2/2) T
  // + sigma . B_T) which is the closed-form solution along the same path.
  const int n = 2;
  Vec beta(n);
  beta << 0.05, 0.08;
  Mat sigma(n, n);
  sigma << 0.20, 0.05, -0.03, 0.25;
  const CoefficientSet coeffs = gbm_coefficients(beta, sigma);

  GameConfig cfg = base_config(n, 0.5);
  const auto types = draw_types(cfg, 4);
  SimOptions opts;
  opts.dt = 1.0 / 128.0;
  opts.record_noise = true;
  const TrajectoryRecord rec = simulate_mkv(cfg, coeffs, types, market_rule(), opts);

  const int steps = rec.steps();
  Eigen::RowVectorXd bsum = Eigen::RowVectorXd::Zero(n);
  for (int k = 0; k < steps; ++k) bsum += rec.noise.row(k);
  for (int i = 0; i < n; ++i) {
    const double var = sigma.row(i).squaredNorm();
    const double closed =
        cfg.x0(i) * std::exp((beta(i) - 0.5 * var) * 0.5 + sigma.row(i).dot(bsum));
    CHECK(rec.X(steps, i) == doctest::Approx(closed).epsilon(1e-12));
  }
}

TEST_CASE("decoupled market step: z euler error halves with dt, x stays exact") {
  // sigma = 0 isolates the drift error of the plain-Euler interaction update,
  // Z_(k+1) = Z_k (1 + beta dt) versus z0 e^(beta T): weak order one.  The
  // log-Euler capitalization update is exact for any dt in this regime.
  const double beta = 0.8, T = 1.0;
  const CoefficientSet coeffs =
      gbm_coefficients(Vec::Constant(1, beta), 1e-30 * Mat::Identity(1, 1));

  auto terminal_gap = [&](double dt) {
    MarketState st;
    st.X = Vec::Constant(1, 1.0);
    st.Z = Vec::Constant(1, 1.0);
    const int steps = step_count(T, dt);
    const Eigen::RowVectorXd dB = Eigen::RowVectorXd::Zero(1);
    for (int k = 0; k < steps; ++k) st = step_market(st, coeffs, dB, dt);
    CHECK(st.X(0) == doctest::Approx(std::exp(beta * T)).epsilon(1e-10));
    return std::abs(st.Z(0) - std::exp(beta * T));
  };

  const double e1 = terminal_gap(1.0 / 100.0);
  const double e2 = terminal_gap(1.0 / 200.0);
  const double e3 = terminal_gap(1.0 / 400.0);
  CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.05));
  CHECK(e2 / e3 == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("a homogeneous ensemble stays exchangeable") {
  GameConfig cfg = base_config(2, 0.25, 2.0);
  cfg.type_law.sigma_c = 0.0;  // identical types
  VsmConfig vcfg;
  vcfg.n = 2;
  vcfg.x0 = cfg.x0;
  const CoefficientSet coeffs = vsm_coefficients(vcfg);
  const auto types = draw_types(cfg, 8);
  SimOptions opts;
  opts.dt = 1.0 / 128.0;
  opts.z0 = vsm_auto_z0(vcfg, cfg.delta, cfg.e_c_mean());
  const TrajectoryRecord rec = simulate_mkv(cfg, coeffs, types, benchmark_rule(cfg.delta), opts);
  for (int l = 1; l < 8; ++l)
    CHECK(rec.V_final(l) == doctest::Approx(rec.V_final(0)).epsilon(1e-13));
}

TEST_CASE("worker count never changes a trajectory") {
  GameConfig cfg = base_config(2, 0.25, 2.0);
  VsmConfig vcfg;
  vcfg.n = 2;
  vcfg.x0 = cfg.x0;
  const CoefficientSet coeffs = vsm_coefficients(vcfg);
  const auto types = draw_types(cfg, 32);

  TrajectoryRecord recs[3];
  const int workers[3] = {1, 4, 16};
  for (int w = 0; w < 3; ++w) {
    SimOptions opts;
    opts.dt = 1.0 / 64.0;
    opts.workers = workers[w];
    opts.z0 = vsm_auto_z0(vcfg, cfg.delta, cfg.e_c_mean());
    opts.track_deflator = true;
    recs[w] = simulate_mkv(cfg, coeffs, types, type_leverage_rule(0.5), opts);
  }
  for (int w = 1; w < 3; ++w) {
    CHECK((recs[w].X - recs[0].X).cwiseAbs().maxCoeff() == 0.0);
    CHECK((recs[w].Z - recs[0].Z).cwiseAbs().maxCoeff() == 0.0);
    CHECK((recs[w].V_final - recs[0].V_final).cwiseAbs().maxCoeff() == 0.0);
    for (std::size_t k = 0; k < recs[w].L.size(); ++k) CHECK(recs[w].L[k] == recs[0].L[k]);
  }
}

TEST_CASE("n players equal an m = n particle ensemble on the same seed") {
  GameConfig cfg = base_config(2, 0.25, 2.0);
  VsmConfig vcfg;
  vcfg.n = 2;
  vcfg.x0 = cfg.x0;
  const CoefficientSet coeffs = vsm_coefficients(vcfg);
  const auto types = draw_types(cfg, 16);
  SimOptions opts;
  opts.dt = 1.0 / 64.0;
  opts.z0 = vsm_auto_z0(vcfg, cfg.delta, cfg.e_c_mean());
  const TrajectoryRecord mkv = simulate_mkv(cfg, coeffs, types, type_leverage_rule(0.3), opts);
  const TrajectoryRecord npl = simulate_nplayer(cfg, coeffs, types, type_leverage_rule(0.3), opts);
  CHECK((mkv.X - npl.X).cwiseAbs().maxCoeff() == 0.0);
  CHECK((mkv.V_final - npl.V_final).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("the benchmark strategy replicates the benchmark pathwise") {
  // Decoupled dynamics: Z has the same relative increments as X, so the
  // benchmark is itself a portfolio value and the weights Pi replicate it.
  // The discrete gap mixes the log-Euler wealth step with the plain-Euler
  // interaction step and shrinks like dt.
  const double delta = 0.5, T = 0.5, dt = 1.0 / 128.0;
  Vec beta(2);
  beta << 0.05, 0.12;
  Mat sigma(2, 2);
  sigma << 0.22, 0.04, -0.05, 0.18;
  const CoefficientSet coeffs = gbm_coefficients(beta, sigma);

  MarketState st;
  st.X = Vec(2);
  st.X << 2.0, 1.0;
  st.Z = Vec(2);
  st.Z << 0.8, 0.4;
  double V = 1.0;
  const double bm0 = benchmark_value(st, delta);
  const NoisePath noise = make_noise_path(777, 0, step_count(T, dt), 2, dt);

  double worst = 0.0;
  for (int k = 0; k < noise.steps(); ++k) {
    const Vec pi = benchmark_portfolio(st, delta);
    const Vec b = beta_of(coeffs, st.X, st.Z);
    const Mat sg = sigma_of(coeffs, st.X, st.Z);
    V = step_wealth(V, pi, b, sg, noise.dB.row(k), dt);
    st = step_market(st, coeffs, noise.dB.row(k), dt);
    const double bm = benchmark_value(st, delta) / bm0;
    worst = std::max(worst, std::abs(V - bm) / bm);
  }
  CHECK(worst <= 10.0 * dt);
  CHECK(worst > 0.0);  // schemes differ, so the gap is small but not zero
}

TEST_CASE("wealth step with zero weights holds the wealth constant") {
  Vec pi = Vec::Zero(2);
  Vec beta = Vec::Constant(2, 0.3);
  Mat sigma = 0.4 * Mat::Identity(2, 2);
  Eigen::RowVectorXd dB(2);
  dB << 0.05, -0.02;
  CHECK(step_wealth(3.0, pi, beta, sigma, dB, 0.01) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("explosive dynamics raise a numerical error with the step index") {
  GameConfig cfg = base_config(1, 1.0);
  const CoefficientSet coeffs =
      gbm_coefficients(Vec::Constant(1, 4000.0), 0.2 * Mat::Identity(1, 1));
  const auto types = draw_types(cfg, 2);
  SimOptions opts;
  opts.dt = 1.0 / 64.0;
  CHECK_THROWS_AS(simulate_mkv(cfg, coeffs, types, market_rule(), opts), NumericalError);
}

TEST_CASE("ensemble interaction is a draw-order blocked average of V pi") {
  std::vector<InvestorType> types(3);
  ParticleEnsemble ens = make_ensemble(types, 2);
  ens.V << 1.0, 2.0, 3.0;
  ens.pi.row(0) << 0.5, 0.5;
  ens.pi.row(1) << 1.0, 0.0;
  ens.pi.row(2) << 0.0, 1.0;
  const Vec z = ensemble_interaction(ens);
  CHECK(z(0) == doctest::Approx((0.5 + 2.0 + 0.0) / 3.0).epsilon(1e-15));
  CHECK(z(1) == doctest::Approx((0.5 + 0.0 + 3.0) / 3.0).epsilon(1e-15));
}
