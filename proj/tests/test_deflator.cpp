#include <cmath>
#include <vector>

#include "doctest.h"
#include "mfarb/deflator.hpp"
#include "mfarb/noise.hpp"
#include "mfarb/sde.hpp"
#include "mfarb/stats.hpp"
#include "mfarb/types.hpp"
#include "mfarb/vsm.hpp"

using namespace mfarb;

namespace {

// Log-quadratic potential H = alpha (log x)^2 / 2 on a proportional-diffusion
// market (s = sigma x): b = a D_x H = sigma^2 alpha x log x and
// theta = sigma alpha log x.  With alpha < 0 the log is an Ornstein-Uhlenbeck
// process, so paths stay positive and bounded in probability.
CoefficientSet log_ou_market(double alpha, double sigma) {
  CoefficientSet c;
  c.n = 1;
  c.b = [alpha, sigma](const Vec& x, const Vec&) {
    return Vec(sigma * sigma * alpha * x.array().log().matrix().cwiseProduct(x));
  };
  c.s = [sigma](const Vec& x, const Vec&) { return Mat(sigma * x.asDiagonal()); };
  c.gamma = [](const Vec&, const Vec&) { return Vec(Vec::Zero(1)); };
  c.tau = [](const Vec&, const Vec&) { return Mat(Mat::Zero(1, 1)); };
  c.theta_fn = [alpha, sigma](const Vec& x, const Vec&) {
    return Vec(sigma * alpha * x.array().log().matrix());
  };
  return c;
}

HFunction log_ou_h(double alpha) {
  HFunction H;
  H.value = [alpha](const Vec& x, const Vec&) {
    const double l = std::log(x(0));
    return 0.5 * alpha * l * l;
  };
  H.grad_x = [alpha](const Vec& x, const Vec&) {
    return Vec(Vec::Constant(1, alpha * std::log(x(0)) / x(0)));
  };
  H.grad_z = [](const Vec&, const Vec&) { return Vec(Vec::Zero(1)); };
  H.hess_xx = [alpha](const Vec& x, const Vec&) {
    const double l = std::log(x(0));
    return Mat(Mat::Constant(1, 1, alpha * (1.0 - l) / (x(0) * x(0))));
  };
  H.hess_zz = [](const Vec&, const Vec&) { return Mat(Mat::Zero(1, 1)); };
  H.hess_xz = [](const Vec&, const Vec&) { return Mat(Mat::Zero(1, 1)); };
  return H;
}

}  // namespace

TEST_CASE("one deflator step matches hand arithmetic") {
  DeflatorState st;
  Vec theta(2);
  theta << 0.3, -0.2;
  Eigen::RowVectorXd dB(2);
  dB << 0.01, 0.02;
  const DeflatorState next = step_deflator(st, theta, dB, 0.01);
  // -theta.dB = -(0.003 - 0.004) = 0.001; -|theta|^2 dt/2 = -0.00065
  CHECK(next.log_L == doctest::Approx(0.00035).epsilon(1e-14));
  CHECK(next.value() == doctest::Approx(std::exp(0.00035)).epsilon(1e-14));
}

TEST_CASE("potential-induced theta reproduces the closed form on the worked example") {
  VsmConfig vcfg;
  vcfg.n = 2;
  const CoefficientSet coeffs = vsm_coefficients(vcfg);
  const HFunction H = vsm_H(1.0);
  Vec x(2), z(2);
  x << 1.3, 0.6;
  z << 0.9, 1.7;
  const Vec th = theta_from_h(coeffs, H, x, z, ThetaMode::Combined);
  const Vec closed = coeffs.theta(x, z);
  CHECK((th - closed).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("doubled mode doubles the diffusion-projected gradient") {
  CoefficientSet c;
  c.n = 2;
  Mat s(2, 2);
  s << 0.5, 0.0, 0.1, 0.4;
  c.s = [s](const Vec&, const Vec&) { return s; };
  HFunction H;
  H.value = [](const Vec& x, const Vec&) { return 0.5 * x.squaredNorm(); };
  H.grad_x = [](const Vec& x, const Vec&) { return x; };
  Vec x(2), z(2);
  x << 1.0, 2.0;
  z << 1.0, 1.0;
  const Vec th = theta_from_h(c, H, x, z, ThetaMode::Doubled);
  const Vec expect = 2.0 * s.transpose() * x;
  CHECK((th - expect).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("ito correction integrands on the worked example") {
  Vec x(2), z(2);
  x << 1.2, 0.7;
  z << 0.8, 1.5;

  // At C_x = 1 both integrands vanish identically: D2 H + (D H)(D H)' has
  // diagonal -1/x^2 + 1/x^2 = 0 against the diagonal covariance.
  {
    VsmConfig vcfg;
    vcfg.n = 2;
    vcfg.C_x = 1.0;
    const KKValues kk = kk_integrands(vsm_coefficients(vcfg), vsm_H(1.0), x, z);
    CHECK(std::abs(kk.k) <= 1e-10);
    CHECK(std::abs(kk.k_tilde) <= 1e-10);
  }

  // At C_x = 2 the diagonal becomes C_x (C_x - 1)/x_i^2 = 2/x_i^2 and
  // k = -sum_i a_ii / x_i^2 = -sum_i X / (x_i z_i); the z-blocks still vanish
  // because H does not depend on z.
  {
    VsmConfig vcfg;
    vcfg.n = 2;
    vcfg.C_x = 2.0;
    const KKValues kk = kk_integrands(vsm_coefficients(vcfg), vsm_H(2.0), x, z);
    const double X = x.sum();
    const double expect = -(X / (x(0) * z(0)) + X / (x(1) * z(1)));
    CHECK(kk.k == doctest::Approx(expect).epsilon(1e-8));
    CHECK(std::abs(kk.k_tilde) <= 1e-8);
  }
}

TEST_CASE("finite-difference fallback matches analytic derivatives") {
  const HFunction analytic = vsm_H(1.0);
  HFunction fd;
  fd.value = analytic.value;
  Vec x(2), z(2);
  x << 0.9, 1.8;
  z << 1.1, 0.6;
  CHECK((fd.gx(x, z) - analytic.gx(x, z)).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((fd.hxx(x, z) - analytic.hxx(x, z)).cwiseAbs().maxCoeff() <= 1e-4);
  CHECK((fd.hzz(x, z) - analytic.hzz(x, z)).cwiseAbs().maxCoeff() <= 1e-4);
  CHECK((fd.hxz(x, z) - analytic.hxz(x, z)).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("functional form equals the product form exactly on the worked example") {
  GameConfig cfg;
  cfg.n = 2;
  cfg.delta = 0.5;
  cfg.T = 0.25;
  cfg.x0 = Vec::Constant(2, 4.0);
  cfg.seed = 97531;
  cfg.type_law.mu_c = -1.2;
  cfg.type_law.sigma_c = 0.3;
  VsmConfig vcfg;
  vcfg.n = 2;
  vcfg.x0 = cfg.x0;
  const CoefficientSet coeffs = vsm_coefficients(vcfg);
  SimOptions opts;
  opts.dt = 1.0 / 128.0;
  opts.track_deflator = true;
  opts.z0 = vsm_auto_z0(vcfg, cfg.delta, cfg.e_c_mean());
  const TrajectoryRecord rec =
      simulate_mkv(cfg, coeffs, draw_types(cfg, 8), benchmark_rule(cfg.delta), opts);

  const std::vector<double> L_H = deflator_via_h(rec, coeffs, vsm_H(1.0));
  double worst_sde = 0.0;
  for (int k = 0; k <= rec.steps(); ++k) {
    const Vec xk = rec.X.row(k).transpose();
    const double closed = vsm_closed_deflator(cfg.x0, xk);
    // Functional form == product form exactly (the correction integrand is 0).
    CHECK(L_H[k] == doctest::Approx(closed).epsilon(1e-11));
    // The theta-exponential differs by the scheme's O(dt) in-step convexity.
    worst_sde = std::max(worst_sde, std::abs(rec.L[k] - closed) / closed);
  }
  CHECK(worst_sde <= 5.0 * opts.dt);
  CHECK(worst_sde > 0.0);
}

TEST_CASE("theta-exponential converges to the functional form as dt shrinks") {
  // Log-quadratic potential market; nested Brownian skeleton so that coarse
  // increments are sums of fine ones and the pathwise gap is compared on the
  // same randomness.  The two representations differ by the second-order
  // Ito-Taylor martingale sum_k D2H s^2 ((dB)^2 - dt)/2 -- strong order 1/2 --
  // plus an order-one bias, so the root-mean-square horizon gap must shrink
  // per halving by a factor between sqrt(2) and 2.
  const double alpha = -0.8, sigma = 0.7, T = 0.5;
  const int n = 1;
  const CoefficientSet coeffs = log_ou_market(alpha, sigma);
  const HFunction H = log_ou_h(alpha);
  const int fine_steps = 128;  // dt = 1/256
  const double fine_dt = T / fine_steps;

  const int levels[3] = {1, 2, 4};  // coarsening factors vs dt = 1/64
  stats::KahanSum gap_sum[3];
  const int paths = 128;
  for (int p = 0; p < paths; ++p) {
    const NoisePath noise = make_noise_path(1234, p, fine_steps, n, fine_dt);
    for (int lv = 0; lv < 3; ++lv) {
      const int group = 4 / levels[lv];  // fine steps per coarse step
      const double dt = fine_dt * group;
      MarketState st;
      st.X = Vec::Constant(n, 2.0);
      st.Z = Vec::Constant(n, 1.0);
      TrajectoryRecord rec;
      rec.X = Mat(fine_steps / group + 1, n);
      rec.Z = Mat(fine_steps / group + 1, n);
      rec.times.resize(fine_steps / group + 1);
      rec.X.row(0) = st.X.transpose();
      rec.Z.row(0) = st.Z.transpose();
      rec.times[0] = 0.0;
      DeflatorState defl;
      for (int k = 0; k < fine_steps / group; ++k) {
        Eigen::RowVectorXd dB = Eigen::RowVectorXd::Zero(n);
        for (int j = 0; j < group; ++j) dB += noise.dB.row(k * group + j);
        const Vec theta = coeffs.theta(st.X, st.Z);
        defl = step_deflator(defl, theta, dB, dt);
        st = step_market(st, coeffs, dB, dt);
        rec.X.row(k + 1) = st.X.transpose();
        rec.Z.row(k + 1) = st.Z.transpose();
        rec.times[k + 1] = (k + 1) * dt;
      }
      const std::vector<double> L_H = deflator_via_h(rec, coeffs, H);
      const double gap = defl.log_L - std::log(L_H.back());
      gap_sum[lv].add(gap * gap);
    }
  }
  const double g64 = std::sqrt(gap_sum[0].value() / paths);
  const double g128 = std::sqrt(gap_sum[1].value() / paths);
  const double g256 = std::sqrt(gap_sum[2].value() / paths);
  CHECK(g64 > g128);
  CHECK(g128 > g256);
  CHECK(g64 / g128 >= 1.25);
  CHECK(g64 / g128 <= 2.10);
  CHECK(g128 / g256 >= 1.25);
  CHECK(g128 / g256 <= 2.10);
}
