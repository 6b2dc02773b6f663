#include "mfarb/vsm.hpp"

#include <cmath>

#include "mfarb/noise.hpp"
#include "mfarb/parallel.hpp"
#include "mfarb/sde.hpp"
#include "mfarb/stats.hpp"

namespace mfarb {

using stats::KahanSum;

namespace {

// Relative drift and diffusion with the explosion cap applied consistently:
// sigma_ii^2 = beta_i / C_x and theta_i = sqrt(C_x beta_i), so s theta = b
// holds exactly whether or not the cap is active.
struct VsmRates {
  Vec beta;
  Vec sigma_diag;
};

// Blocked (order-stable) mean and standard error of a sample vector.
UEstimate blocked_estimate(const std::vector<double>& samples) {
  const int m = static_cast<int>(samples.size());
  if (m == 0) return {0.0, 0.0};
  KahanSum total;
  for (int b0 = 0; b0 < m; b0 += 256) {
    KahanSum block;
    const int b1 = std::min(m, b0 + 256);
    for (int i = b0; i < b1; ++i) block.add(samples[static_cast<std::size_t>(i)]);
    total.add(block.value());
  }
  const double mean = total.value() / m;
  KahanSum sq;
  for (int i = 0; i < m; ++i) {
    const double d = samples[static_cast<std::size_t>(i)] - mean;
    sq.add(d * d);
  }
  const double se = m > 1 ? std::sqrt(sq.value() / (m - 1) / m) : 0.0;
  return {mean, se};
}

VsmRates vsm_rates(const VsmConfig& cfg, const Vec& x, const Vec& z,
                   const std::shared_ptr<std::atomic<long>>& cap_hits) {
  const int n = static_cast<int>(x.size());
  const double x_tot = x.sum();
  VsmRates r;
  r.beta.resize(n);
  r.sigma_diag.resize(n);
  for (int i = 0; i < n; ++i) {
    if (!(z[i] > cfg.z_floor)) {
      throw DegeneracyError("trading volume at or below floor in coefficient evaluation", -1);
    }
    if (!(x[i] > 0.0)) throw DegeneracyError("nonpositive capitalization", -1);
    double beta = cfg.C_x * x_tot / (x[i] * z[i]);
    if (beta > cfg.beta_cap) {
      beta = cfg.beta_cap;
      if (cap_hits) cap_hits->fetch_add(1, std::memory_order_relaxed);
    }
    r.beta[i] = beta;
    r.sigma_diag[i] = std::sqrt(beta / cfg.C_x);
  }
  return r;
}

}  // namespace

CoefficientSet vsm_coefficients(const VsmConfig& cfg,
                                std::shared_ptr<std::atomic<long>> cap_hits) {
  if (!(cfg.C_x > 0.0)) throw ConfigError("vsm requires C_x > 0");
  if (cfg.n < 1) throw ConfigError("vsm requires n >= 1");
  CoefficientSet cs;
  cs.n = cfg.n;
  const VsmConfig c = cfg;
  cs.b = [c, cap_hits](const Vec& x, const Vec& z) -> Vec {
    return x.cwiseProduct(vsm_rates(c, x, z, cap_hits).beta);
  };
  cs.s = [c, cap_hits](const Vec& x, const Vec& z) -> Mat {
    return Mat(x.cwiseProduct(vsm_rates(c, x, z, cap_hits).sigma_diag).asDiagonal());
  };
  cs.gamma = [c, cap_hits](const Vec& x, const Vec& z) -> Vec {
    return z.cwiseProduct(vsm_rates(c, x, z, cap_hits).beta);
  };
  cs.tau = [c, cap_hits](const Vec& x, const Vec& z) -> Mat {
    return Mat(z.cwiseProduct(vsm_rates(c, x, z, cap_hits).sigma_diag).asDiagonal());
  };
  cs.theta_fn = [c, cap_hits](const Vec& x, const Vec& z) -> Vec {
    const VsmRates r = vsm_rates(c, x, z, cap_hits);
    return (c.C_x * r.beta).cwiseSqrt();
  };
  return cs;
}

HFunction vsm_H(double C_x) {
  HFunction h;
  h.value = [C_x](const Vec& x, const Vec&) {
    double acc = 0.0;
    for (int i = 0; i < x.size(); ++i) acc += std::log(x[i]);
    return C_x * acc;
  };
  h.grad_x = [C_x](const Vec& x, const Vec&) -> Vec { return C_x * x.cwiseInverse(); };
  h.grad_z = [](const Vec& x, const Vec& z) -> Vec {
    (void)x;
    return Vec::Zero(z.size());
  };
  h.hess_xx = [C_x](const Vec& x, const Vec&) -> Mat {
    return Mat((-C_x * x.cwiseAbs2().cwiseInverse()).asDiagonal());
  };
  h.hess_zz = [](const Vec& x, const Vec& z) -> Mat {
    (void)x;
    return Mat::Zero(z.size(), z.size());
  };
  h.hess_xz = [](const Vec& x, const Vec& z) -> Mat {
    return Mat::Zero(x.size(), z.size());
  };
  return h;
}

double vsm_closed_deflator(const Vec& x_start, const Vec& x_now) {
  double log_l = 0.0;
  for (int i = 0; i < x_start.size(); ++i) log_l += std::log(x_start[i]) - std::log(x_now[i]);
  return std::exp(log_l);
}

Vec vsm_auto_z0(const VsmConfig& cfg, double delta, double e_c_mean) {
  Vec x0 = cfg.x0.size() > 0 ? cfg.x0 : Vec::Ones(cfg.n);
  const double q = (1.0 - delta) * e_c_mean;
  if (!(1.0 - q > 1e-10)) throw ConfigError("interaction strength puts the benchmark at a pole");
  const double vbm0 = delta * x0.sum() / (1.0 - q);
  return (e_c_mean * vbm0 / x0.sum()) * x0;
}

double vsm_value_n1(double c, double delta, double e_c_mean, double x, double z) {
  const double q = (1.0 - delta) * e_c_mean;
  return std::exp(c) * delta * x / ((delta * x + (1.0 - delta) * z) * (1.0 - q));
}

UEstimate vsm_u_oracle(const VsmConfig& cfg, double delta, double e_c_mean, double c,
                       const MarketState& state, double T, int M_oracle, double dt,
                       std::uint64_t seed, const ValuePath* U, int workers) {
  const int n = cfg.n;
  if (state.X.size() != n) throw ConfigError("oracle state dimension mismatch");
  const int steps = step_count(T, dt);
  const int k0 = step_index(state.t, T, dt);
  const double q = (1.0 - delta) * e_c_mean;
  if (!(1.0 - q > 1e-10)) throw ConfigError("interaction strength puts the benchmark at a pole");

  const double vbm_t = benchmark_value(state, delta);
  if (!(vbm_t > 0.0)) throw DegeneracyError("benchmark value vanished at oracle state", k0);
  double log_pref = std::log(delta) + c - std::log(vbm_t) - std::log(1.0 - q);
  for (int i = 0; i < n; ++i) log_pref += std::log(state.X[i]);

  const CoefficientSet coeffs = vsm_coefficients(cfg);
  const double x_scale = state.X.cwiseAbs().maxCoeff();

  std::vector<double> samples(static_cast<std::size_t>(M_oracle));
  auto run = [&](int, int begin, int end) {
    for (int p = begin; p < end; ++p) {
      const NoisePath noise =
          make_noise_path(seed, static_cast<std::uint64_t>(p), steps, n, dt);
      Vec X = state.X;
      for (int k = k0; k < steps; ++k) {
        const double tau_left = T - k * dt;
        const double u_togo = U != nullptr ? U->at_togo(tau_left) : 1.0;
        const Vec Z = closure_interaction(delta, e_c_mean, u_togo, X);
        const Vec beta = beta_of(coeffs, X, Z);
        const Mat sigma = sigma_of(coeffs, X, Z);
        const Eigen::RowVectorXd dB = noise.dB.row(k);
        for (int i = 0; i < n; ++i) {
          X[i] *= std::exp((beta[i] - 0.5 * sigma.row(i).squaredNorm()) * dt +
                           sigma.row(i).dot(dB));
          if (!std::isfinite(X[i]) || X[i] > x_scale * 1e12) {
            throw NumericalError("capitalization overflow in oracle simulation", k);
          }
        }
      }
      double log_sample = std::log(X.sum());
      for (int i = 0; i < n; ++i) log_sample -= std::log(X[i]);
      samples[static_cast<std::size_t>(p)] = std::exp(log_sample);
    }
  };
  parallel_blocks(M_oracle, 16, workers, run);

  const UEstimate est = blocked_estimate(samples);
  const double scale = std::exp(log_pref);
  return {scale * est.value, scale * est.stderr_};
}

UEstimate vsm_grid_oracle(const VsmConfig& cfg, double delta, double c, const Vec& x,
                          const Vec& z, double tau, int M, double dt, std::uint64_t seed,
                          int workers) {
  const int n = cfg.n;
  if (x.size() != n || z.size() != n) throw ConfigError("grid oracle state dimension mismatch");
  if (tau < 0.0) throw ConfigError("time to go must be non-negative");
  const double ec = std::exp(c);
  if (tau == 0.0) return {ec, 0.0};
  const int steps = step_count(tau, dt);

  const MarketState start{0.0, x, z};
  const double w0 = benchmark_value(start, delta);
  if (!(w0 > 0.0)) throw DegeneracyError("benchmark value vanished at grid node", 0);
  const double x_scale = x.maxCoeff();
  // Strictly above the coefficient floor so a clamped path stays evaluable.
  const double z_clip = cfg.z_floor * 4.0;

  std::vector<double> samples(static_cast<std::size_t>(M));
  auto run = [&](int, int begin, int end) {
    for (int p = begin; p < end; ++p) {
      const NoisePath noise = make_noise_path(seed, static_cast<std::uint64_t>(p), steps, n, dt);
      Vec X = x;
      Vec Z = z;
      double log_L = 0.0;
      for (int k = 0; k < steps; ++k) {
        const VsmRates r = vsm_rates(cfg, X, Z, nullptr);
        const Vec theta = (cfg.C_x * r.beta).cwiseSqrt();
        const Eigen::RowVectorXd dB = noise.dB.row(k);
        double theta_dB = 0.0;
        for (int i = 0; i < n; ++i) theta_dB += theta[i] * dB[i];
        log_L += -theta_dB - 0.5 * theta.squaredNorm() * dt;
        for (int i = 0; i < n; ++i) {
          const double sig = r.sigma_diag[i];
          Z[i] += Z[i] * r.beta[i] * dt + Z[i] * sig * dB[i];
          if (Z[i] < z_clip) Z[i] = z_clip;
          X[i] *= std::exp((r.beta[i] - 0.5 * sig * sig) * dt + sig * dB[i]);
          if (!std::isfinite(X[i]) || X[i] > x_scale * 1e12) {
            throw NumericalError("capitalization overflow in grid oracle", k);
          }
        }
      }
      const double w_end = delta * X.sum() + (1.0 - delta) * Z.sum();
      samples[static_cast<std::size_t>(p)] = std::exp(log_L) * w_end / w0;
    }
  };
  parallel_blocks(M, 16, workers, run);

  const UEstimate est = blocked_estimate(samples);
  return {ec * est.value, ec * est.stderr_};
}

ValueGrid vsm_value_grid(const VsmConfig& cfg, double delta, double c,
                         const std::vector<double>& tau, const std::vector<double>& x_axis,
                         const std::vector<double>& z_axis, int M, double dt,
                         std::uint64_t seed, int workers) {
  if (cfg.n != 1) throw ConfigError("value grids are single-asset only");
  ValueGrid grid;
  grid.n = 1;
  grid.tau = tau;
  grid.x_axes = {x_axis};
  grid.z_axes = {z_axis};
  grid.u.assign(grid.size(), 0.0);
  grid.stderr_.assign(grid.size(), 0.0);
  grid.validate();

  const int nt = static_cast<int>(tau.size());
  const int nx = static_cast<int>(x_axis.size());
  const int nz = static_cast<int>(z_axis.size());
  for (int it = 0; it < nt; ++it) {
    for (int ix = 0; ix < nx; ++ix) {
      for (int iz = 0; iz < nz; ++iz) {
        const std::size_t flat = grid.index(it, {ix}, {iz});
        const std::uint64_t node_seed =
            seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(flat) + 1));
        Vec x(1), z(1);
        x[0] = x_axis[static_cast<std::size_t>(ix)];
        z[0] = z_axis[static_cast<std::size_t>(iz)];
        const UEstimate est =
            vsm_grid_oracle(cfg, delta, c, x, z, tau[static_cast<std::size_t>(it)], M, dt,
                            node_seed, workers);
        grid.u[flat] = est.value;
        grid.stderr_[flat] = est.stderr_;
      }
    }
  }
  return grid;
}

}  // namespace mfarb
