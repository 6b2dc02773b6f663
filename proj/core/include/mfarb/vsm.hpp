#pragma once

// Volatility-stabilized market instance: the worked example whose deflator,
// market price of risk, drift potential, and value function all have closed
// forms, used as ground truth across the test suite.
//
// Coefficients (m_i = X_i / X the market weight):
//   beta_i = C_x / (m_i Z_i) = C_x X / (X_i Z_i)      relative drift
//   a_ij   = (X_i / Z_i) X delta_ij                    capitalization covariance
//   theta_i = C_x sqrt(X) / sqrt(X_i Z_i)              market price of risk
//   gamma_i = Z_i beta_i,  tau_ii = Z_i sigma_ii       interaction dynamics
// Drift potential H(x) = C_x sum_i log x_i.  At C_x = 1 the Ito correction k
// vanishes identically and the deflator collapses to L(t) = prod_j x_j(0)/x_j(t).

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "mfarb/deflator.hpp"
#include "mfarb/equilibrium.hpp"
#include "mfarb/market.hpp"
#include "mfarb/pde.hpp"
#include "mfarb/types.hpp"

namespace mfarb {

struct VsmConfig {
  int n = 2;
  double C_x = 1.0;
  Vec x0;                  ///< initial capitalizations (defaults to ones)
  std::optional<Vec> z0;   ///< initial interaction; auto-prescription when absent
  double beta_cap = 1e4;   ///< drift explosion guard as trading volume vanishes
  double z_floor = 1e-12;  ///< below this the coefficient evaluation degenerates

  /// Explicit-scheme stability cap: beta <= 1/(4 dt) keeps the per-step
  /// volatility sigma sqrt(dt) <= 1/2, cutting the shrink -> volatility-up
  /// feedback loop of the leverage effect.  The cap rescales sigma and theta
  /// together, so s theta = b (and the deflated-capital martingale identity)
  /// survives wherever the cap binds.
  static double stable_cap(double dt) { return 0.25 / dt; }
};

/// Coefficient bundle; optional counter records beta-cap activations.
CoefficientSet vsm_coefficients(const VsmConfig& cfg,
                                std::shared_ptr<std::atomic<long>> cap_hits = nullptr);

/// Drift potential with analytic derivatives.
HFunction vsm_H(double C_x = 1.0);

/// Closed-form deflator at C_x = 1: prod_j x_start_j / x_now_j.
double vsm_closed_deflator(const Vec& x_start, const Vec& x_now);

/// Auto-initialized interaction vector: Z0_i = E[e^c] * Vbm0 * m_i(0) with the
/// self-consistent initial benchmark Vbm0 = delta x0_total / (1-(1-delta)E[e^c]).
Vec vsm_auto_z0(const VsmConfig& cfg, double delta, double e_c_mean);

/// Analytic single-asset value: u = e^c delta x / ((delta x + (1-delta) z)(1-(1-delta)E[e^c])).
double vsm_value_n1(double c, double delta, double e_c_mean, double x, double z);

/// High-precision Monte Carlo oracle for the per-type value
///   u(T-t) = delta e^c x_1...x_n / (Vbm(t)(1-(1-delta)E[e^c])) * E[X(T)/(x_1...x_n)(T)|F_t],
/// with the population forward law given by the value closure for U (U == 1
/// when absent) and products evaluated in log space.  Uses its own seed.
UEstimate vsm_u_oracle(const VsmConfig& cfg, double delta, double e_c_mean, double c,
                       const MarketState& state, double T, int M_oracle, double dt,
                       std::uint64_t seed, const ValuePath* U = nullptr, int workers = 1);

/// Joint-dynamics Monte Carlo estimate of the Cauchy-problem value
///   u(tau; x, z) = e^c E[ L(tau) Vbm(X_tau, Z_tau) ] / Vbm(x, z),
/// where (X, Z) runs the coupled SDE system from (x, z) -- Z by its own
/// dynamics, not the value closure -- and L is the theta-exponential deflator.
/// This is the function the four-block Cauchy operator acts on: dividing the
/// deflated benchmark expectation by Vbm produces exactly the first-order
/// terms weighted by delta / W.  The discretized deflated benchmark has
/// per-step conditional mean one, so the estimate is centered at e^c and the
/// standard error is a genuine Monte Carlo noise scale.
UEstimate vsm_grid_oracle(const VsmConfig& cfg, double delta, double c, const Vec& x,
                          const Vec& z, double tau, int M, double dt, std::uint64_t seed,
                          int workers = 1);

/// Tensor value grid (single-asset only) filled by vsm_grid_oracle with an
/// independent seed per node, so the per-node standard errors are independent
/// and stencil-propagated tolerances are honest.  Nodes at tau = 0 hold e^c
/// exactly with zero standard error.
ValueGrid vsm_value_grid(const VsmConfig& cfg, double delta, double c,
                         const std::vector<double>& tau, const std::vector<double>& x_axis,
                         const std::vector<double>& z_axis, int M, double dt,
                         std::uint64_t seed, int workers = 1);

}  // namespace mfarb
