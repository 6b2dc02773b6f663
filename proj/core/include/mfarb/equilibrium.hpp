#pragma once

// Mean-field-game solver for the optimal relative-arbitrage quantity.
//
// The central object is the normalized value path U on the time grid, with the
// per-type values u^l = e^{c_l} U.  U satisfies the terminal-condition pin
// u^l(0) = e^{c_l} (U at time-to-go zero equals one) and lives inside the band
// (0, 1/((1-delta) E[e^c])) where the interaction factor
//
//   f(u) = 1 / (1 - (1-delta) E[e^c] u)
//
// is finite.  The fixed-point operator evaluated by Monte Carlo is
//
//   G(U)(tau) = delta * f(U(T - tau)) * E[Xhat(tau)] / Vbm(0),
//
// where Xhat(t) = (sum_i X_i(t)) L(t) is the deflated total capitalization,
// Vbm(0) = delta * x0_total / (1 - (1-delta) E[e^c] U(T)) the self-consistent
// initial benchmark value, and the population behind the simulated paths obeys
// the value closure
//
//   Z(t) = E[e^c] U(T-t) Vbm(t) m(t),   Vbm(t) = delta X(t)/(1 - (1-delta)E[e^c]U(T-t)).
//
// Note on the discretization: the market price of risk solves s theta = b
// exactly, so each deflated capitalization X_i L gains conditional mean one
// per log-Euler step and E[Xhat] is an exact discrete martingale.  The strict
// local-martingale mass escape that produces genuine continuous-time arbitrage
// is therefore invisible at fixed step size: the discrete equilibrium is U == 1
// up to Monte Carlo noise, and every check here compares estimators on the
// same scheme rather than continuous-time limits.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfarb/market.hpp"
#include "mfarb/sde.hpp"
#include "mfarb/types.hpp"

namespace mfarb {

/// Normalized equilibrium value on a time-to-go grid: vals[k] approximates
/// U(tau_k) with tau_k = k dt remaining to the horizon; vals[0] == 1 always.
/// Viewed on the calendar grid t = T - tau this stores U(T - t) per time point.
struct ValuePath {
  double T = 1.0;
  double dt = 1.0 / 256.0;
  std::vector<double> vals;

  int steps() const { return static_cast<int>(vals.size()) - 1; }
  double tau_at(int k) const { return static_cast<double>(k) * dt; }
  /// Full-horizon value U(T); enters the self-consistent initial benchmark.
  double horizon_value() const { return vals.back(); }
  /// Linear interpolation in time-to-go, clamped to [0, T].
  double at_togo(double tau) const;
  double at_calendar(double t) const { return at_togo(T - t); }

  static ValuePath ones(double T, double dt);
  /// Upper end of the admissible band (0, 1/((1-delta)E[e^c])); +inf if the
  /// interaction vanishes.
  static double band_upper(double delta, double e_c_mean);
  bool within_band(double delta, double e_c_mean) const;
};

/// Interaction level implied by the value closure at time-to-go tau.
Vec closure_interaction(double delta, double e_c_mean, double u_togo, const Vec& X);
/// Benchmark value implied by the value closure: delta X_tot / (1 - q u).
double closure_benchmark(double delta, double e_c_mean, double u_togo, double x_total);

struct ClosureOptions {
  int paths = 2048;
  double dt = 1.0 / 256.0;
  int workers = 1;
  std::uint64_t seed = 12345;       ///< noise seed (common-noise stream)
  std::uint64_t path_offset = 0;    ///< first common-noise path index
  std::optional<MarketState> start; ///< start (t, X); Z is closure-implied
};

/// Common-noise paths of the closure-population system.  Row p holds path
/// path_offset + p; column k holds calendar grid time k dt (columns below the
/// start step keep their initial values).
struct ClosureBatch {
  std::vector<double> t;  ///< calendar grid
  Mat Xtot;               ///< paths x (steps+1) total capitalization
  Mat L;                  ///< paths x (steps+1) deflator (reset to 1 at start)
  Mat Xhat;               ///< Xtot .* L
  int start_step = 0;
};

ClosureBatch simulate_value_closure(const GameConfig& cfg, const CoefficientSet& coeffs,
                                    const ValuePath& U, const ClosureOptions& opts);

struct UEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

struct EstimateOptions {
  int M_inner = 64;         ///< inner type-ensemble size
  int workers = 1;
  std::optional<Vec> z0;    ///< interaction bootstrap override
};

/// Feynman-Kac estimate U(T-t) = E[Vbm(T) L(T) | F_t] / (Vbm(t) L(t)) with the
/// population represented by an inner type-ensemble playing `rule`.  The state
/// at t is simulated forward from 0 on base noise path 0 under `seed`; the
/// M_outer continuations use paths 1..M_outer.
UEstimate estimate_U(const GameConfig& cfg, const CoefficientSet& coeffs, const StrategyRule& rule,
                     double t, int M_outer, double dt, std::uint64_t seed,
                     const EstimateOptions& opts = {});

/// Same quantity with the population given by the value closure for U and the
/// start state supplied explicitly.  The closure-implied future has
/// Vbm(T) = delta X(T)/(1 - (1-delta)E[e^c]); the denominator uses the given
/// state's own benchmark value.
UEstimate estimate_U_closure(const GameConfig& cfg, const CoefficientSet& coeffs,
                             const ValuePath& U, const MarketState& state, int M_outer, double dt,
                             std::uint64_t seed, int workers = 1);

struct GOptions {
  int paths = 2048;
  double dt = 1.0 / 256.0;
  int workers = 1;
  std::uint64_t seed = 12345;
  std::uint64_t path_offset = 0;
};

struct GResult {
  ValuePath U;
  std::vector<double> stderr_;  ///< per grid point
  double v_bm0 = 0.0;           ///< self-consistent initial benchmark value
};

/// One application of the fixed-point operator by Monte Carlo.
GResult apply_G(const GameConfig& cfg, const CoefficientSet& coeffs, const ValuePath& U,
                const GOptions& opts);

struct UniquenessReport {
  double delta = 0.0;
  double e_c_mean = 0.0;
  double M_input = 0.0;       ///< empirical Lipschitz constant fed in
  double x0_total = 0.0;
  double cond1_value = 0.0;   ///< (1 - delta^2)/delta * E[e^c], needs (0,1)
  bool cond1_pass = false;
  double cond2_bound = 0.0;   ///< x0 (delta + E[e^c](delta^2-1)) / (1 - (1-delta)E[e^c])
  bool cond2_pass = false;    ///< M_input < cond2_bound
  double lambda = 0.0;        ///< (1 - (1-delta)E[e^c]) / delta
  double L_f = 0.0;           ///< (1-delta)E[e^c] / (1 - (1-delta)E[e^c])^2
  double M_hat = 0.0;         ///< M_input / (delta x0)
  double contraction_bound = 0.0;  ///< lambda L_f + M_hat
  bool unique = false;
  std::string note;
};

/// Pure arithmetic check of the uniqueness condition.
UniquenessReport check_uniqueness(double delta, double e_c_mean, double M_bound, double x0_total);

struct SolveOptions {
  int paths = 2048;
  double dt = 1.0 / 256.0;
  int workers = 1;
  std::uint64_t seed = 12345;
  double tol = 1e-8;
  int max_iter = 40;
  double damping = 1.0;       ///< Picard relaxation; falls back to 0.5 on oscillation
  bool estimate_M = true;
  int paths_M = 512;          ///< paths per perturbation-pair simulation
};

struct EquilibriumResult {
  ValuePath U;
  StrategyRule strategy;  ///< fixed-point strategy from the structural value form
  std::vector<double> stderr_U;
  std::vector<double> residuals;     ///< per-iteration sup-norm gaps
  double contraction_estimate = 0.0; ///< geometric mean of successive ratios
  double M_estimate = 0.0;           ///< empirical Lipschitz constant of U -> Xhat
  UniquenessReport uniqueness;
  bool converged = false;
  int iterations = 0;
  double v_bm0 = 0.0;
  double z0_total = 0.0;             ///< E[e^c] U(T) v_bm0
  std::string warning;               ///< non-empty when uniqueness is not guaranteed
};

/// Picard iteration U <- G(U) with common random numbers across iterations.
EquilibriumResult solve_fixed_point(const GameConfig& cfg, const CoefficientSet& coeffs,
                                    const SolveOptions& opts);

struct StrategyResult {
  Vec weights;
  double weight_sum = 0.0;   ///< raw sum before any renormalization
  bool renormalized = false; ///< divided by the sum (only when |sum-1| < 0.05)
  bool flagged = false;      ///< sum too far from one; weights returned raw
};

/// Equilibrium strategy pi*_i = X_i D_{x_i} log u + Z_i D_{z_i} log u + Pi_i
/// from an explicit value function via central finite differences (relative
/// step fd_rel per coordinate).
StrategyResult strategy_from_value(const std::function<double(const Vec&, const Vec&)>& u_fn,
                                   const MarketState& state, double delta, double fd_rel = 1e-3);

/// Same formula with u estimated by the closure Monte Carlo under common
/// random numbers across the finite-difference stencil.
StrategyResult strategy_from_U(const GameConfig& cfg, const CoefficientSet& coeffs,
                               const ValuePath& U, const MarketState& state,
                               const InvestorType& type, double fd_rel = 1e-3, int M_outer = 512,
                               double dt = 1.0 / 256.0, std::uint64_t seed = 12345,
                               int workers = 1);

/// Solved-out homogeneous-player strategy
/// phi_i = (x_i D_{x_i} log u + Pi_i) / (1 - v_bar D_{z_i} log u),
/// the self-reference Z_i = v_bar phi_i eliminated; v_bar is the mean wealth.
StrategyResult homogeneous_strategy(const std::function<double(const Vec&, const Vec&)>& u_fn,
                                    const MarketState& state, double delta, double v_bar,
                                    double fd_rel = 1e-3);

/// Optimal equilibrium wealth V* = e^c delta U(T-t) X_tot / (1 - (1-delta)E[e^c]U(T-t)).
double optimal_wealth(const ValuePath& U, const MarketState& state, double delta, double e_c_mean,
                      double c);

/// Pathwise cost functional
/// J(pi) = (Vbm(T)/Vbm(0)) exp{-int pi'(beta - alpha pi / 2) dt - int pi' sigma dB}
/// for recorded particle `ell`; requires strategies and noise in the record.
/// Satisfies J(pi) V(T)/V(0) = Vbm(T)/Vbm(0) by construction.
double cost_J(const TrajectoryRecord& rec, const CoefficientSet& coeffs, double delta, int ell);

}  // namespace mfarb
