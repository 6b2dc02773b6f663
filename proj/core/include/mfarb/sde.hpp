#pragma once

// Particle simulation of the coupled capitalization / trading-volume system.
//
// One engine drives both views of the model: the conditional-McKean-Vlasov
// simulation (M type-particles estimating the conditional law) and the
// N-player system (players are the particles).  All particles share one
// common-noise path; there is no idiosyncratic noise.  At every step the
// interaction level Z_i is closed as the ensemble average of V * pi_i and fed
// back into the coefficients.
//
// Discretization: log-Euler for capitalizations and wealths (positivity by
// construction), plain Euler with a floor for Z when Z evolves by its own
// dynamics (decoupled mode).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "mfarb/market.hpp"
#include "mfarb/noise.hpp"
#include "mfarb/types.hpp"

namespace mfarb {

/// Portfolio rule evaluated per particle each step.
struct StrategyRule {
  std::string name = "custom";
  std::function<Vec(const MarketState&, const InvestorType&, double)> weights;
};

StrategyRule market_rule();
StrategyRule benchmark_rule(double delta);
StrategyRule constant_rule(Vec w);
/// Type-sensitive rule: (1 + kappa * tanh(c)) times the market portfolio.
StrategyRule type_leverage_rule(double kappa);

/// Interacting particle system state (value particles + their strategies).
struct ParticleEnsemble {
  std::vector<InvestorType> types;
  Vec V;                    ///< wealths, one per particle
  Mat pi;                   ///< particles x n strategy weights
  std::vector<int> order;   ///< draw ids; aggregation always runs in draw order

  int count() const { return static_cast<int>(V.size()); }
};

/// Builds an ensemble from drawn types (draw order = storage order).
ParticleEnsemble make_ensemble(const std::vector<InvestorType>& types, int n);

/// Ensemble estimate of Z_i = mean(V * pi_i), accumulated in draw order with
/// fixed-size blocks so results do not depend on storage order or workers.
Vec ensemble_interaction(const ParticleEnsemble& ens);

struct SimOptions {
  double dt = 1.0 / 256.0;
  int workers = 1;
  std::uint64_t noise_path = 0;     ///< common-noise path index under cfg.seed
  bool track_deflator = false;
  bool record_particles = false;    ///< store wealth paths and strategies
  bool record_noise = false;
  std::optional<Vec> z0;            ///< initial interaction override
  bool freeze_z = false;            ///< keep Z at its initial value (no feedback)
  double z_floor = 1e-12;
  double overflow_factor = 1e12;    ///< error when any level exceeds this times its start
  int z_refine = 2;                 ///< Z <-> pi consistency passes per step
};

/// Recorded simulation output; one row per grid time.
struct TrajectoryRecord {
  std::vector<double> times;
  Mat X;                       ///< (steps+1) x n capitalizations
  Mat Z;                       ///< (steps+1) x n interaction levels
  std::vector<double> mean_V;
  std::vector<double> v_q10, v_q50, v_q90;
  std::vector<double> L;       ///< deflator path when tracked
  Mat particles;               ///< (steps+1) x M wealths when recorded
  std::vector<Mat> strategies; ///< per grid time, M x n, when recorded
  Mat noise;                   ///< steps x n increments when recorded
  long z_clamp_count = 0;
  Vec V_final;
  std::vector<InvestorType> types;

  int steps() const { return static_cast<int>(times.size()) - 1; }
  MarketState state_at(int k) const;
  void write_csv(const std::filesystem::path& file) const;
  void write_particles(const std::filesystem::path& file) const;
};

/// Per-asset relative drift beta_i = b_i / x_i.
Vec beta_of(const CoefficientSet& coeffs, const Vec& x, const Vec& z);
/// Relative diffusion sigma = diag(1/x) s.
Mat sigma_of(const CoefficientSet& coeffs, const Vec& x, const Vec& z);

/// One explicit step of the decoupled market system given an increment row:
/// log-Euler for X, plain Euler with floor for Z.
MarketState step_market(const MarketState& state, const CoefficientSet& coeffs,
                        const Eigen::RowVectorXd& dB, double dt, double z_floor = 1e-12,
                        long* clamp_count = nullptr);

/// One explicit log-Euler step of a wealth process under weights pi.
double step_wealth(double V, const Vec& pi, const Vec& beta, const Mat& sigma,
                   const Eigen::RowVectorXd& dB, double dt);

/// Resumable ensemble simulation.  Copyable, so a state can be snapshot and
/// continued along many noise paths (conditional-expectation estimators).
class EnsembleSim {
 public:
  EnsembleSim(const GameConfig& cfg, const CoefficientSet& coeffs,
              std::vector<InvestorType> types, StrategyRule rule, SimOptions opts);

  /// Closes the Z <-> pi fixed point at the current time.  Must be called
  /// before reading Z / strategies and before step().
  void close();
  /// Advances one step with the given common-noise increments.
  void step(const Eigen::RowVectorXd& dB);

  int current_step() const { return k_; }
  double time() const { return t_; }
  const Vec& X() const { return X_; }
  const Vec& Z() const { return Z_; }
  double deflator() const { return L_; }
  const ParticleEnsemble& particles() const { return ens_; }
  MarketState state() const { return {t_, X_, Z_}; }
  double mean_wealth() const;
  double benchmark() const { return benchmark_value(state(), cfg_.delta); }
  long z_clamps() const { return z_clamps_; }

 private:
  GameConfig cfg_;
  const CoefficientSet* coeffs_;
  StrategyRule rule_;
  SimOptions opts_;
  ParticleEnsemble ens_;
  Vec X_, Z_;
  double t_ = 0.0;
  double L_ = 1.0;
  int k_ = 0;
  long z_clamps_ = 0;
  double x_scale_ = 0.0, v_scale_ = 0.0;
  bool closed_ = false;

  void evaluate_strategies();
};

/// Conditional-McKean-Vlasov simulation with M type-particles.
TrajectoryRecord simulate_mkv(const GameConfig& cfg, const CoefficientSet& coeffs,
                              const std::vector<InvestorType>& types, const StrategyRule& rule,
                              const SimOptions& opts);

/// N-player counterpart; identical engine and noise addressing, so N players
/// coincide with an M = N McKean-Vlasov run on the same seed.
TrajectoryRecord simulate_nplayer(const GameConfig& cfg, const CoefficientSet& coeffs,
                                  const std::vector<InvestorType>& types, const StrategyRule& rule,
                                  const SimOptions& opts);

/// Constant-parameter toy market: beta and sigma fixed, interaction drift and
/// diffusion proportional to Z (gamma_p = z_p beta_p, tau_pk = z_p sigma_pk).
CoefficientSet gbm_coefficients(Vec beta_bar, Mat sigma_bar);

}  // namespace mfarb
