#pragma once

// Market model: state, coefficient bundles, investor types, game configuration,
// and the benchmark (delta-weighted capitalization/trading-volume) quantities.
//
// The market carries n stocks with capitalizations X_i driven by a common
// Brownian motion, and per-stock interaction levels Z_i (conditional mean of
// wealth times portfolio weight across the investor population).  Investors of
// type c target beating the benchmark V_bm = delta*sum(X) + (1-delta)*sum(Z)
// by the factor e^c.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfarb/types.hpp"

namespace mfarb {

/// Market state at a fixed time: capitalizations and interaction levels.
struct MarketState {
  double t = 0.0;
  Vec X;  ///< capitalizations, strictly positive
  Vec Z;  ///< interaction (wealth-volume) levels, non-negative

  int n() const { return static_cast<int>(X.size()); }
};

/// One investor: log target premium c and initial wealth v0.
struct InvestorType {
  double c = 0.0;
  double v0 = 1.0;
};

/// Law of the investor type: c ~ Normal(mu_c, sigma_c^2) truncated to
/// [c_min, c_max]; initial wealth is assigned by `v0_mode`.
struct TypeLaw {
  double mu_c = 0.0;
  double sigma_c = 0.0;   ///< 0 gives the homogeneous (Dirac) law at mu_c
  double c_min = -10.0;
  double c_max = 10.0;
  double v0_scale = 1.0;

  enum class V0Mode { Unit, ExpC } v0_mode = V0Mode::Unit;

  /// E[e^c] under the truncated law, by Simpson quadrature.
  double exp_c_mean() const;
  /// Inverse-CDF sample of c from a uniform u in (0,1).
  double sample_c(double u) const;
};

/// Game-level configuration shared by all operations.
struct GameConfig {
  double delta = 0.5;   ///< benchmark weight on capitalizations, in (0,1]
  double T = 1.0;       ///< horizon
  int n = 2;            ///< number of stocks
  Vec x0;               ///< initial capitalizations (size n)
  TypeLaw type_law;
  std::uint64_t seed = 12345;

  /// E[e^c]; quadrature value from type_law unless explicitly overridden.
  double e_c_mean() const { return e_c_override ? *e_c_override : type_law.exp_c_mean(); }
  std::optional<double> e_c_override;

  double x0_total() const { return x0.sum(); }
};

/// Coefficient bundle for the coupled capitalization/volume dynamics:
///   dX_i = b_i(X,Z) dt + sum_k s_ik(X,Z) dB_k
///   dZ_p = gamma_p(X,Z) dt + sum_k tau_pk(X,Z) dB_k
/// with a = s s', psi = tau tau', and the market price of risk theta solving
/// s theta = b (componentwise beta relation) and tau theta = gamma.
struct CoefficientSet {
  int n = 0;
  std::function<Vec(const Vec&, const Vec&)> b;
  std::function<Mat(const Vec&, const Vec&)> s;
  std::function<Vec(const Vec&, const Vec&)> gamma;
  std::function<Mat(const Vec&, const Vec&)> tau;
  /// Optional closed-form theta; when absent theta is solved from s theta = b.
  std::function<Vec(const Vec&, const Vec&)> theta_fn;

  Mat a(const Vec& x, const Vec& z) const;
  Mat psi(const Vec& x, const Vec& z) const;
  /// Market price of risk; LU solve with condition check when no closed form.
  Vec theta(const Vec& x, const Vec& z) const;

  static constexpr double kCondLimit = 1e10;
};

/// One validation check outcome.
struct ValidationCheck {
  std::string name;
  bool pass = true;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  bool ok() const;
  std::string summary() const;
};

/// Structural validation of a game configuration. Never throws; all findings
/// are reported so a CLI can print every failure at once.
ValidationReport validate_config(const GameConfig& cfg);

/// Benchmark value V_bm(t) = delta * sum(X) + (1 - delta) * sum(Z).
double benchmark_value(const MarketState& state, double delta);

/// Benchmark portfolio weights Pi_i = (delta X_i + (1-delta) Z_i) / V_bm.
/// Weights sum to one; requires a strictly positive benchmark value.
Vec benchmark_portfolio(const MarketState& state, double delta);

/// Market portfolio weights m_i = X_i / sum(X).
Vec market_portfolio(const MarketState& state);

/// Draws M investor types from cfg.type_law using per-investor counter streams
/// keyed by (cfg.seed, draw index); growing M never changes earlier draws.
std::vector<InvestorType> draw_types(const GameConfig& cfg, int count);

/// Residuals of the price-of-risk relations at one state:
/// max |(s theta - b)_i| / scale and max |(tau theta - gamma)_p| / scale.
std::pair<double, double> theta_consistency(const CoefficientSet& coeffs, const Vec& x,
                                            const Vec& z);

}  // namespace mfarb
