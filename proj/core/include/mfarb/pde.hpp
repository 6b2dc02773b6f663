#pragma once

// Finite-difference evaluation of the Cauchy operator for value functions on
// small tensor grids, and verification that numerically estimated values are
// supersolutions: d u / d tau >= A u within the Monte Carlo noise tolerance.
//
// The operator (W = delta x . 1 + (1-delta) z . 1):
//
//   A u = 1/2 sum_ij a_ij (D2_xixj u + 2 delta D_xi u / W)
//       + 1/2 sum_pq psi_pq (D2_zpzq u + 2 (1-delta) D_zp u / W)
//       + sum_ip (s tau')_ip D2_xizp u
//       + sum_ip (s tau')_ip (delta D_zp u + (1-delta) D_xi u) / W
//
// evaluated with nonuniform central differences on the interior nodes.

#include <cstdint>
#include <vector>

#include "mfarb/market.hpp"
#include "mfarb/types.hpp"

namespace mfarb {

/// Value estimates on a tensor grid [tau] x [x_1..x_n] x [z_1..z_n], flattened
/// with tau slowest and z_n fastest.  Axes must be strictly increasing;
/// stderr_ is either empty or aligned with u.
struct ValueGrid {
  int n = 1;
  std::vector<double> tau;
  std::vector<std::vector<double>> x_axes;
  std::vector<std::vector<double>> z_axes;
  std::vector<double> u;
  std::vector<double> stderr_;

  std::size_t size() const;
  std::size_t index(int it, const std::vector<int>& ix, const std::vector<int>& iz) const;
  double& at(int it, const std::vector<int>& ix, const std::vector<int>& iz);
  double value(int it, const std::vector<int>& ix, const std::vector<int>& iz) const;
  /// Validates axis monotonicity and storage sizes; throws ConfigError.
  void validate() const;
};

/// Evenly spaced nodes including both ends.
std::vector<double> linspace(double a, double b, int count);
/// Geometrically spaced nodes including both ends (a, b > 0).
std::vector<double> logspace(double a, double b, int count);

/// Residual field of the Cauchy problem on the grid interior.
struct OperatorField {
  std::vector<double> d_tau;      ///< time derivative per node (interior only)
  std::vector<double> Au;         ///< operator value per node
  std::vector<double> residual;   ///< d_tau - Au
  std::vector<double> scale;      ///< |d_tau| + sum of block magnitudes
  std::vector<double> tol;        ///< propagated stderr of the residual (1 sigma)
  std::vector<std::uint8_t> interior;  ///< 1 on evaluated nodes

  long interior_count() const;
};

/// Central-difference evaluation of d_tau u - A u on all interior nodes.
/// Every axis needs at least 5 nodes.
OperatorField apply_A(const ValueGrid& grid, const CoefficientSet& coeffs, double delta);

struct MinSolutionReport {
  long nodes_checked = 0;
  long interior_checked = 0;
  long bound_violations = 0;   ///< u <= value_bound + tol failures (or u <= 0)
  long pde_violations = 0;     ///< supersolution failures beyond tolerance
  double worst_bound_gap = 0.0;
  double worst_pde_gap = 0.0;
  double median_rel_residual = 0.0;
  double tol_mult = 3.0;
  bool pass = false;
};

/// Checks the minimality characterization: 0 < u <= value_bound everywhere and
/// d_tau u >= A u on the interior, both within tol_mult * propagated stderr.
MinSolutionReport verify_min_solution(const ValueGrid& grid, const CoefficientSet& coeffs,
                                      double delta, double value_bound, double tol_mult = 3.0);

}  // namespace mfarb
