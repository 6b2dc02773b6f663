#pragma once

// Common aliases and error taxonomy for the mean-field arbitrage toolkit.

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace mfarb {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Invalid or inconsistent configuration (maps to CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failure during computation (maps to CLI exit code 3).
/// Carries the simulation step index when one is meaningful.
struct NumericalError : std::runtime_error {
  long step = -1;
  explicit NumericalError(const std::string& what, long step_index = -1)
      : std::runtime_error(step_index >= 0 ? what + " (step " + std::to_string(step_index) + ")"
                                           : what),
        step(step_index) {}
};

/// Degenerate market input (singular diffusion, empty support, pole crossing).
struct DegeneracyError : NumericalError {
  using NumericalError::NumericalError;
};

}  // namespace mfarb
