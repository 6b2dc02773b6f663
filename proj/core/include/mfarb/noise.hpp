#pragma once

// Common-noise paths: Brownian increments shared by every particle of an
// ensemble.  Increments are materialized from counter-based draws keyed by
// (seed, path index, step), so a path is fully determined by its address and
// can be re-generated or refined without storing state.

#include <cstdint>

#include "mfarb/types.hpp"

namespace mfarb {

struct NoisePath {
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;
  Mat dB;  ///< steps x n matrix of N(0, dt) increments

  int steps() const { return static_cast<int>(dB.rows()); }
  int dims() const { return static_cast<int>(dB.cols()); }
};

/// Materializes the increments of common-noise path `path_index`.
NoisePath make_noise_path(std::uint64_t seed, std::uint64_t path_index, int steps, int n,
                          double dt);

/// Number of steps for horizon T at spacing dt; requires dt to divide T
/// (within 1e-9 relative) and throws ConfigError otherwise.
int step_count(double T, double dt);

/// Grid index of time t in [0, T]; requires t to sit on the dt grid
/// (within 1e-9 relative) and throws ConfigError otherwise.
int step_index(double t, double T, double dt);

}  // namespace mfarb
