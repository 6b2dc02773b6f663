#pragma once

// Reproducible experiment runner: a declarative spec covering every command of
// the toolkit, JSON (de)serialization, and an executor that writes all
// artifacts under one output directory.
//
// Reproducibility contract: the manifest captures the resolved spec minus the
// two dispositional fields (worker count and output directory).  No artifact
// embeds timestamps, hostnames, worker counts, or absolute paths, and every
// reduction in the core is draw-order blocked, so identical manifests produce
// byte-identical artifacts at any worker count.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mfarb/market.hpp"
#include "mfarb/types.hpp"

namespace mfarb {

struct ExperimentSpec {
  std::string command = "simulate";  ///< simulate | solve | chaos | verify-pde | check-uniqueness
  std::string model = "vsm";         ///< vsm | gbm
  int n = 2;
  double delta = 0.5;
  double T = 1.0;
  double dt = 1.0 / 256.0;
  int paths = 1024;   ///< Monte Carlo paths (solve / value estimates)
  int types = 64;     ///< particle-ensemble size
  std::uint64_t seed = 12345;
  int workers = 1;              ///< 0 = hardware concurrency; never serialized
  std::string out_dir = "out";  ///< artifact directory; never serialized

  // Model parameters.
  double C_x = 1.0;             ///< volatility-stabilized drift scale
  std::vector<double> x0;       ///< initial capitalizations; empty = ones(n)
  std::vector<double> z0;       ///< initial interaction; empty = model prescription
  double gbm_beta = 0.05;       ///< constant-parameter model drift
  double gbm_sigma = 0.2;       ///< constant-parameter model volatility (diagonal)

  // Investor type law.
  double mu_c = 0.0;
  double sigma_c = 0.0;
  double c_min = -10.0;
  double c_max = 10.0;
  std::string v0_mode = "unit";  ///< unit | expc
  std::optional<double> e_c_override;

  // Finite-population convergence study.
  std::vector<int> chaos_N = {8, 32, 128};
  int replications = 10;
  int M_ref = 512;

  // Fixed-point solve.
  double tol = 1e-6;
  int max_iter = 25;

  // Operator verification grid.
  int grid_nodes = 7;
  int tau_nodes = 5;
  double tau_max = 0.5;
  int M_oracle = 2000;

  // Uniqueness check input.
  double uniq_M = 0.1;

  /// Structural validation; throws ConfigError on the first failure.
  void validate() const;
  /// Canonical JSON (sorted keys).  With `manifest` set, wraps the spec in the
  /// manifest envelope and drops the dispositional fields.
  std::string to_json(bool manifest = false) const;
  /// Accepts either a bare spec object or a manifest envelope.
  static ExperimentSpec from_json(const std::string& text);
  static ExperimentSpec from_file(const std::filesystem::path& file);
};

/// Game configuration implied by a spec (type law, horizon, seed, x0).
GameConfig game_config_of(const ExperimentSpec& spec);
/// Coefficient bundle for the spec's model.
CoefficientSet coefficients_of(const ExperimentSpec& spec);
/// Initial interaction override: explicit z0 when given, otherwise the model
/// prescription (self-consistent for "vsm", empty for "gbm").
std::optional<Vec> initial_interaction_of(const ExperimentSpec& spec);

struct Metric {
  std::string name;
  double value = 0.0;
  std::optional<double> stderr_;
};

struct RunResult {
  std::filesystem::path dir;
  std::vector<std::string> files;  ///< artifact names relative to dir, in write order
  std::vector<Metric> metrics;     ///< the run.log content
};

/// Executes the experiment described by the spec.  Creates spec.out_dir,
/// writes manifest.json, the command's data artifacts, and run.log, and
/// returns the metric list.
RunResult run_experiment(const ExperimentSpec& spec);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

}  // namespace mfarb
