#pragma once

// Empirical measures and Wasserstein-2 distances.
//
// Exact W2 between equal-weight empirical measures is an optimal assignment
// problem; in one dimension it reduces to quantile coupling.  Beyond the
// assignment budget a sliced (random-projection) estimate is used, which is a
// lower-bound-style proxy: each projection is 1-Lipschitz, so the sliced value
// never exceeds the exact distance.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mfarb/market.hpp"
#include "mfarb/sde.hpp"
#include "mfarb/types.hpp"

namespace mfarb {

/// Equal-weight empirical measure: one row per atom.
struct EmpiricalMeasure {
  Mat points;

  int count() const { return static_cast<int>(points.rows()); }
  int dim() const { return static_cast<int>(points.cols()); }

  static EmpiricalMeasure from_samples(const std::vector<double>& xs);
};

/// Second moment M_2 = sqrt(mean |x|^2).
double second_moment(const EmpiricalMeasure& m);

struct W2Options {
  int assignment_cap = 256;   ///< largest point count solved exactly
  int projections = 64;       ///< sliced directions beyond the cap
  std::uint64_t seed = 777;   ///< seed for projection directions
};

struct W2Result {
  double value = 0.0;
  bool exact = true;
  std::string method;
};

/// W2 with automatic method choice (excact in 1D and within the assignment
/// budget, sliced otherwise).
W2Result wasserstein2_ex(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                         const W2Options& opts = {});
double wasserstein2(const EmpiricalMeasure& a, const EmpiricalMeasure& b);

/// Exact 1D W2 by quantile coupling; supports unequal atom counts.
double w2_sorted_1d(std::vector<double> a, std::vector<double> b);

/// Exact W2 by optimal assignment (equal counts; unequal counts are replicated
/// to the least common multiple when it fits the cap).
double w2_assignment(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                     int assignment_cap = 256);

/// Sliced W2: root-mean-square of 1D distances over random directions.
double sliced_w2(const EmpiricalMeasure& a, const EmpiricalMeasure& b, int projections,
                 std::uint64_t seed);

/// Minimum-cost perfect matching for a square cost matrix (Hungarian method
/// with potentials, O(N^3)).  Returns row->column assignment.
std::vector<int> solve_assignment(const Mat& cost, double* total_cost = nullptr);

/// One row of a finite-population convergence study.
struct ChaosRow {
  int N = 0;
  double median_w2 = 0.0;
  double mean_w2 = 0.0;
  double stderr_w2 = 0.0;
};

struct ConvergenceTable {
  std::vector<ChaosRow> rows;
  double loglog_slope = 0.0;     ///< slope of log median W2 against log N
  double spearman_corr = 0.0;    ///< rank correlation of N vs median W2
  int replications = 0;
  std::vector<std::vector<double>> samples;  ///< per-row replication distances

  void write_csv(const std::filesystem::path& file) const;
};

/// Finite-population convergence toward the conditional-law reference.
/// For every replication, an N-player system and an M_ref-particle reference
/// are coupled on the same common-noise path and nested type draws; rows
/// report W2 between terminal wealth measures across replications.
/// `freeze_interaction` switches to the independent-particle control (Z frozen,
/// so particles are i.i.d. transforms of their types given the noise).
ConvergenceTable chaos_experiment(const GameConfig& cfg, const CoefficientSet& coeffs,
                                  const StrategyRule& rule, const std::vector<int>& N_list,
                                  int M_ref, double dt, std::uint64_t seed, int replications = 10,
                                  bool freeze_interaction = false, int workers = 1);

}  // namespace mfarb
