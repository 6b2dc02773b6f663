#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "mfarb/measures.hpp"
#include "mfarb/rng.hpp"
#include "mfarb/sde.hpp"

using namespace mfarb;

namespace {

// Exhaustive W2 between equal-count empirical measures: minimum over all
// couplings of equal-weight atoms, i.e. over all permutations.
double brute_force_w2(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  const int N = a.count();
  std::vector<int> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (int i = 0; i < N; ++i) cost += (a.points.row(i) - b.points.row(perm[i])).squaredNorm();
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / N);
}

EmpiricalMeasure random_measure(std::uint64_t seed, std::uint64_t unit, int N, int d,
                                double shift = 0.0) {
  EmpiricalMeasure m;
  m.points = Mat(N, d);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < d; ++j)
      m.points(i, j) =
          shift + 2.0 * rng::normal(seed, rng::Stream::Scratch, unit,
                                    static_cast<std::uint64_t>(i), static_cast<std::uint32_t>(j));
  return m;
}

}  // namespace

TEST_CASE("1d quantile coupling on hand examples") {
  CHECK(w2_sorted_1d({0.0, 2.0}, {1.0, 3.0}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(w2_sorted_1d({5.0}, {2.0}) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(w2_sorted_1d({1.0, 1.0, 1.0}, {1.0, 1.0, 1.0}) == doctest::Approx(0.0));
  // Sorting happens inside: order of the inputs cannot matter.
  CHECK(w2_sorted_1d({2.0, 0.0}, {3.0, 1.0}) == doctest::Approx(1.0).epsilon(1e-15));
  // Unequal counts couple through quantiles: {0,1} vs {0.5} -> both atoms move 0.5.
  CHECK(w2_sorted_1d({0.0, 1.0}, {0.5}) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("second moment on a hand example") {
  CHECK(second_moment(EmpiricalMeasure::from_samples({0.0, 2.0})) ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("assignment w2 equals exhaustive enumeration on small measures") {
  std::uint64_t unit = 0;
  for (int d = 1; d <= 2; ++d) {
    for (int N = 2; N <= 6; ++N) {
      for (int rep = 0; rep < 4; ++rep) {
        const auto a = random_measure(424242, unit++, N, d);
        const auto b = random_measure(424242, unit++, N, d, 0.5);
        const double exact = w2_assignment(a, b);
        const double brute = brute_force_w2(a, b);
        CHECK(std::abs(exact - brute) <= 1e-9);
      }
    }
  }
}

TEST_CASE("1d sorted matching equals the assignment solver") {
  for (int rep = 0; rep < 8; ++rep) {
    const int N = 3 + rep;
    const auto a = random_measure(515151, 100 + rep, N, 1);
    const auto b = random_measure(515151, 200 + rep, N, 1, 0.3);
    std::vector<double> av(a.points.data(), a.points.data() + N);
    std::vector<double> bv(b.points.data(), b.points.data() + N);
    CHECK(std::abs(w2_sorted_1d(av, bv) - w2_assignment(a, b)) <= 1e-9);
  }
}

TEST_CASE("metric axioms on random measures") {
  const auto a = random_measure(616161, 1, 5, 2);
  const auto b = random_measure(616161, 2, 5, 2, 0.4);
  const auto c = random_measure(616161, 3, 5, 2, -0.6);
  const double dab = w2_assignment(a, b);
  const double dba = w2_assignment(b, a);
  const double dac = w2_assignment(a, c);
  const double dcb = w2_assignment(c, b);
  CHECK(w2_assignment(a, a) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(dab == doctest::Approx(dba).epsilon(1e-12));
  CHECK(dab > 0.0);
  CHECK(dab <= dac + dcb + 1e-12);
}

TEST_CASE("hungarian solver on a hand-checkable cost matrix") {
  Mat cost(3, 3);
  cost << 4.0, 1.0, 3.0,
          2.0, 0.0, 5.0,
          3.0, 2.0, 2.0;
  double total = 0.0;
  const std::vector<int> assign = solve_assignment(cost, &total);
  // Optimal: 0->1 (1), 1->0 (2), 2->2 (2) with total 5.
  CHECK(total == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(assign == std::vector<int>{1, 0, 2});
  std::vector<int> seen(3, 0);
  for (int j : assign) seen[j]++;
  CHECK(*std::min_element(seen.begin(), seen.end()) == 1);
}

TEST_CASE("sliced estimate never exceeds the exact distance") {
  for (int rep = 0; rep < 6; ++rep) {
    const auto a = random_measure(717171, 10 + rep, 12, 2);
    const auto b = random_measure(717171, 20 + rep, 12, 2, 0.8);
    const double exact = w2_assignment(a, b);
    const double sliced = sliced_w2(a, b, 64, 900 + rep);
    CHECK(sliced <= exact + 1e-9);
    CHECK(sliced >= 0.0);
  }
}

TEST_CASE("automatic method choice reports how the value was computed") {
  const auto a1 = random_measure(818181, 31, 40, 1);
  const auto b1 = random_measure(818181, 32, 40, 1);
  const W2Result r1 = wasserstein2_ex(a1, b1);
  CHECK(r1.exact);
  CHECK(r1.method == "sorted-1d");

  const auto a2 = random_measure(818181, 33, 10, 2);
  const auto b2 = random_measure(818181, 34, 10, 2);
  const W2Result r2 = wasserstein2_ex(a2, b2);
  CHECK(r2.exact);
  CHECK(r2.method == "assignment");
  CHECK(r2.value == doctest::Approx(w2_assignment(a2, b2)).epsilon(1e-12));

  W2Options opts;
  opts.assignment_cap = 8;
  const W2Result r3 = wasserstein2_ex(a2, b2, opts);
  CHECK_FALSE(r3.exact);
  CHECK(r3.method == "sliced");
  CHECK(r3.value <= w2_assignment(a2, b2) + 1e-9);
}

TEST_CASE("coupled chaos table: N = M_ref with identical streams is distance zero") {
  GameConfig cfg;
  cfg.n = 2;
  cfg.delta = 0.5;
  cfg.T = 0.125;
  cfg.x0 = Vec::Constant(2, 4.0);
  cfg.seed = 5150;
  cfg.type_law.mu_c = -1.0;
  cfg.type_law.sigma_c = 0.3;
  const CoefficientSet coeffs = gbm_coefficients(Vec::Constant(2, 0.05),
                                                 0.2 * Mat::Identity(2, 2));
  const ConvergenceTable table =
      chaos_experiment(cfg, coeffs, type_leverage_rule(0.5), {8, 16}, 16, 1.0 / 64.0, 31337, 3);
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0].N == 8);
  CHECK(table.rows[1].N == 16);
  CHECK(table.rows[1].median_w2 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(table.rows[1].mean_w2 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(table.rows[0].median_w2 > 0.0);
  CHECK(table.replications == 3);
  REQUIRE(table.samples.size() == 2);
  CHECK(table.samples[0].size() == 3);
}
