#include <cmath>
#include <vector>

#include "doctest.h"
#include "mfarb/stats.hpp"

using namespace mfarb;

TEST_CASE("kahan sum rescues cancellation the naive order loses") {
  stats::KahanSum k;
  k.add(1e16);
  k.add(1.0);
  k.add(-1e16);
  CHECK(k.value() == doctest::Approx(1.0).epsilon(1e-15));

  // Neumaier branch: the incoming term dominates the running sum.
  stats::KahanSum k2;
  k2.add(1.0);
  k2.add(1e16);
  k2.add(-1e16);
  CHECK(k2.value() == doctest::Approx(1.0).epsilon(1e-15));

  stats::KahanSum many;
  for (int i = 0; i < 1000000; ++i) many.add(0.1);
  CHECK(many.value() == doctest::Approx(100000.0).epsilon(1e-12));
}

TEST_CASE("mean / sd / stderr on a hand-computed vector") {
  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0, 5.0};
  CHECK(stats::mean(xs) == doctest::Approx(3.0).epsilon(1e-15));
  // sample variance = 10/4
  CHECK(stats::sample_sd(xs) == doctest::Approx(std::sqrt(2.5)).epsilon(1e-15));
  CHECK(stats::stderr_mean(xs) == doctest::Approx(std::sqrt(2.5 / 5.0)).epsilon(1e-15));
  CHECK(stats::sample_sd(std::vector<double>{7.0}) == 0.0);
}

TEST_CASE("quantile interpolates and clamps") {
  std::vector<double> xs{4.0, 1.0, 3.0, 2.0};  // unsorted on purpose
  CHECK(stats::quantile(xs, 0.0) == doctest::Approx(1.0));
  CHECK(stats::quantile(xs, 1.0) == doctest::Approx(4.0));
  CHECK(stats::quantile(xs, 0.5) == doctest::Approx(2.5));
  CHECK(stats::quantile(xs, 0.25) == doctest::Approx(1.75));
  CHECK(stats::median(std::vector<double>{5.0, 1.0, 9.0}) == doctest::Approx(5.0));
  CHECK(stats::median(std::vector<double>{1.0, 2.0}) == doctest::Approx(1.5));
}

TEST_CASE("normal cdf matches erf references") {
  CHECK(stats::norm_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(stats::norm_cdf(1.96) == doctest::Approx(0.9750021048517796).epsilon(1e-12));
  CHECK(stats::norm_cdf(-0.5) == doctest::Approx(0.3085375387259869).epsilon(1e-12));
  CHECK(stats::norm_cdf(2.5) == doctest::Approx(0.9937903346742238).epsilon(1e-12));
  CHECK(stats::norm_cdf(-3.0) + stats::norm_cdf(3.0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("normal quantile matches bisection references and inverts the cdf") {
  CHECK(stats::norm_inv(0.975) == doctest::Approx(1.9599639845400536).epsilon(1e-10));
  CHECK(stats::norm_inv(0.01) == doctest::Approx(-2.3263478740408416).epsilon(1e-10));
  CHECK(stats::norm_inv(0.6) == doctest::Approx(0.25334710313579967).epsilon(1e-10));
  for (double x = -5.0; x <= 5.0; x += 0.25) {
    CHECK(stats::norm_inv(stats::norm_cdf(x)) == doctest::Approx(x).epsilon(1e-9));
  }
}

TEST_CASE("ols slope recovers an exact line and a known two-point fit") {
  std::vector<double> x{0.0, 1.0, 2.0, 3.0};
  std::vector<double> y{2.0, 5.0, 8.0, 11.0};  // y = 3x + 2
  CHECK(stats::ols_slope(x, y) == doctest::Approx(3.0).epsilon(1e-14));

  std::vector<double> x2{1.0, 2.0, 3.0};
  std::vector<double> y2{1.0, 3.0, 2.0};
  // slope = sum((x-2)(y-2)) / sum((x-2)^2) = (1 + 0 + 0) / 2
  CHECK(stats::ols_slope(x2, y2) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("spearman handles monotone data and ties") {
  std::vector<double> n{10.0, 100.0, 1000.0};
  std::vector<double> down{5.0, 3.0, 1.0};
  std::vector<double> up{1.0, 3.0, 5.0};
  CHECK(stats::spearman(n, down) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(stats::spearman(n, up) == doctest::Approx(1.0).epsilon(1e-14));

  // Tied pair in y gets the average rank 1.5: r = 1 - 6*0.5/(4*15) = 0.95.
  std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  std::vector<double> y{0.5, 0.5, 2.0, 3.0};
  CHECK(stats::spearman(x, y) == doctest::Approx(0.9486832980505138).epsilon(1e-9));
}

TEST_CASE("simpson is exact on cubics and accurate on sin") {
  const double cubic = stats::simpson(0.0, 2.0, 2, [](double x) { return x * x * x; });
  CHECK(cubic == doctest::Approx(4.0).epsilon(1e-14));
  const double s = stats::simpson(0.0, M_PI, 128, [](double x) { return std::sin(x); });
  CHECK(s == doctest::Approx(2.0).epsilon(1e-8));
}
