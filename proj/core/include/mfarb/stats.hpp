#pragma once

// Scalar statistics and small numeric utilities shared across modules.

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace mfarb::stats {

/// Compensated (Neumaier) summation; order-stable accumulation helper.
class KahanSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double mean(std::span<const double> xs);
/// Sample standard deviation (ddof = 1); 0 for fewer than two points.
double sample_sd(std::span<const double> xs);
/// Standard error of the mean.
double stderr_mean(std::span<const double> xs);

/// Empirical quantile with linear interpolation, q in [0,1].
double quantile(std::vector<double> xs, double q);
double median(std::vector<double> xs);

/// Standard normal CDF.
double norm_cdf(double x);
/// Inverse standard normal CDF (Acklam approximation + Halley refinement).
double norm_inv(double p);

/// Least-squares slope of y against x.
double ols_slope(std::span<const double> x, std::span<const double> y);

/// Spearman rank correlation (average ranks on ties).
double spearman(std::span<const double> x, std::span<const double> y);

/// Composite Simpson integral of f over [a,b] with `panels` even subdivisions.
double simpson(double a, double b, int panels, const std::function<double(double)>& f);

}  // namespace mfarb::stats
