#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "mfarb/pde.hpp"
#include "mfarb/sde.hpp"
#include "mfarb/stats.hpp"
#include "mfarb/types.hpp"

using namespace mfarb;

namespace {

// Coefficient bundle with state-independent s and tau (b and gamma are not
// used by the Cauchy operator but must be well-formed).
CoefficientSet constant_coeffs(const Mat& s, const Mat& tau) {
  CoefficientSet c;
  c.n = static_cast<int>(s.rows());
  const int n = c.n;
  c.b = [n](const Vec&, const Vec&) { return Vec::Zero(n); };
  c.gamma = [n](const Vec&, const Vec&) { return Vec::Zero(n); };
  c.s = [s](const Vec&, const Vec&) { return s; };
  c.tau = [tau](const Vec&, const Vec&) { return tau; };
  c.theta_fn = [n](const Vec&, const Vec&) { return Vec::Zero(n); };
  return c;
}

ValueGrid grid1(const std::vector<double>& tau, const std::vector<double>& xs,
                const std::vector<double>& zs,
                const std::function<double(double, double, double)>& f) {
  ValueGrid g;
  g.n = 1;
  g.tau = tau;
  g.x_axes = {xs};
  g.z_axes = {zs};
  g.u.assign(g.size(), 0.0);
  for (int it = 0; it < static_cast<int>(tau.size()); ++it)
    for (int ix = 0; ix < static_cast<int>(xs.size()); ++ix)
      for (int iz = 0; iz < static_cast<int>(zs.size()); ++iz)
        g.at(it, {ix}, {iz}) = f(tau[static_cast<std::size_t>(it)],
                                 xs[static_cast<std::size_t>(ix)],
                                 zs[static_cast<std::size_t>(iz)]);
  return g;
}

ValueGrid grid2(const std::vector<double>& tau, const std::vector<double>& ax,
                const std::function<double(double, const Vec&, const Vec&)>& f) {
  ValueGrid g;
  g.n = 2;
  g.tau = tau;
  g.x_axes = {ax, ax};
  g.z_axes = {ax, ax};
  g.u.assign(g.size(), 0.0);
  const int m = static_cast<int>(ax.size());
  Vec x(2), z(2);
  for (int it = 0; it < static_cast<int>(tau.size()); ++it)
    for (int i0 = 0; i0 < m; ++i0)
      for (int i1 = 0; i1 < m; ++i1)
        for (int p0 = 0; p0 < m; ++p0)
          for (int p1 = 0; p1 < m; ++p1) {
            x << ax[static_cast<std::size_t>(i0)], ax[static_cast<std::size_t>(i1)];
            z << ax[static_cast<std::size_t>(p0)], ax[static_cast<std::size_t>(p1)];
            g.at(it, {i0, i1}, {p0, p1}) = f(tau[static_cast<std::size_t>(it)], x, z);
          }
  return g;
}

// Exact operator value divided by u for u = exp(alpha tau + k.x + l.z) under
// constant coefficients.
double exact_R(const Mat& a, const Mat& psi, const Mat& stau, const Vec& k, const Vec& l,
               double delta, double W) {
  const int n = static_cast<int>(k.size());
  double R = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      R += 0.5 * a(i, j) * (k(i) * k(j) + 2.0 * delta * k(i) / W);
      R += 0.5 * psi(i, j) * (l(i) * l(j) + 2.0 * (1.0 - delta) * l(i) / W);
      R += stau(i, j) * (k(i) * l(j) + (delta * l(j) + (1.0 - delta) * k(i)) / W);
    }
  return R;
}

}  // namespace

TEST_CASE("axis builders") {
  const auto lin = linspace(0.0, 1.0, 5);
  REQUIRE(lin.size() == 5);
  CHECK(lin.front() == 0.0);
  CHECK(lin.back() == 1.0);
  CHECK(lin[2] == doctest::Approx(0.5).epsilon(1e-15));
  for (std::size_t i = 1; i < lin.size(); ++i)
    CHECK(lin[i] - lin[i - 1] == doctest::Approx(0.25).epsilon(1e-14));

  const auto log5 = logspace(1.0, 16.0, 5);
  REQUIRE(log5.size() == 5);
  CHECK(log5.front() == 1.0);
  CHECK(log5.back() == 16.0);
  for (std::size_t i = 0; i < log5.size(); ++i)
    CHECK(log5[i] == doctest::Approx(std::pow(2.0, static_cast<double>(i))).epsilon(1e-12));

  CHECK_THROWS_AS(linspace(0.0, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(logspace(-1.0, 2.0, 4), ConfigError);
  CHECK_THROWS_AS(logspace(0.0, 2.0, 4), ConfigError);
}

TEST_CASE("grid indexing and validation") {
  ValueGrid g = grid1(linspace(0.0, 1.0, 5), linspace(1.0, 2.0, 5), linspace(1.0, 2.0, 5),
                      [](double t, double x, double z) { return t + 10.0 * x + 100.0 * z; });
  CHECK(g.size() == 125);
  CHECK(g.index(0, {0}, {0}) == 0);
  CHECK(g.index(0, {0}, {1}) == 1);   // z fastest
  CHECK(g.index(0, {1}, {0}) == 5);
  CHECK(g.index(1, {0}, {0}) == 25);  // tau slowest
  CHECK(g.value(2, {3}, {1}) == doctest::Approx(0.5 + 10.0 * 1.75 + 100.0 * 1.25).epsilon(1e-14));
  CHECK_NOTHROW(g.validate());

  ValueGrid bad = g;
  bad.n = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = g;
  bad.x_axes.push_back(linspace(1.0, 2.0, 5));
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = g;
  bad.tau[3] = bad.tau[1];  // not strictly increasing
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = g;
  bad.u.pop_back();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = g;
  bad.stderr_.assign(7, 0.0);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("constant field: zero residual exactly, interior masking") {
  Mat s(1, 1), tm(1, 1);
  s << 0.5;
  tm << 0.2;
  const CoefficientSet coeffs = constant_coeffs(s, tm);
  ValueGrid g = grid1(linspace(0.0, 1.0, 5), linspace(1.0, 2.0, 5), linspace(1.0, 2.0, 5),
                      [](double, double, double) { return 0.8; });
  const OperatorField f = apply_A(g, coeffs, 0.5);
  CHECK(f.interior_count() == 27);
  for (std::size_t i = 0; i < f.residual.size(); ++i) {
    if (!f.interior[i]) {
      CHECK(f.residual[i] == 0.0);
      continue;
    }
    CHECK(f.d_tau[i] == 0.0);
    CHECK(f.Au[i] == 0.0);
    CHECK(f.residual[i] == 0.0);
    CHECK(f.tol[i] == 0.0);  // no stderr supplied
    CHECK(f.scale[i] > 0.0);
  }

  // stderr propagation: uniform noise makes every interior tolerance positive.
  g.stderr_.assign(g.size(), 0.01);
  const OperatorField fs = apply_A(g, coeffs, 0.5);
  for (std::size_t i = 0; i < fs.tol.size(); ++i)
    if (fs.interior[i]) CHECK(fs.tol[i] > 0.0);

  ValueGrid tiny = grid1(linspace(0.0, 1.0, 4), linspace(1.0, 2.0, 5), linspace(1.0, 2.0, 5),
                         [](double, double, double) { return 1.0; });
  CHECK_THROWS_AS(apply_A(tiny, coeffs, 0.5), ConfigError);
}

TEST_CASE("manufactured solution converges at second order, n = 1") {
  Mat s(1, 1), tm(1, 1);
  s << 0.5;
  tm << 0.2;
  const CoefficientSet coeffs = constant_coeffs(s, tm);
  const double delta = 0.5, alpha = 0.3, k = 0.4, l = -0.3;
  const Mat a = s * s.transpose(), psi = tm * tm.transpose(), stau = s * tm.transpose();

  std::vector<double> log_h, log_err;
  for (int count : {5, 9, 17}) {
    ValueGrid g = grid1(linspace(0.1, 0.3, count), linspace(1.0, 2.0, count),
                        linspace(1.0, 2.0, count), [&](double t, double x, double z) {
                          return std::exp(alpha * t + k * x + l * z);
                        });
    const OperatorField f = apply_A(g, coeffs, delta);
    double worst = 0.0;
    for (int it = 1; it < count - 1; ++it)
      for (int ix = 1; ix < count - 1; ++ix)
        for (int iz = 1; iz < count - 1; ++iz) {
          const std::size_t flat = g.index(it, {ix}, {iz});
          const double x = g.x_axes[0][static_cast<std::size_t>(ix)];
          const double z = g.z_axes[0][static_cast<std::size_t>(iz)];
          const double W = delta * x + (1.0 - delta) * z;
          Vec kv(1), lv(1);
          kv << k;
          lv << l;
          const double truth = (alpha - exact_R(a, psi, stau, kv, lv, delta, W)) * g.u[flat];
          worst = std::max(worst, std::abs(f.residual[flat] - truth));
        }
    log_h.push_back(std::log(1.0 / (count - 1)));
    log_err.push_back(std::log(worst));
  }
  const double slope = stats::ols_slope(log_h, log_err);
  CHECK(slope >= 1.6);
  CHECK(slope <= 2.4);
}

TEST_CASE("manufactured solution converges at second order, n = 2") {
  Mat s(2, 2), tm(2, 2);
  s << 0.5, 0.1, 0.0, 0.4;
  tm << 0.2, 0.05, -0.1, 0.3;
  const CoefficientSet coeffs = constant_coeffs(s, tm);
  const double delta = 0.4, alpha = 0.3;
  Vec k(2), l(2);
  k << 0.4, -0.2;
  l << -0.3, 0.25;
  const Mat a = s * s.transpose(), psi = tm * tm.transpose(), stau = s * tm.transpose();

  std::vector<double> log_h, log_err;
  for (int count : {5, 9, 17}) {
    ValueGrid g = grid2(linspace(0.1, 0.3, count), linspace(1.0, 2.0, count),
                        [&](double t, const Vec& x, const Vec& z) {
                          return std::exp(alpha * t + k.dot(x) + l.dot(z));
                        });
    const OperatorField f = apply_A(g, coeffs, delta);
    double worst = 0.0;
    const int m = count;
    std::vector<int> ix(2), iz(2);
    Vec x(2), z(2);
    for (int it = 1; it < m - 1; ++it)
      for (ix[0] = 1; ix[0] < m - 1; ++ix[0])
        for (ix[1] = 1; ix[1] < m - 1; ++ix[1])
          for (iz[0] = 1; iz[0] < m - 1; ++iz[0])
            for (iz[1] = 1; iz[1] < m - 1; ++iz[1]) {
              const std::size_t flat = g.index(it, ix, iz);
              x << g.x_axes[0][static_cast<std::size_t>(ix[0])],
                  g.x_axes[1][static_cast<std::size_t>(ix[1])];
              z << g.z_axes[0][static_cast<std::size_t>(iz[0])],
                  g.z_axes[1][static_cast<std::size_t>(iz[1])];
              const double W = delta * x.sum() + (1.0 - delta) * z.sum();
              const double truth =
                  (alpha - exact_R(a, psi, stau, k, l, delta, W)) * g.u[flat];
              worst = std::max(worst, std::abs(f.residual[flat] - truth));
            }
    log_h.push_back(std::log(1.0 / (count - 1)));
    log_err.push_back(std::log(worst));
  }
  const double slope = stats::ols_slope(log_h, log_err);
  CHECK(slope >= 1.6);
  CHECK(slope <= 2.4);
}

TEST_CASE("structural value x / W solves the equation for any coefficients") {
  // u = C x / (delta x + (1-delta) z) is annihilated by the operator: all
  // three blocks cancel pointwise.  The discrete residual is pure truncation
  // error and shrinks at second order.
  const CoefficientSet coeffs =
      gbm_coefficients(Vec::Constant(1, 0.05), 0.3 * Mat::Identity(1, 1));
  const double delta = 0.5, e_bar = 0.3;
  const double C = std::exp(-1.2) * delta / (1.0 - (1.0 - delta) * e_bar);

  std::vector<double> log_h, log_err;
  for (int count : {5, 9, 17}) {
    // Power-of-two tau spacing keeps the (value-independent) time stencil exact.
    ValueGrid g = grid1(linspace(0.0, 1.0, count), linspace(1.0, 2.0, count),
                        linspace(1.0, 2.0, count), [&](double, double x, double z) {
                          return C * x / (delta * x + (1.0 - delta) * z);
                        });
    const OperatorField f = apply_A(g, coeffs, delta);
    double worst = 0.0;
    for (std::size_t i = 0; i < f.residual.size(); ++i) {
      if (!f.interior[i]) continue;
      CHECK(f.d_tau[i] == 0.0);  // u is tau-independent and the stencil is exact
      worst = std::max(worst, std::abs(f.residual[i]));
    }
    log_h.push_back(std::log(1.0 / (count - 1)));
    log_err.push_back(std::log(worst));
    // Every operator block cancels internally for this solution, so the scale
    // field is itself truncation-sized; only the absolute residual is
    // meaningful.  Observed 2.8e-6 on the finest grid.
    if (count == 17) CHECK(worst < 1e-5);
  }
  const double slope = stats::ols_slope(log_h, log_err);
  CHECK(slope >= 1.6);
  CHECK(slope <= 2.4);
}

TEST_CASE("minimal-solution verdicts") {
  Mat s(1, 1), tm(1, 1);
  s << 0.5;
  tm << 0.2;
  const CoefficientSet coeffs = constant_coeffs(s, tm);
  const auto lin = linspace(0.0, 1.0, 5);
  const auto ax = linspace(1.0, 2.0, 5);

  // Constant positive field below the bound: clean pass.
  ValueGrid ok = grid1(lin, ax, ax, [](double, double, double) { return 0.8; });
  const MinSolutionReport good = verify_min_solution(ok, coeffs, 0.5, 1.0);
  CHECK(good.pass);
  CHECK(good.nodes_checked == 125);
  CHECK(good.interior_checked == 27);
  CHECK(good.bound_violations == 0);
  CHECK(good.pde_violations == 0);
  CHECK(good.median_rel_residual == 0.0);

  // Same field against a tighter bound: every node violates the bound.
  const MinSolutionReport above = verify_min_solution(ok, coeffs, 0.5, 0.5);
  CHECK_FALSE(above.pass);
  CHECK(above.bound_violations == 125);
  CHECK(above.worst_bound_gap == doctest::Approx(0.3).epsilon(1e-9));

  // Strict subsolution: d_tau u < 0 < A u on every interior node.
  ValueGrid bad = grid1(lin, ax, ax, [](double t, double x, double) {
    return (1.0 - 0.5 * t) * std::exp(0.4 * x);
  });
  const MinSolutionReport sub = verify_min_solution(bad, coeffs, 0.5, 10.0);
  CHECK_FALSE(sub.pass);
  CHECK(sub.pde_violations == 27);
  CHECK(sub.worst_pde_gap > 0.0);
  CHECK(sub.median_rel_residual > 0.0);

  // Strict supersolution passes: the check is one-sided.
  ValueGrid super = grid1(lin, ax, ax, [](double t, double, double) { return 1.0 + t; });
  const MinSolutionReport sup = verify_min_solution(super, coeffs, 0.5, 3.0);
  CHECK(sup.pass);
  CHECK(sup.pde_violations == 0);

  // Nonpositive values are bound violations regardless of the bound.
  ValueGrid neg = ok;
  neg.u[13] = -0.2;
  const MinSolutionReport np = verify_min_solution(neg, coeffs, 0.5, 1.0);
  CHECK_FALSE(np.pass);
  CHECK(np.bound_violations == 1);
}
