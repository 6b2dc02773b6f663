#include "mfarb/market.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "mfarb/rng.hpp"
#include "mfarb/stats.hpp"

namespace mfarb {

double TypeLaw::exp_c_mean() const {
  if (sigma_c <= 0.0) return std::exp(mu_c);
  const double za = (c_min - mu_c) / sigma_c;
  const double zb = (c_max - mu_c) / sigma_c;
  const double mass = stats::norm_cdf(zb) - stats::norm_cdf(za);
  if (mass <= 0.0) throw ConfigError("type law truncation removes all mass");
  const double inv = 1.0 / (sigma_c * std::sqrt(2.0 * std::numbers::pi) * mass);
  const auto integrand = [&](double c) {
    const double zscore = (c - mu_c) / sigma_c;
    return std::exp(c) * inv * std::exp(-0.5 * zscore * zscore);
  };
  return stats::simpson(c_min, c_max, 2048, integrand);
}

double TypeLaw::sample_c(double u) const {
  if (sigma_c <= 0.0) return mu_c;
  const double za = (c_min - mu_c) / sigma_c;
  const double zb = (c_max - mu_c) / sigma_c;
  const double Fa = stats::norm_cdf(za);
  const double Fb = stats::norm_cdf(zb);
  const double p = Fa + u * (Fb - Fa);
  return mu_c + sigma_c * stats::norm_inv(p);
}

Mat CoefficientSet::a(const Vec& x, const Vec& z) const {
  const Mat sm = s(x, z);
  return sm * sm.transpose();
}

Mat CoefficientSet::psi(const Vec& x, const Vec& z) const {
  const Mat tm = tau(x, z);
  return tm * tm.transpose();
}

Vec CoefficientSet::theta(const Vec& x, const Vec& z) const {
  if (theta_fn) return theta_fn(x, z);
  const Mat sm = s(x, z);
  const Vec bv = b(x, z);
  Eigen::PartialPivLU<Mat> lu(sm);
  const double rc = lu.rcond();
  if (!(rc > 1.0 / kCondLimit))
    throw DegeneracyError("diffusion matrix ill-conditioned solving for theta (rcond " +
                          std::to_string(rc) + ")");
  return lu.solve(bv);
}

std::pair<double, double> theta_consistency(const CoefficientSet& coeffs, const Vec& x,
                                            const Vec& z) {
  const Vec th = coeffs.theta(x, z);
  const Mat sm = coeffs.s(x, z);
  const Vec bv = coeffs.b(x, z);
  const Mat tm = coeffs.tau(x, z);
  const Vec gv = coeffs.gamma(x, z);
  const double sb = std::max(1.0, bv.cwiseAbs().maxCoeff());
  const double sg = std::max(1.0, gv.cwiseAbs().maxCoeff());
  const double r1 = (sm * th - bv).cwiseAbs().maxCoeff() / sb;
  const double r2 = (tm * th - gv).cwiseAbs().maxCoeff() / sg;
  return {r1, r2};
}

bool ValidationReport::ok() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& c : checks)
    os << (c.pass ? "[ok]   " : "[FAIL] ") << c.name << (c.detail.empty() ? "" : ": " + c.detail)
       << '\n';
  return os.str();
}

namespace {

void check(ValidationReport& rep, const std::string& name, bool pass, std::string detail = "") {
  rep.checks.push_back({name, pass, std::move(detail)});
}

}  // namespace

ValidationReport validate_config(const GameConfig& cfg) {
  ValidationReport rep;
  check(rep, "delta in (0,1]", cfg.delta > 0.0 && cfg.delta <= 1.0,
        "delta = " + std::to_string(cfg.delta));
  check(rep, "horizon positive", cfg.T > 0.0, "T = " + std::to_string(cfg.T));
  check(rep, "at least one stock", cfg.n >= 1, "n = " + std::to_string(cfg.n));
  check(rep, "x0 size matches n", static_cast<int>(cfg.x0.size()) == cfg.n,
        "x0 has " + std::to_string(cfg.x0.size()) + " entries");
  bool pos = cfg.x0.size() > 0;
  for (int i = 0; i < cfg.x0.size(); ++i) pos = pos && cfg.x0[i] > 0.0;
  check(rep, "capitalizations positive", pos);
  check(rep, "type spread non-negative", cfg.type_law.sigma_c >= 0.0);
  check(rep, "type truncation ordered", cfg.type_law.c_min < cfg.type_law.c_max);
  check(rep, "initial wealth scale positive", cfg.type_law.v0_scale > 0.0);
  double ec = 0.0;
  bool ec_ok = true;
  std::string ec_detail;
  try {
    ec = cfg.e_c_mean();
    ec_ok = ec > 0.0 && std::isfinite(ec);
    ec_detail = "E[e^c] = " + std::to_string(ec);
  } catch (const std::exception& e) {
    ec_ok = false;
    ec_detail = e.what();
  }
  check(rep, "mean target premium finite and positive", ec_ok, ec_detail);
  return rep;
}

double benchmark_value(const MarketState& state, double delta) {
  return delta * state.X.sum() + (1.0 - delta) * state.Z.sum();
}

Vec benchmark_portfolio(const MarketState& state, double delta) {
  const double v = benchmark_value(state, delta);
  if (!(v > 0.0)) throw DegeneracyError("benchmark value must be positive");
  return (delta * state.X + (1.0 - delta) * state.Z) / v;
}

Vec market_portfolio(const MarketState& state) {
  const double x = state.X.sum();
  if (!(x > 0.0)) throw DegeneracyError("total capitalization must be positive");
  return state.X / x;
}

std::vector<InvestorType> draw_types(const GameConfig& cfg, int count) {
  std::vector<InvestorType> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int ell = 0; ell < count; ++ell) {
    const double u = rng::uniform01(cfg.seed, rng::Stream::TypeDraw,
                                    static_cast<std::uint64_t>(ell), 0);
    InvestorType ty;
    ty.c = cfg.type_law.sample_c(u);
    ty.v0 = cfg.type_law.v0_mode == TypeLaw::V0Mode::ExpC
                ? cfg.type_law.v0_scale * std::exp(ty.c)
                : cfg.type_law.v0_scale;
    out.push_back(ty);
  }
  return out;
}

}  // namespace mfarb
