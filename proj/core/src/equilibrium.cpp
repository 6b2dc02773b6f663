#include "mfarb/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "mfarb/noise.hpp"
#include "mfarb/parallel.hpp"
#include "mfarb/stats.hpp"

namespace mfarb {

using stats::KahanSum;

namespace {

constexpr int kAggBlock = 256;
constexpr double kPoleMargin = 1e-10;

template <typename F>
double blocked_mean(int count, F&& f) {
  KahanSum total;
  for (int b0 = 0; b0 < count; b0 += kAggBlock) {
    const int b1 = std::min(count, b0 + kAggBlock);
    KahanSum block;
    for (int i = b0; i < b1; ++i) block.add(f(i));
    total.add(block.value());
  }
  return total.value() / static_cast<double>(count);
}

template <typename F>
std::pair<double, double> blocked_mean_stderr(int count, F&& f) {
  const double m = blocked_mean(count, f);
  KahanSum sq;
  for (int i = 0; i < count; ++i) {
    const double d = f(i) - m;
    sq.add(d * d);
  }
  if (count < 2) return {m, 0.0};
  const double var = sq.value() / static_cast<double>(count - 1);
  return {m, std::sqrt(var / static_cast<double>(count))};
}

double interaction_q(double delta, double e_c_mean) { return (1.0 - delta) * e_c_mean; }

double f_of(double q, double u, long step = -1) {
  const double denom = 1.0 - q * u;
  if (denom <= kPoleMargin) throw NumericalError("uniqueness band violated", step);
  return 1.0 / denom;
}

}  // namespace

// ---------------------------------------------------------------------------
// ValuePath

double ValuePath::at_togo(double tau) const {
  if (vals.empty()) throw ConfigError("empty value path");
  const double pos = std::clamp(tau, 0.0, T) / dt;
  const int k0 = std::min(static_cast<int>(pos), steps());
  const int k1 = std::min(k0 + 1, steps());
  const double w = pos - static_cast<double>(k0);
  return (1.0 - w) * vals[static_cast<std::size_t>(k0)] + w * vals[static_cast<std::size_t>(k1)];
}

ValuePath ValuePath::ones(double T, double dt) {
  ValuePath u;
  u.T = T;
  u.dt = dt;
  u.vals.assign(static_cast<std::size_t>(step_count(T, dt)) + 1, 1.0);
  return u;
}

double ValuePath::band_upper(double delta, double e_c_mean) {
  const double q = interaction_q(delta, e_c_mean);
  if (q <= 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / q;
}

bool ValuePath::within_band(double delta, double e_c_mean) const {
  const double hi = band_upper(delta, e_c_mean);
  for (double v : vals)
    if (!(v > 0.0) || !(v < hi)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// value closure

Vec closure_interaction(double delta, double e_c_mean, double u_togo, const Vec& X) {
  const double x_tot = X.sum();
  const double vbm = closure_benchmark(delta, e_c_mean, u_togo, x_tot);
  return (e_c_mean * u_togo * vbm / x_tot) * X;
}

double closure_benchmark(double delta, double e_c_mean, double u_togo, double x_total) {
  const double q = interaction_q(delta, e_c_mean);
  return delta * x_total * f_of(q, u_togo);
}

ClosureBatch simulate_value_closure(const GameConfig& cfg, const CoefficientSet& coeffs,
                                    const ValuePath& U, const ClosureOptions& opts) {
  const int steps = step_count(cfg.T, opts.dt);
  const int n = cfg.n;
  const double e_bar = cfg.e_c_mean();

  Vec x_start = cfg.x0;
  int k0 = 0;
  if (opts.start.has_value()) {
    if (opts.start->X.size() != n) throw ConfigError("closure start state has wrong dimension");
    x_start = opts.start->X;
    k0 = step_index(opts.start->t, cfg.T, opts.dt);
  }

  ClosureBatch batch;
  batch.start_step = k0;
  batch.t.resize(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) batch.t[static_cast<std::size_t>(k)] = k * opts.dt;
  batch.Xtot.resize(opts.paths, steps + 1);
  batch.L.resize(opts.paths, steps + 1);

  const double x_scale = x_start.cwiseAbs().maxCoeff();

  auto run_paths = [&](int, int begin, int end) {
    for (int p = begin; p < end; ++p) {
      const NoisePath noise =
          make_noise_path(opts.seed, opts.path_offset + static_cast<std::uint64_t>(p), steps, n,
                          opts.dt);
      Vec X = x_start;
      double L = 1.0;
      for (int k = 0; k <= k0; ++k) {
        batch.Xtot(p, k) = X.sum();
        batch.L(p, k) = 1.0;
      }
      for (int k = k0; k < steps; ++k) {
        const double tau_left = cfg.T - k * opts.dt;  // time to go at the step start
        const double u = U.at_togo(tau_left);
        const Vec Z = closure_interaction(cfg.delta, e_bar, u, X);
        const Vec beta = beta_of(coeffs, X, Z);
        const Mat sigma = sigma_of(coeffs, X, Z);
        const Vec theta = coeffs.theta(X, Z);
        const Eigen::RowVectorXd dB = noise.dB.row(k);
        L *= std::exp(-theta.dot(dB.transpose()) - 0.5 * theta.squaredNorm() * opts.dt);
        for (int i = 0; i < n; ++i) {
          X[i] *= std::exp((beta[i] - 0.5 * sigma.row(i).squaredNorm()) * opts.dt +
                           sigma.row(i).dot(dB));
          if (!std::isfinite(X[i]) || X[i] > x_scale * 1e12) {
            throw NumericalError("capitalization overflow during closure simulation", k);
          }
        }
        batch.Xtot(p, k + 1) = X.sum();
        batch.L(p, k + 1) = L;
      }
    }
  };
  parallel_blocks(opts.paths, 16, opts.workers, run_paths);

  batch.Xhat = batch.Xtot.cwiseProduct(batch.L);
  return batch;
}

// ---------------------------------------------------------------------------
// Feynman-Kac estimators

UEstimate estimate_U(const GameConfig& cfg, const CoefficientSet& coeffs, const StrategyRule& rule,
                     double t, int M_outer, double dt, std::uint64_t seed,
                     const EstimateOptions& opts) {
  const int steps = step_count(cfg.T, dt);
  const int k0 = step_index(t, cfg.T, dt);
  if (k0 == steps) return {1.0, 0.0};

  SimOptions sopts;
  sopts.dt = dt;
  sopts.workers = 1;  // parallelism goes across outer continuations
  sopts.track_deflator = true;
  sopts.z0 = opts.z0;

  const std::vector<InvestorType> types = draw_types(cfg, opts.M_inner);
  EnsembleSim base(cfg, coeffs, types, rule, sopts);
  const NoisePath base_noise = make_noise_path(seed, 0, steps, cfg.n, dt);
  for (int k = 0; k < k0; ++k) {
    base.close();
    base.step(base_noise.dB.row(k));
  }
  base.close();
  const double denom = base.benchmark() * base.deflator();
  if (!(denom > 1e-12)) throw DegeneracyError("benchmark-deflator denominator vanished", k0);

  std::vector<double> samples(static_cast<std::size_t>(M_outer));
  auto run = [&](int, int begin, int end) {
    for (int j = begin; j < end; ++j) {
      EnsembleSim cont = base;
      const NoisePath noise =
          make_noise_path(seed, 1 + static_cast<std::uint64_t>(j), steps, cfg.n, dt);
      for (int k = k0; k < steps; ++k) {
        cont.close();
        cont.step(noise.dB.row(k));
      }
      cont.close();
      samples[static_cast<std::size_t>(j)] = cont.benchmark() * cont.deflator() / denom;
    }
  };
  parallel_blocks(M_outer, 16, opts.workers, run);

  auto [m, se] = blocked_mean_stderr(M_outer, [&](int j) {
    return samples[static_cast<std::size_t>(j)];
  });
  return {m, se};
}

UEstimate estimate_U_closure(const GameConfig& cfg, const CoefficientSet& coeffs,
                             const ValuePath& U, const MarketState& state, int M_outer, double dt,
                             std::uint64_t seed, int workers) {
  const double e_bar = cfg.e_c_mean();
  const double denom = benchmark_value(state, cfg.delta);
  if (!(denom > 1e-12)) throw DegeneracyError("benchmark denominator vanished", -1);

  ClosureOptions copts;
  copts.paths = M_outer;
  copts.dt = dt;
  copts.workers = workers;
  copts.seed = seed;
  copts.start = state;
  const ClosureBatch batch = simulate_value_closure(cfg, coeffs, U, copts);

  const int last = static_cast<int>(batch.t.size()) - 1;
  const double q = interaction_q(cfg.delta, e_bar);
  const double f1 = f_of(q, U.at_togo(0.0));
  auto [m, se] = blocked_mean_stderr(M_outer, [&](int p) {
    const double vbm_T = cfg.delta * batch.Xtot(p, last) * f1;
    return vbm_T * batch.L(p, last) / denom;
  });
  return {m, se};
}

// ---------------------------------------------------------------------------
// fixed-point operator

GResult apply_G(const GameConfig& cfg, const CoefficientSet& coeffs, const ValuePath& U,
                const GOptions& opts) {
  const double e_bar = cfg.e_c_mean();
  const double q = interaction_q(cfg.delta, e_bar);
  const int steps = U.steps();
  if (steps != step_count(cfg.T, opts.dt)) throw ConfigError("value path grid mismatch");
  if (!U.within_band(cfg.delta, e_bar)) throw NumericalError("uniqueness band violated", -1);

  const double v0 = closure_benchmark(cfg.delta, e_bar, U.horizon_value(), cfg.x0_total());

  ClosureOptions copts;
  copts.paths = opts.paths;
  copts.dt = opts.dt;
  copts.workers = opts.workers;
  copts.seed = opts.seed;
  copts.path_offset = opts.path_offset;
  const ClosureBatch batch = simulate_value_closure(cfg, coeffs, U, copts);

  GResult out;
  out.v_bm0 = v0;
  out.U.T = cfg.T;
  out.U.dt = opts.dt;
  out.U.vals.resize(static_cast<std::size_t>(steps) + 1);
  out.stderr_.assign(static_cast<std::size_t>(steps) + 1, 0.0);
  out.U.vals[0] = 1.0;
  for (int k = 1; k <= steps; ++k) {
    auto [abar, se] = blocked_mean_stderr(opts.paths, [&](int p) { return batch.Xhat(p, k); });
    // Value at time-to-go tau_k: interaction factor evaluated at the value
    // with calendar time tau_k remaining mirrored across the grid.
    const double fac = cfg.delta * f_of(q, U.vals[static_cast<std::size_t>(steps - k)]) / v0;
    out.U.vals[static_cast<std::size_t>(k)] = fac * abar;
    out.stderr_[static_cast<std::size_t>(k)] = fac * se;
  }
  return out;
}

// ---------------------------------------------------------------------------
// uniqueness arithmetic

UniquenessReport check_uniqueness(double delta, double e_c_mean, double M_bound, double x0_total) {
  if (!(delta > 0.0) || delta > 1.0) throw ConfigError("check_uniqueness requires delta in (0,1]");
  if (!(e_c_mean > 0.0)) throw ConfigError("check_uniqueness requires E[e^c] > 0");
  UniquenessReport r;
  r.delta = delta;
  r.e_c_mean = e_c_mean;
  r.M_input = M_bound;
  r.x0_total = x0_total;
  const double q = interaction_q(delta, e_c_mean);
  r.cond1_value = (1.0 - delta * delta) / delta * e_c_mean;
  r.cond1_pass = r.cond1_value > 0.0 && r.cond1_value < 1.0;
  r.cond2_bound = x0_total * (delta + e_c_mean * (delta * delta - 1.0)) / (1.0 - q);
  r.cond2_pass = M_bound < r.cond2_bound;
  r.lambda = (1.0 - q) / delta;
  r.L_f = (1.0 - delta) * e_c_mean / ((1.0 - q) * (1.0 - q));
  r.M_hat = M_bound / (delta * x0_total);
  r.contraction_bound = r.lambda * r.L_f + r.M_hat;
  r.unique = r.cond1_pass && r.cond2_pass;
  if (delta == 1.0) {
    r.note =
        "delta=1 boundary: condition value 0 lies outside the open interval (0,1); "
        "the interaction term vanishes and the M bound reduces to M < x0";
  } else if (!r.unique) {
    r.note = "uniqueness not guaranteed";
  } else {
    r.note = "uniqueness conditions hold";
  }
  return r;
}

// ---------------------------------------------------------------------------
// Picard solver

namespace {

double perturbation_gap(const GameConfig& cfg, const CoefficientSet& coeffs, const ValuePath& up,
                        const ValuePath& um, const SolveOptions& opts) {
  ClosureOptions copts;
  copts.paths = opts.paths_M;
  copts.dt = opts.dt;
  copts.workers = opts.workers;
  copts.seed = opts.seed;
  copts.path_offset = static_cast<std::uint64_t>(1) << 20;
  const ClosureBatch bp = simulate_value_closure(cfg, coeffs, up, copts);
  const ClosureBatch bm = simulate_value_closure(cfg, coeffs, um, copts);
  const int cols = static_cast<int>(bp.t.size());
  double worst = 0.0;
  for (int k = 0; k < cols; ++k) {
    const double msq = blocked_mean(opts.paths_M, [&](int p) {
      const double d = bp.Xhat(p, k) - bm.Xhat(p, k);
      return d * d;
    });
    worst = std::max(worst, msq);
  }
  return worst;
}

double estimate_M_constant(const GameConfig& cfg, const CoefficientSet& coeffs, const ValuePath& U,
                           const SolveOptions& opts) {
  const double e_bar = cfg.e_c_mean();
  const double q = interaction_q(cfg.delta, e_bar);
  const double hi = (q > 0.0) ? (1.0 - 1e-6) / q : std::numeric_limits<double>::infinity();
  const int steps = U.steps();
  const double T = U.T;

  std::vector<std::function<double(double)>> patterns = {
      [](double) { return 1.0; },
      [T](double tau) { return tau / T; },
      [T](double tau) { return std::sin(std::numbers::pi * tau / T); },
  };
  const double eps_list[] = {0.005, 0.01, 0.02};

  KahanSum sxy, sxx;
  for (const auto& pat : patterns) {
    for (double eps : eps_list) {
      ValuePath up = U, um = U;
      double gap = 0.0;
      for (int k = 1; k <= steps; ++k) {
        const double tau = U.tau_at(k);
        const double bump = eps * pat(tau);
        const double base = U.vals[static_cast<std::size_t>(k)];
        up.vals[static_cast<std::size_t>(k)] = std::min(base * (1.0 + bump), hi);
        um.vals[static_cast<std::size_t>(k)] = std::max(base * (1.0 - bump), 1e-12);
        gap = std::max(gap, std::abs(up.vals[static_cast<std::size_t>(k)] -
                                     um.vals[static_cast<std::size_t>(k)]));
      }
      const double y = perturbation_gap(cfg, coeffs, up, um, opts);
      const double x = gap * gap;
      sxy.add(x * y);
      sxx.add(x * x);
    }
  }
  if (sxx.value() <= 0.0) return 0.0;
  return std::sqrt(std::max(0.0, sxy.value() / sxx.value()));
}

}  // namespace

EquilibriumResult solve_fixed_point(const GameConfig& cfg, const CoefficientSet& coeffs,
                                    const SolveOptions& opts) {
  const double e_bar = cfg.e_c_mean();
  const double q = interaction_q(cfg.delta, e_bar);

  EquilibriumResult result;
  result.U = ValuePath::ones(cfg.T, opts.dt);
  if (q >= 1.0) {
    // Flat start clear of the pole when the band excludes U == 1.
    const double level = std::min(1.0, 0.95 / q);
    for (std::size_t k = 1; k < result.U.vals.size(); ++k) result.U.vals[k] = level;
  }

  const double cond1 = (1.0 - cfg.delta * cfg.delta) / cfg.delta * e_bar;
  if (!(cond1 > 0.0 && cond1 < 1.0)) result.warning = "uniqueness not guaranteed";

  GOptions gopts;
  gopts.paths = opts.paths;
  gopts.dt = opts.dt;
  gopts.workers = opts.workers;
  gopts.seed = opts.seed;

  double rho = opts.damping;
  double prev_resid = std::numeric_limits<double>::infinity();
  int growing = 0;
  bool aborted = false;
  std::vector<double> last_stderr;
  for (int it = 1; it <= opts.max_iter; ++it) {
    GResult g;
    try {
      g = apply_G(cfg, coeffs, result.U, gopts);
    } catch (const NumericalError& err) {
      // Outside the guaranteed-uniqueness regime the fixed-point map can be
      // undefined (the band excludes the terminal pin U(0) = 1 when
      // (1-delta)E[e^c] >= 1); report instead of crashing.  Inside the regime
      // a numerical failure is a real error and propagates.
      if (result.warning.empty()) throw;
      result.warning += std::string("; iteration stopped: ") + err.what();
      aborted = true;
      break;
    }
    last_stderr = g.stderr_;
    result.v_bm0 = g.v_bm0;

    ValuePath cand = result.U;
    double resid = 0.0;
    for (std::size_t k = 1; k < cand.vals.size(); ++k) {
      cand.vals[k] = (1.0 - rho) * result.U.vals[k] + rho * g.U.vals[k];
      resid = std::max(resid, std::abs(cand.vals[k] - result.U.vals[k]));
    }
    cand.vals[0] = 1.0;
    result.residuals.push_back(resid);
    result.iterations = it;

    if (resid > prev_resid) {
      ++growing;
      if (rho > 0.5) rho = 0.5;  // oscillation fallback
      if (growing >= 3) {
        std::ostringstream os;
        os << "fixed-point iteration diverging; residual history:";
        for (double r : result.residuals) os << ' ' << r;
        if (result.warning.empty()) throw NumericalError(os.str(), it);
        result.warning += std::string("; iteration stopped: ") + os.str();
        aborted = true;
        break;
      }
    } else {
      growing = 0;
    }
    prev_resid = resid;
    result.U = cand;
    if (resid < opts.tol) {
      result.converged = true;
      break;
    }
  }
  result.stderr_U = last_stderr;

  // Measured contraction: geometric mean of successive residual ratios above
  // the noise floor.
  KahanSum log_ratio;
  int ratios = 0;
  for (std::size_t i = 1; i < result.residuals.size(); ++i) {
    if (result.residuals[i - 1] > 100.0 * opts.tol && result.residuals[i] > 0.0) {
      log_ratio.add(std::log(result.residuals[i] / result.residuals[i - 1]));
      ++ratios;
    }
  }
  result.contraction_estimate = ratios > 0 ? std::exp(log_ratio.value() / ratios) : 0.0;

  result.M_estimate =
      (opts.estimate_M && !aborted) ? estimate_M_constant(cfg, coeffs, result.U, opts) : 0.0;
  // The warning reflects the structural condition on (delta, E[e^c]) alone;
  // the empirical-M outcome is reported, not escalated, because the measured
  // Lipschitz proxy is an upper bound and routinely overshoots the bound.
  result.uniqueness = check_uniqueness(cfg.delta, e_bar, result.M_estimate, cfg.x0_total());

  const double uT = result.U.horizon_value();
  result.v_bm0 = closure_benchmark(cfg.delta, e_bar, uT, cfg.x0_total());
  result.z0_total = e_bar * uT * result.v_bm0;

  // Equilibrium strategy from the structural value form
  // u(t, x, z) = const * X_tot / (delta X_tot + (1-delta) Z_tot):
  // constants drop out of the log-gradients.
  const double delta = cfg.delta;
  result.strategy = {"equilibrium", [delta](const MarketState& st, const InvestorType&, double) {
                       auto u_fn = [delta](const Vec& x, const Vec& z) {
                         return x.sum() / (delta * x.sum() + (1.0 - delta) * z.sum());
                       };
                       return strategy_from_value(u_fn, st, delta).weights;
                     }};
  return result;
}

// ---------------------------------------------------------------------------
// strategies

namespace {

struct LogGradients {
  Vec glog_x;
  Vec glog_z;
  double u0 = 0.0;
};

LogGradients log_gradients(const std::function<double(const Vec&, const Vec&)>& u_fn,
                           const MarketState& state, double fd_rel) {
  const int n = state.n();
  LogGradients g;
  g.glog_x.resize(n);
  g.glog_z.resize(n);
  g.u0 = u_fn(state.X, state.Z);
  if (!(g.u0 > 0.0)) throw NumericalError("nonpositive value estimate at stencil center", -1);
  Vec x = state.X, z = state.Z;
  for (int i = 0; i < n; ++i) {
    const double h = fd_rel * x[i];
    x[i] = state.X[i] + h;
    const double up = u_fn(x, z);
    x[i] = state.X[i] - h;
    const double dn = u_fn(x, z);
    x[i] = state.X[i];
    if (!(up > 0.0) || !(dn > 0.0)) {
      throw NumericalError("nonpositive value estimate at stencil point", -1);
    }
    g.glog_x[i] = (std::log(up) - std::log(dn)) / (2.0 * h);
  }
  for (int p = 0; p < n; ++p) {
    const double h = fd_rel * z[p];
    z[p] = state.Z[p] + h;
    const double up = u_fn(x, z);
    z[p] = state.Z[p] - h;
    const double dn = u_fn(x, z);
    z[p] = state.Z[p];
    if (!(up > 0.0) || !(dn > 0.0)) {
      throw NumericalError("nonpositive value estimate at stencil point", -1);
    }
    g.glog_z[p] = (std::log(up) - std::log(dn)) / (2.0 * h);
  }
  return g;
}

StrategyResult finalize_weights(Vec w) {
  StrategyResult out;
  out.weight_sum = w.sum();
  if (std::abs(out.weight_sum - 1.0) < 0.05) {
    w /= out.weight_sum;
    out.renormalized = true;
  } else {
    out.flagged = true;
  }
  out.weights = std::move(w);
  return out;
}

}  // namespace

StrategyResult strategy_from_value(const std::function<double(const Vec&, const Vec&)>& u_fn,
                                   const MarketState& state, double delta, double fd_rel) {
  const LogGradients g = log_gradients(u_fn, state, fd_rel);
  const Vec big_pi = benchmark_portfolio(state, delta);
  Vec w = state.X.cwiseProduct(g.glog_x) + state.Z.cwiseProduct(g.glog_z) + big_pi;
  return finalize_weights(std::move(w));
}

StrategyResult strategy_from_U(const GameConfig& cfg, const CoefficientSet& coeffs,
                               const ValuePath& U, const MarketState& state,
                               const InvestorType& type, double fd_rel, int M_outer, double dt,
                               std::uint64_t seed, int workers) {
  const double ec = std::exp(type.c);
  auto u_fn = [&](const Vec& x, const Vec& z) {
    MarketState st{state.t, x, z};
    // Common random numbers: every stencil evaluation reuses the same seed.
    return ec * estimate_U_closure(cfg, coeffs, U, st, M_outer, dt, seed, workers).value;
  };
  return strategy_from_value(u_fn, state, cfg.delta, fd_rel);
}

StrategyResult homogeneous_strategy(const std::function<double(const Vec&, const Vec&)>& u_fn,
                                    const MarketState& state, double delta, double v_bar,
                                    double fd_rel) {
  const LogGradients g = log_gradients(u_fn, state, fd_rel);
  const Vec big_pi = benchmark_portfolio(state, delta);
  const int n = state.n();
  Vec w(n);
  for (int i = 0; i < n; ++i) {
    const double denom = 1.0 - v_bar * g.glog_z[i];
    if (std::abs(denom) < 1e-12) {
      throw NumericalError("homogeneous strategy denominator vanished", -1);
    }
    w[i] = (state.X[i] * g.glog_x[i] + big_pi[i]) / denom;
  }
  return finalize_weights(std::move(w));
}

double optimal_wealth(const ValuePath& U, const MarketState& state, double delta, double e_c_mean,
                      double c) {
  const double u = U.at_togo(U.T - state.t);
  const double denom = 1.0 - interaction_q(delta, e_c_mean) * u;
  if (!(denom > 1e-12)) throw DegeneracyError("optimal wealth denominator vanished", -1);
  return std::exp(c) * delta * u * state.X.sum() / denom;
}

// ---------------------------------------------------------------------------
// cost functional

double cost_J(const TrajectoryRecord& rec, const CoefficientSet& coeffs, double delta, int ell) {
  if (rec.strategies.empty() || rec.noise.size() == 0) {
    throw ConfigError("cost_J requires recorded strategies and noise");
  }
  const int steps = rec.steps();
  KahanSum exponent;
  for (int k = 0; k < steps; ++k) {
    const MarketState st = rec.state_at(k);
    const double dt = rec.times[static_cast<std::size_t>(k) + 1] -
                      rec.times[static_cast<std::size_t>(k)];
    const Vec pi = rec.strategies[static_cast<std::size_t>(k)].row(ell).transpose();
    const Vec beta = beta_of(coeffs, st.X, st.Z);
    const Mat sigma = sigma_of(coeffs, st.X, st.Z);
    const Vec vol = sigma.transpose() * pi;
    exponent.add((pi.dot(beta) - 0.5 * vol.squaredNorm()) * dt);
    exponent.add(vol.dot(rec.noise.row(k).transpose()));
  }
  const double v_end = benchmark_value(rec.state_at(steps), delta);
  const double v_start = benchmark_value(rec.state_at(0), delta);
  return v_end / v_start * std::exp(-exponent.value());
}

}  // namespace mfarb
