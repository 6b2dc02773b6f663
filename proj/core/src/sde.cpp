#include "mfarb/sde.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "mfarb/parallel.hpp"
#include "mfarb/stats.hpp"

namespace mfarb {

using stats::KahanSum;

namespace {

constexpr int kAggBlock = 256;  // fixed aggregation block, worker-count invariant

// Mean of f(particle) over the ensemble in draw order, blocked for stable
// floating-point reduction.
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

void append_number(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

// ---------------------------------------------------------------------------
// strategy rules

StrategyRule market_rule() {
  return {"market", [](const MarketState& st, const InvestorType&, double) {
            return market_portfolio(st);
          }};
}

StrategyRule benchmark_rule(double delta) {
  return {"benchmark", [delta](const MarketState& st, const InvestorType&, double) {
            return benchmark_portfolio(st, delta);
          }};
}

StrategyRule constant_rule(Vec w) {
  return {"constant", [w = std::move(w)](const MarketState&, const InvestorType&, double) {
            return w;
          }};
}

StrategyRule type_leverage_rule(double kappa) {
  return {"type-leverage",
          [kappa](const MarketState& st, const InvestorType& ty, double) -> Vec {
            return (1.0 + kappa * std::tanh(ty.c)) * market_portfolio(st);
          }};
}

// ---------------------------------------------------------------------------
// ensemble basics

ParticleEnsemble make_ensemble(const std::vector<InvestorType>& types, int n) {
  ParticleEnsemble ens;
  ens.types = types;
  const int m = static_cast<int>(types.size());
  ens.V.resize(m);
  for (int i = 0; i < m; ++i) ens.V[i] = types[static_cast<std::size_t>(i)].v0;
  ens.pi = Mat::Zero(m, n);
  ens.order.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) ens.order[static_cast<std::size_t>(i)] = i;
  return ens;
}

Vec ensemble_interaction(const ParticleEnsemble& ens) {
  const int n = static_cast<int>(ens.pi.cols());
  Vec z(n);
  for (int j = 0; j < n; ++j) {
    z[j] = blocked_mean(ens.count(), [&](int i) {
      const int id = ens.order[static_cast<std::size_t>(i)];
      return ens.V[id] * ens.pi(id, j);
    });
  }
  return z;
}

// ---------------------------------------------------------------------------
// coefficients helpers and single steps

Vec beta_of(const CoefficientSet& coeffs, const Vec& x, const Vec& z) {
  return coeffs.b(x, z).cwiseQuotient(x);
}

Mat sigma_of(const CoefficientSet& coeffs, const Vec& x, const Vec& z) {
  return x.cwiseInverse().asDiagonal() * coeffs.s(x, z);
}

MarketState step_market(const MarketState& state, const CoefficientSet& coeffs,
                        const Eigen::RowVectorXd& dB, double dt, double z_floor,
                        long* clamp_count) {
  const Vec beta = beta_of(coeffs, state.X, state.Z);
  const Mat sigma = sigma_of(coeffs, state.X, state.Z);
  const Vec gamma = coeffs.gamma(state.X, state.Z);
  const Mat tau = coeffs.tau(state.X, state.Z);
  const int n = state.n();

  MarketState next;
  next.t = state.t + dt;
  next.X.resize(n);
  next.Z.resize(n);
  for (int i = 0; i < n; ++i) {
    const double diff = sigma.row(i).squaredNorm();
    const double drift = (beta[i] - 0.5 * diff) * dt;
    const double shock = sigma.row(i).dot(dB);
    next.X[i] = state.X[i] * std::exp(drift + shock);
    double z = state.Z[i] + gamma[i] * dt + tau.row(i).dot(dB);
    if (z < z_floor) {
      z = z_floor;
      if (clamp_count != nullptr) ++*clamp_count;
    }
    next.Z[i] = z;
  }
  return next;
}

double step_wealth(double V, const Vec& pi, const Vec& beta, const Mat& sigma,
                   const Eigen::RowVectorXd& dB, double dt) {
  const Vec vol = sigma.transpose() * pi;  // portfolio volatility vector
  const double drift = (pi.dot(beta) - 0.5 * vol.squaredNorm()) * dt;
  const double shock = vol.dot(dB.transpose());
  return V * std::exp(drift + shock);
}

// ---------------------------------------------------------------------------
// EnsembleSim

EnsembleSim::EnsembleSim(const GameConfig& cfg, const CoefficientSet& coeffs,
                         std::vector<InvestorType> types, StrategyRule rule, SimOptions opts)
    : cfg_(cfg), coeffs_(&coeffs), rule_(std::move(rule)), opts_(std::move(opts)) {
  if (types.empty()) throw ConfigError("ensemble requires at least one investor type");
  ens_ = make_ensemble(types, cfg.n);
  X_ = cfg.x0;
  x_scale_ = X_.cwiseAbs().maxCoeff();
  double v0 = 0.0;
  for (const auto& ty : types) v0 = std::max(v0, std::abs(ty.v0));
  v_scale_ = std::max(v0, 1e-30);
  // Bootstrap interaction level: explicit override, or mean initial wealth
  // spread across assets by market weight.
  if (opts_.z0.has_value()) {
    if (opts_.z0->size() != cfg.n) throw ConfigError("z0 override has wrong dimension");
    Z_ = *opts_.z0;
  } else {
    const double vbar = blocked_mean(ens_.count(), [&](int i) {
      return ens_.types[static_cast<std::size_t>(i)].v0;
    });
    Z_ = vbar * (X_ / X_.sum());
  }
  Z_ = Z_.cwiseMax(opts_.z_floor);
}

void EnsembleSim::evaluate_strategies() {
  const MarketState st = state();
  const int m = ens_.count();
  auto eval_range = [&](int, int begin, int end) {
    for (int i = begin; i < end; ++i) {
      ens_.pi.row(i) = rule_.weights(st, ens_.types[static_cast<std::size_t>(i)], t_).transpose();
    }
  };
  parallel_blocks(m, kAggBlock, opts_.workers, eval_range);
}

void EnsembleSim::close() {
  if (closed_) return;
  if (opts_.freeze_z) {
    evaluate_strategies();
    closed_ = true;
    return;
  }
  const int passes = std::max(1, opts_.z_refine);
  for (int pass = 0; pass < passes; ++pass) {
    evaluate_strategies();
    Vec z = ensemble_interaction(ens_);
    for (int j = 0; j < cfg_.n; ++j) {
      if (z[j] < opts_.z_floor) {
        z[j] = opts_.z_floor;
        if (pass == passes - 1) ++z_clamps_;
      }
    }
    Z_ = z;
  }
  closed_ = true;
}

void EnsembleSim::step(const Eigen::RowVectorXd& dB) {
  if (!closed_) close();
  const Vec beta = beta_of(*coeffs_, X_, Z_);
  const Mat sigma = sigma_of(*coeffs_, X_, Z_);

  if (opts_.track_deflator) {
    const Vec theta = coeffs_->theta(X_, Z_);
    L_ *= std::exp(-theta.dot(dB.transpose()) - 0.5 * theta.squaredNorm() * opts_.dt);
  }

  for (int i = 0; i < cfg_.n; ++i) {
    const double diff = sigma.row(i).squaredNorm();
    X_[i] *= std::exp((beta[i] - 0.5 * diff) * opts_.dt + sigma.row(i).dot(dB));
    if (!std::isfinite(X_[i]) || X_[i] > x_scale_ * opts_.overflow_factor) {
      throw NumericalError("capitalization overflow during simulation", k_);
    }
  }

  const int m = ens_.count();
  auto advance = [&](int, int begin, int end) {
    for (int i = begin; i < end; ++i) {
      const Vec pi = ens_.pi.row(i).transpose();
      ens_.V[i] = step_wealth(ens_.V[i], pi, beta, sigma, dB, opts_.dt);
    }
  };
  parallel_blocks(m, kAggBlock, opts_.workers, advance);
  for (int i = 0; i < m; ++i) {
    if (!std::isfinite(ens_.V[i]) || std::abs(ens_.V[i]) > v_scale_ * opts_.overflow_factor) {
      throw NumericalError("wealth overflow during simulation", k_);
    }
  }

  t_ += opts_.dt;
  ++k_;
  closed_ = false;
}

double EnsembleSim::mean_wealth() const {
  return blocked_mean(ens_.count(), [&](int i) { return ens_.V[i]; });
}

// ---------------------------------------------------------------------------
// full-horizon driver

namespace {

TrajectoryRecord run_ensemble(const GameConfig& cfg, const CoefficientSet& coeffs,
                              const std::vector<InvestorType>& types, const StrategyRule& rule,
                              const SimOptions& opts) {
  const int steps = step_count(cfg.T, opts.dt);
  const int n = cfg.n;
  const int m = static_cast<int>(types.size());

  EnsembleSim sim(cfg, coeffs, types, rule, opts);
  const NoisePath noise = make_noise_path(cfg.seed, opts.noise_path, steps, n, opts.dt);

  TrajectoryRecord rec;
  rec.types = types;
  rec.times.resize(static_cast<std::size_t>(steps) + 1);
  rec.X.resize(steps + 1, n);
  rec.Z.resize(steps + 1, n);
  rec.mean_V.resize(static_cast<std::size_t>(steps) + 1);
  rec.v_q10.resize(static_cast<std::size_t>(steps) + 1);
  rec.v_q50.resize(static_cast<std::size_t>(steps) + 1);
  rec.v_q90.resize(static_cast<std::size_t>(steps) + 1);
  if (opts.track_deflator) rec.L.resize(static_cast<std::size_t>(steps) + 1);
  if (opts.record_particles) {
    rec.particles.resize(steps + 1, m);
    rec.strategies.resize(static_cast<std::size_t>(steps) + 1);
  }
  if (opts.record_noise) rec.noise = noise.dB;

  std::vector<double> wealth_sorted(static_cast<std::size_t>(m));
  for (int k = 0; k <= steps; ++k) {
    sim.close();
    rec.times[static_cast<std::size_t>(k)] = sim.time();
    rec.X.row(k) = sim.X().transpose();
    rec.Z.row(k) = sim.Z().transpose();
    rec.mean_V[static_cast<std::size_t>(k)] = sim.mean_wealth();
    for (int i = 0; i < m; ++i) wealth_sorted[static_cast<std::size_t>(i)] = sim.particles().V[i];
    std::sort(wealth_sorted.begin(), wealth_sorted.end());
    rec.v_q10[static_cast<std::size_t>(k)] = stats::quantile(wealth_sorted, 0.10);
    rec.v_q50[static_cast<std::size_t>(k)] = stats::quantile(wealth_sorted, 0.50);
    rec.v_q90[static_cast<std::size_t>(k)] = stats::quantile(wealth_sorted, 0.90);
    if (opts.track_deflator) rec.L[static_cast<std::size_t>(k)] = sim.deflator();
    if (opts.record_particles) {
      rec.particles.row(k) = sim.particles().V.transpose();
      rec.strategies[static_cast<std::size_t>(k)] = sim.particles().pi;
    }
    if (k < steps) sim.step(noise.dB.row(k));
  }
  rec.z_clamp_count = sim.z_clamps();
  rec.V_final = sim.particles().V;
  return rec;
}

}  // namespace

TrajectoryRecord simulate_mkv(const GameConfig& cfg, const CoefficientSet& coeffs,
                              const std::vector<InvestorType>& types, const StrategyRule& rule,
                              const SimOptions& opts) {
  return run_ensemble(cfg, coeffs, types, rule, opts);
}

TrajectoryRecord simulate_nplayer(const GameConfig& cfg, const CoefficientSet& coeffs,
                                  const std::vector<InvestorType>& types, const StrategyRule& rule,
                                  const SimOptions& opts) {
  return run_ensemble(cfg, coeffs, types, rule, opts);
}

// ---------------------------------------------------------------------------
// record accessors and output

MarketState TrajectoryRecord::state_at(int k) const {
  return {times[static_cast<std::size_t>(k)], X.row(k).transpose(), Z.row(k).transpose()};
}

void TrajectoryRecord::write_csv(const std::filesystem::path& file) const {
  std::string out;
  const int n = static_cast<int>(X.cols());
  out += "t";
  for (int i = 0; i < n; ++i) out += ",X" + std::to_string(i + 1);
  for (int i = 0; i < n; ++i) out += ",Z" + std::to_string(i + 1);
  out += ",mean_V,v_q10,v_q50,v_q90";
  if (!L.empty()) out += ",L";
  out += "\n";
  for (std::size_t k = 0; k < times.size(); ++k) {
    append_number(out, times[k]);
    const int row = static_cast<int>(k);
    for (int i = 0; i < n; ++i) {
      out += ',';
      append_number(out, X(row, i));
    }
    for (int i = 0; i < n; ++i) {
      out += ',';
      append_number(out, Z(row, i));
    }
    out += ',';
    append_number(out, mean_V[k]);
    out += ',';
    append_number(out, v_q10[k]);
    out += ',';
    append_number(out, v_q50[k]);
    out += ',';
    append_number(out, v_q90[k]);
    if (!L.empty()) {
      out += ',';
      append_number(out, L[k]);
    }
    out += '\n';
  }
  std::ofstream f(file, std::ios::binary);
  if (!f) throw ConfigError("cannot open output file: " + file.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

void TrajectoryRecord::write_particles(const std::filesystem::path& file) const {
  std::ofstream f(file, std::ios::binary);
  if (!f) throw ConfigError("cannot open output file: " + file.string());
  const char magic[8] = {'M', 'F', 'A', 'R', 'B', 'P', '1', '\0'};
  f.write(magic, 8);
  const std::uint64_t rows = static_cast<std::uint64_t>(particles.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(particles.cols());
  f.write(reinterpret_cast<const char*>(&rows), 8);
  f.write(reinterpret_cast<const char*>(&cols), 8);
  f.write(reinterpret_cast<const char*>(particles.data()),
          static_cast<std::streamsize>(sizeof(double) * particles.size()));
}

// ---------------------------------------------------------------------------
// constant-coefficient toy market

CoefficientSet gbm_coefficients(Vec beta_bar, Mat sigma_bar) {
  const int n = static_cast<int>(beta_bar.size());
  if (sigma_bar.rows() != n || sigma_bar.cols() != n) {
    throw ConfigError("gbm coefficient dimensions disagree");
  }
  CoefficientSet cs;
  cs.n = n;
  cs.b = [beta_bar](const Vec& x, const Vec&) -> Vec { return x.cwiseProduct(beta_bar); };
  cs.s = [sigma_bar](const Vec& x, const Vec&) -> Mat { return x.asDiagonal() * sigma_bar; };
  cs.gamma = [beta_bar](const Vec&, const Vec& z) -> Vec { return z.cwiseProduct(beta_bar); };
  cs.tau = [sigma_bar](const Vec&, const Vec& z) -> Mat { return z.asDiagonal() * sigma_bar; };
  // Market price of risk solves sigma theta = beta directly (state independent).
  Eigen::PartialPivLU<Mat> lu(sigma_bar);
  const Vec theta = lu.solve(beta_bar);
  cs.theta_fn = [theta](const Vec&, const Vec&) -> Vec { return theta; };
  return cs;
}

}  // namespace mfarb
