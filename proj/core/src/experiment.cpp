#include "mfarb/experiment.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "mfarb/equilibrium.hpp"
#include "mfarb/measures.hpp"
#include "mfarb/noise.hpp"
#include "mfarb/parallel.hpp"
#include "mfarb/pde.hpp"
#include "mfarb/sde.hpp"
#include "mfarb/vsm.hpp"

namespace mfarb {

namespace {

constexpr const char* kToolVersion = "0.1.0";

using json = nlohmann::json;

json spec_to_json_object(const ExperimentSpec& s) {
  json j;
  j["command"] = s.command;
  j["model"] = s.model;
  j["n"] = s.n;
  j["delta"] = s.delta;
  j["T"] = s.T;
  j["dt"] = s.dt;
  j["paths"] = s.paths;
  j["types"] = s.types;
  j["seed"] = s.seed;
  j["C_x"] = s.C_x;
  j["x0"] = s.x0;
  j["z0"] = s.z0;
  j["gbm_beta"] = s.gbm_beta;
  j["gbm_sigma"] = s.gbm_sigma;
  j["mu_c"] = s.mu_c;
  j["sigma_c"] = s.sigma_c;
  j["c_min"] = s.c_min;
  j["c_max"] = s.c_max;
  j["v0_mode"] = s.v0_mode;
  if (s.e_c_override)
    j["e_c_override"] = *s.e_c_override;
  else
    j["e_c_override"] = nullptr;
  j["chaos_N"] = s.chaos_N;
  j["replications"] = s.replications;
  j["M_ref"] = s.M_ref;
  j["tol"] = s.tol;
  j["max_iter"] = s.max_iter;
  j["grid_nodes"] = s.grid_nodes;
  j["tau_nodes"] = s.tau_nodes;
  j["tau_max"] = s.tau_max;
  j["M_oracle"] = s.M_oracle;
  j["uniq_M"] = s.uniq_M;
  return j;
}

ExperimentSpec spec_from_json_object(const json& j) {
  ExperimentSpec s;
  s.command = j.value("command", s.command);
  s.model = j.value("model", s.model);
  s.n = j.value("n", s.n);
  s.delta = j.value("delta", s.delta);
  s.T = j.value("T", s.T);
  s.dt = j.value("dt", s.dt);
  s.paths = j.value("paths", s.paths);
  s.types = j.value("types", s.types);
  s.seed = j.value("seed", s.seed);
  s.workers = j.value("workers", s.workers);
  s.out_dir = j.value("out_dir", s.out_dir);
  s.C_x = j.value("C_x", s.C_x);
  s.x0 = j.value("x0", s.x0);
  s.z0 = j.value("z0", s.z0);
  s.gbm_beta = j.value("gbm_beta", s.gbm_beta);
  s.gbm_sigma = j.value("gbm_sigma", s.gbm_sigma);
  s.mu_c = j.value("mu_c", s.mu_c);
  s.sigma_c = j.value("sigma_c", s.sigma_c);
  s.c_min = j.value("c_min", s.c_min);
  s.c_max = j.value("c_max", s.c_max);
  s.v0_mode = j.value("v0_mode", s.v0_mode);
  if (j.contains("e_c_override") && !j["e_c_override"].is_null())
    s.e_c_override = j["e_c_override"].get<double>();
  s.chaos_N = j.value("chaos_N", s.chaos_N);
  s.replications = j.value("replications", s.replications);
  s.M_ref = j.value("M_ref", s.M_ref);
  s.tol = j.value("tol", s.tol);
  s.max_iter = j.value("max_iter", s.max_iter);
  s.grid_nodes = j.value("grid_nodes", s.grid_nodes);
  s.tau_nodes = j.value("tau_nodes", s.tau_nodes);
  s.tau_max = j.value("tau_max", s.tau_max);
  s.M_oracle = j.value("M_oracle", s.M_oracle);
  s.uniq_M = j.value("uniq_M", s.uniq_M);
  return s;
}

json uniqueness_to_json(const UniquenessReport& r) {
  json j;
  j["delta"] = r.delta;
  j["e_c_mean"] = r.e_c_mean;
  j["M_input"] = r.M_input;
  j["x0_total"] = r.x0_total;
  j["cond1_value"] = r.cond1_value;
  j["cond1_pass"] = r.cond1_pass;
  j["cond2_bound"] = r.cond2_bound;
  j["cond2_pass"] = r.cond2_pass;
  j["lambda"] = r.lambda;
  j["L_f"] = r.L_f;
  j["M_hat"] = r.M_hat;
  j["contraction_bound"] = r.contraction_bound;
  j["unique"] = r.unique;
  j["note"] = r.note;
  return j;
}

// Artifact writing context: every file goes under one directory and is
// recorded in write order.
struct Sink {
  std::filesystem::path dir;
  std::vector<std::string>* files = nullptr;

  void write_text(const std::string& name, const std::string& content) const {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw ConfigError("cannot open output file: " + name);
    out << content;
    if (!out) throw ConfigError("failed writing output file: " + name);
    files->push_back(name);
  }
};

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

void append_csv_number(std::string& row, double v, bool last = false) {
  row += format_double(v);
  row += last ? '\n' : ',';
}

void run_simulate(const ExperimentSpec& spec, int workers, const Sink& sink,
                  std::vector<Metric>& metrics) {
  const GameConfig cfg = game_config_of(spec);
  const CoefficientSet coeffs = coefficients_of(spec);
  const std::vector<InvestorType> types = draw_types(cfg, spec.types);
  const StrategyRule rule = benchmark_rule(cfg.delta);

  SimOptions opts;
  opts.dt = spec.dt;
  opts.workers = workers;
  opts.track_deflator = true;
  opts.z0 = initial_interaction_of(spec);
  const TrajectoryRecord rec = simulate_mkv(cfg, coeffs, types, rule, opts);
  rec.write_csv(sink.dir / "trajectory.csv");
  sink.files->push_back("trajectory.csv");

  const int last = rec.steps();
  const MarketState end = rec.state_at(last);
  metrics.push_back({"X_total_final", end.X.sum(), {}});
  metrics.push_back({"Z_total_final", end.Z.sum(), {}});
  metrics.push_back({"benchmark_final", benchmark_value(end, cfg.delta), {}});
  metrics.push_back({"mean_wealth_final", rec.mean_V.back(), {}});
  if (!rec.L.empty()) metrics.push_back({"deflator_final", rec.L.back(), {}});
  metrics.push_back({"z_clamp_count", static_cast<double>(rec.z_clamp_count), {}});
  const auto [res_b, res_g] = theta_consistency(coeffs, end.X, end.Z);
  metrics.push_back({"theta_residual_b", res_b, {}});
  metrics.push_back({"theta_residual_gamma", res_g, {}});
}

void run_solve(const ExperimentSpec& spec, int workers, const Sink& sink,
               std::vector<Metric>& metrics) {
  const GameConfig cfg = game_config_of(spec);
  const CoefficientSet coeffs = coefficients_of(spec);

  SolveOptions opts;
  opts.paths = spec.paths;
  opts.dt = spec.dt;
  opts.workers = workers;
  opts.seed = spec.seed;
  opts.tol = spec.tol;
  opts.max_iter = spec.max_iter;
  const EquilibriumResult res = solve_fixed_point(cfg, coeffs, opts);

  std::string csv = "k,tau,t,U,stderr\n";
  for (int k = 0; k <= res.U.steps(); ++k) {
    append_csv_number(csv, k);
    append_csv_number(csv, res.U.tau_at(k));
    append_csv_number(csv, res.U.T - res.U.tau_at(k));
    append_csv_number(csv, res.U.vals[static_cast<std::size_t>(k)]);
    const double se = k < static_cast<int>(res.stderr_U.size())
                          ? res.stderr_U[static_cast<std::size_t>(k)]
                          : 0.0;
    append_csv_number(csv, se, true);
  }
  sink.write_text("value_path.csv", csv);

  json j;
  j["converged"] = res.converged;
  j["iterations"] = res.iterations;
  j["U_T"] = res.U.horizon_value();
  j["contraction_estimate"] = res.contraction_estimate;
  j["M_estimate"] = res.M_estimate;
  j["v_bm0"] = res.v_bm0;
  j["z0_total"] = res.z0_total;
  j["warning"] = res.warning;
  j["residuals"] = res.residuals;
  j["uniqueness"] = uniqueness_to_json(res.uniqueness);
  sink.write_text("equilibrium.json", dump_json(j));

  const double se_T = res.stderr_U.empty() ? 0.0 : res.stderr_U.back();
  metrics.push_back({"U_T", res.U.horizon_value(), se_T});
  metrics.push_back({"iterations", static_cast<double>(res.iterations), {}});
  metrics.push_back({"converged", res.converged ? 1.0 : 0.0, {}});
  metrics.push_back({"contraction_estimate", res.contraction_estimate, {}});
  metrics.push_back({"M_estimate", res.M_estimate, {}});
  metrics.push_back({"v_bm0", res.v_bm0, {}});
  metrics.push_back({"z0_total", res.z0_total, {}});
  metrics.push_back({"cond1_value", res.uniqueness.cond1_value, {}});
  metrics.push_back({"contraction_bound", res.uniqueness.contraction_bound, {}});
}

json table_to_json(const ConvergenceTable& t) {
  json rows = json::array();
  for (const ChaosRow& r : t.rows) {
    json row;
    row["N"] = r.N;
    row["median_w2"] = r.median_w2;
    row["mean_w2"] = r.mean_w2;
    row["stderr_w2"] = r.stderr_w2;
    rows.push_back(row);
  }
  json j;
  j["rows"] = rows;
  j["loglog_slope"] = t.loglog_slope;
  j["spearman_corr"] = t.spearman_corr;
  j["replications"] = t.replications;
  return j;
}

void run_chaos(const ExperimentSpec& spec, int workers, const Sink& sink,
               std::vector<Metric>& metrics) {
  const GameConfig cfg = game_config_of(spec);
  const CoefficientSet coeffs = coefficients_of(spec);
  const StrategyRule rule = type_leverage_rule(0.5);

  const ConvergenceTable coupled =
      chaos_experiment(cfg, coeffs, rule, spec.chaos_N, spec.M_ref, spec.dt, spec.seed,
                       spec.replications, false, workers);
  coupled.write_csv(sink.dir / "chaos_coupled.csv");
  sink.files->push_back("chaos_coupled.csv");
  const ConvergenceTable control =
      chaos_experiment(cfg, coeffs, rule, spec.chaos_N, spec.M_ref, spec.dt, spec.seed,
                       spec.replications, true, workers);
  control.write_csv(sink.dir / "chaos_control.csv");
  sink.files->push_back("chaos_control.csv");

  json j;
  j["coupled"] = table_to_json(coupled);
  j["control"] = table_to_json(control);
  sink.write_text("chaos.json", dump_json(j));

  metrics.push_back({"spearman_coupled", coupled.spearman_corr, {}});
  metrics.push_back({"slope_coupled", coupled.loglog_slope, {}});
  metrics.push_back({"spearman_control", control.spearman_corr, {}});
  metrics.push_back({"slope_control", control.loglog_slope, {}});
}

void run_verify_pde(const ExperimentSpec& spec, int workers, const Sink& sink,
                    std::vector<Metric>& metrics) {
  if (spec.model != "vsm") throw ConfigError("operator verification uses the vsm model");
  if (spec.n != 1) throw ConfigError("operator verification runs the single-asset model");
  VsmConfig vcfg;
  vcfg.n = 1;
  vcfg.C_x = spec.C_x;
  vcfg.beta_cap = std::min(vcfg.beta_cap, VsmConfig::stable_cap(spec.dt));
  const double x0s = spec.x0.empty() ? 1.0 : spec.x0.front();
  vcfg.x0 = Vec::Constant(1, x0s);

  const std::vector<double> tau = linspace(0.0, spec.tau_max, spec.tau_nodes);
  const std::vector<double> x_axis = logspace(0.7 * x0s, 1.4 * x0s, spec.grid_nodes);
  // Interaction window held well away from the origin so the square-root
  // diffusion of Z keeps the floor inactive.
  const std::vector<double> z_axis = logspace(1.0 * x0s, 3.0 * x0s, spec.grid_nodes);
  const double c = spec.mu_c;

  const ValueGrid grid = vsm_value_grid(vcfg, spec.delta, c, tau, x_axis, z_axis,
                                        spec.M_oracle, spec.dt, spec.seed, workers);
  const CoefficientSet coeffs = vsm_coefficients(vcfg);
  const OperatorField field = apply_A(grid, coeffs, spec.delta);
  const MinSolutionReport report =
      verify_min_solution(grid, coeffs, spec.delta, std::exp(c));

  std::string csv = "tau,x,z,u,stderr,interior,d_tau,Au,residual,scale,tol\n";
  const int nt = static_cast<int>(grid.tau.size());
  const int nx = static_cast<int>(grid.x_axes[0].size());
  const int nz = static_cast<int>(grid.z_axes[0].size());
  for (int it = 0; it < nt; ++it) {
    for (int ix = 0; ix < nx; ++ix) {
      for (int iz = 0; iz < nz; ++iz) {
        const std::size_t flat = grid.index(it, {ix}, {iz});
        append_csv_number(csv, grid.tau[static_cast<std::size_t>(it)]);
        append_csv_number(csv, grid.x_axes[0][static_cast<std::size_t>(ix)]);
        append_csv_number(csv, grid.z_axes[0][static_cast<std::size_t>(iz)]);
        append_csv_number(csv, grid.u[flat]);
        append_csv_number(csv, grid.stderr_[flat]);
        append_csv_number(csv, field.interior[flat] ? 1.0 : 0.0);
        append_csv_number(csv, field.d_tau[flat]);
        append_csv_number(csv, field.Au[flat]);
        append_csv_number(csv, field.residual[flat]);
        append_csv_number(csv, field.scale[flat]);
        append_csv_number(csv, field.tol[flat], true);
      }
    }
  }
  sink.write_text("residuals.csv", csv);

  json j;
  j["nodes_checked"] = report.nodes_checked;
  j["interior_checked"] = report.interior_checked;
  j["bound_violations"] = report.bound_violations;
  j["pde_violations"] = report.pde_violations;
  j["worst_bound_gap"] = report.worst_bound_gap;
  j["worst_pde_gap"] = report.worst_pde_gap;
  j["median_rel_residual"] = report.median_rel_residual;
  j["tol_mult"] = report.tol_mult;
  j["pass"] = report.pass;
  j["tau"] = grid.tau;
  j["x_axis"] = x_axis;
  j["z_axis"] = z_axis;
  sink.write_text("verify.json", dump_json(j));

  metrics.push_back({"nodes_checked", static_cast<double>(report.nodes_checked), {}});
  metrics.push_back({"interior_checked", static_cast<double>(report.interior_checked), {}});
  metrics.push_back({"bound_violations", static_cast<double>(report.bound_violations), {}});
  metrics.push_back({"pde_violations", static_cast<double>(report.pde_violations), {}});
  metrics.push_back({"median_rel_residual", report.median_rel_residual, {}});
  metrics.push_back({"pass", report.pass ? 1.0 : 0.0, {}});
}

void run_check_uniqueness(const ExperimentSpec& spec, const Sink& sink,
                          std::vector<Metric>& metrics) {
  const GameConfig cfg = game_config_of(spec);
  const UniquenessReport rep =
      check_uniqueness(spec.delta, cfg.e_c_mean(), spec.uniq_M, cfg.x0_total());
  sink.write_text("uniqueness.json", dump_json(uniqueness_to_json(rep)));

  metrics.push_back({"cond1_value", rep.cond1_value, {}});
  metrics.push_back({"cond2_bound", rep.cond2_bound, {}});
  metrics.push_back({"lambda", rep.lambda, {}});
  metrics.push_back({"L_f", rep.L_f, {}});
  metrics.push_back({"M_hat", rep.M_hat, {}});
  metrics.push_back({"contraction_bound", rep.contraction_bound, {}});
  metrics.push_back({"unique", rep.unique ? 1.0 : 0.0, {}});
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void ExperimentSpec::validate() const {
  static const std::set<std::string> commands = {"simulate", "solve", "chaos", "verify-pde",
                                                "check-uniqueness"};
  static const std::set<std::string> models = {"vsm", "gbm"};
  if (!commands.count(command)) throw ConfigError("unknown command: " + command);
  if (!models.count(model)) throw ConfigError("unknown model: " + model);
  if (n < 1) throw ConfigError("need at least one stock");
  if (!(delta > 0.0) || delta > 1.0) throw ConfigError("delta must lie in (0, 1]");
  if (!(T > 0.0)) throw ConfigError("horizon must be positive");
  if (!(dt > 0.0)) throw ConfigError("step size must be positive");
  step_count(T, dt);
  if (paths < 1) throw ConfigError("need at least one path");
  if (types < 1) throw ConfigError("need at least one type particle");
  if (workers < 0) throw ConfigError("worker count cannot be negative");
  if (!(C_x > 0.0)) throw ConfigError("C_x must be positive");
  if (!x0.empty() && static_cast<int>(x0.size()) != n)
    throw ConfigError("x0 must be empty or have one entry per stock");
  if (!z0.empty() && static_cast<int>(z0.size()) != n)
    throw ConfigError("z0 must be empty or have one entry per stock");
  for (double v : x0)
    if (!(v > 0.0)) throw ConfigError("initial capitalizations must be positive");
  for (double v : z0)
    if (!(v > 0.0)) throw ConfigError("initial interaction levels must be positive");
  if (!(gbm_sigma > 0.0)) throw ConfigError("gbm_sigma must be positive");
  if (sigma_c < 0.0) throw ConfigError("sigma_c cannot be negative");
  if (!(c_min <= c_max)) throw ConfigError("c_min must not exceed c_max");
  if (v0_mode != "unit" && v0_mode != "expc")
    throw ConfigError("v0_mode must be \"unit\" or \"expc\"");
  if (command == "chaos") {
    if (chaos_N.empty()) throw ConfigError("chaos needs a population size list");
    for (int N : chaos_N) {
      if (N < 2) throw ConfigError("population sizes must be at least 2");
      if (N > M_ref)
        throw ConfigError("reference ensemble must be at least as large as every system");
    }
    if (replications < 2) throw ConfigError("need at least two replications");
    if (M_ref < 2) throw ConfigError("reference ensemble needs at least two particles");
  }
  if (command == "solve") {
    if (!(tol > 0.0)) throw ConfigError("solver tolerance must be positive");
    if (max_iter < 1) throw ConfigError("need at least one iteration");
  }
  if (command == "verify-pde") {
    if (grid_nodes < 5 || tau_nodes < 5)
      throw ConfigError("operator verification needs at least 5 nodes per axis");
    if (!(tau_max > 0.0) || tau_max > T)
      throw ConfigError("tau_max must lie in (0, T]");
    if (M_oracle < 2) throw ConfigError("oracle needs at least two paths");
    const double spacing = tau_max / (tau_nodes - 1);
    step_count(spacing, dt);
  }
}

std::string ExperimentSpec::to_json(bool manifest) const {
  const json spec = spec_to_json_object(*this);
  if (!manifest) {
    json full = spec;
    full["workers"] = workers;
    full["out_dir"] = out_dir;
    return dump_json(full);
  }
  json j;
  j["format_version"] = 1;
  j["tool"] = "mfarb";
  j["tool_version"] = kToolVersion;
  j["spec"] = spec;
  return dump_json(j);
}

ExperimentSpec ExperimentSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("experiment spec must be a JSON object");
  try {
    if (j.contains("spec")) return spec_from_json_object(j["spec"]);
    return spec_from_json_object(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid experiment spec: ") + e.what());
  }
}

ExperimentSpec ExperimentSpec::from_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read spec file: " + file.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(text);
}

GameConfig game_config_of(const ExperimentSpec& spec) {
  GameConfig cfg;
  cfg.delta = spec.delta;
  cfg.T = spec.T;
  cfg.n = spec.n;
  if (spec.x0.empty()) {
    cfg.x0 = Vec::Ones(spec.n);
  } else {
    cfg.x0 = Eigen::Map<const Vec>(spec.x0.data(), static_cast<long>(spec.x0.size()));
  }
  cfg.type_law.mu_c = spec.mu_c;
  cfg.type_law.sigma_c = spec.sigma_c;
  cfg.type_law.c_min = spec.c_min;
  cfg.type_law.c_max = spec.c_max;
  cfg.type_law.v0_mode = spec.v0_mode == "expc" ? TypeLaw::V0Mode::ExpC : TypeLaw::V0Mode::Unit;
  cfg.seed = spec.seed;
  cfg.e_c_override = spec.e_c_override;
  return cfg;
}

CoefficientSet coefficients_of(const ExperimentSpec& spec) {
  if (spec.model == "vsm") {
    VsmConfig vcfg;
    vcfg.n = spec.n;
    vcfg.C_x = spec.C_x;
    vcfg.x0 = game_config_of(spec).x0;
    vcfg.beta_cap = std::min(vcfg.beta_cap, VsmConfig::stable_cap(spec.dt));
    return vsm_coefficients(vcfg);
  }
  if (spec.model == "gbm") {
    const Vec beta = Vec::Constant(spec.n, spec.gbm_beta);
    const Mat sigma = spec.gbm_sigma * Mat::Identity(spec.n, spec.n);
    return gbm_coefficients(beta, sigma);
  }
  throw ConfigError("unknown model: " + spec.model);
}

std::optional<Vec> initial_interaction_of(const ExperimentSpec& spec) {
  if (!spec.z0.empty())
    return Vec(Eigen::Map<const Vec>(spec.z0.data(), static_cast<long>(spec.z0.size())));
  if (spec.model == "vsm") {
    VsmConfig vcfg;
    vcfg.n = spec.n;
    vcfg.C_x = spec.C_x;
    vcfg.x0 = game_config_of(spec).x0;
    return vsm_auto_z0(vcfg, spec.delta, game_config_of(spec).e_c_mean());
  }
  return std::nullopt;
}

RunResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const int workers = resolve_workers(spec.workers);

  RunResult result;
  result.dir = std::filesystem::path(spec.out_dir);
  std::filesystem::create_directories(result.dir);
  Sink sink{result.dir, &result.files};

  sink.write_text("manifest.json", spec.to_json(true));

  if (spec.command == "simulate") {
    run_simulate(spec, workers, sink, result.metrics);
  } else if (spec.command == "solve") {
    run_solve(spec, workers, sink, result.metrics);
  } else if (spec.command == "chaos") {
    run_chaos(spec, workers, sink, result.metrics);
  } else if (spec.command == "verify-pde") {
    run_verify_pde(spec, workers, sink, result.metrics);
  } else if (spec.command == "check-uniqueness") {
    run_check_uniqueness(spec, sink, result.metrics);
  } else {
    throw ConfigError("unknown command: " + spec.command);
  }

  std::string log;
  for (const Metric& m : result.metrics) {
    log += m.name;
    log += " = ";
    log += format_double(m.value);
    if (m.stderr_) {
      log += " +- ";
      log += format_double(*m.stderr_);
    }
    log += '\n';
  }
  sink.write_text("run.log", log);
  return result;
}

}  // namespace mfarb
