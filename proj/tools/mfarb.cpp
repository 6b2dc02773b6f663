// Command-line front end: one subcommand per experiment, a manifest replay
// mode, and the exit-code contract 0 = ok, 2 = configuration error,
// 3 = numerical failure.

#include <cstdio>
#include <exception>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "mfarb/experiment.hpp"
#include "mfarb/types.hpp"

namespace {

void add_common_options(CLI::App* sub, mfarb::ExperimentSpec& spec) {
  sub->add_option("--model", spec.model, "market model: vsm | gbm")
      ->check(CLI::IsMember({"vsm", "gbm"}));
  sub->add_option("--n", spec.n, "number of stocks");
  sub->add_option("--delta", spec.delta, "benchmark weight on capitalizations, in (0,1]");
  sub->add_option("--T", spec.T, "horizon");
  sub->add_option("--dt", spec.dt, "time step (must divide T)");
  sub->add_option("--paths", spec.paths, "Monte Carlo paths");
  sub->add_option("--types", spec.types, "type-particle ensemble size");
  sub->add_option("--seed", spec.seed, "root RNG seed");
  sub->add_option("--workers", spec.workers, "worker threads (0 = hardware)")
      ->envname("MFARB_WORKERS");
  sub->add_option("--out", spec.out_dir, "output directory");
  sub->add_option("--C-x", spec.C_x, "volatility-stabilized drift scale");
  sub->add_option("--x0", spec.x0, "initial capitalizations (one per stock)");
  sub->add_option("--z0", spec.z0, "initial interaction levels (one per stock)");
  sub->add_option("--gbm-beta", spec.gbm_beta, "constant-model drift");
  sub->add_option("--gbm-sigma", spec.gbm_sigma, "constant-model volatility");
  sub->add_option("--mu-c", spec.mu_c, "type-law mean of c");
  sub->add_option("--sigma-c", spec.sigma_c, "type-law standard deviation of c");
  sub->add_option("--c-min", spec.c_min, "type-law lower truncation");
  sub->add_option("--c-max", spec.c_max, "type-law upper truncation");
  sub->add_option("--v0-mode", spec.v0_mode, "initial wealth rule: unit | expc")
      ->check(CLI::IsMember({"unit", "expc"}));
  auto e_c = std::make_shared<double>(0.0);
  auto* opt = sub->add_option("--e-c-mean", *e_c, "override E[e^c] (otherwise quadrature)");
  sub->parse_complete_callback([&spec, opt, e_c]() {
    if (opt->count() > 0) spec.e_c_override = *e_c;
  });
}

}  // namespace

int main(int argc, char** argv) {
  mfarb::ExperimentSpec spec;
  CLI::App app{"simulation and equilibrium toolkit for mean-field relative arbitrage"};
  app.require_subcommand(0, 1);

  std::string manifest_path;
  std::string out_override;
  int workers_override = -1;
  app.add_option("--from-manifest", manifest_path,
                 "re-run the experiment recorded in a manifest or spec file");
  auto* out_opt = app.add_option("--out", out_override, "output directory (replay mode)");
  auto* workers_opt =
      app.add_option("--workers", workers_override, "worker threads (replay mode)")
          ->envname("MFARB_WORKERS");

  auto* sim = app.add_subcommand("simulate", "simulate the coupled particle system");
  add_common_options(sim, spec);

  auto* solve = app.add_subcommand("solve", "solve the equilibrium fixed point");
  add_common_options(solve, spec);
  solve->add_option("--tol", spec.tol, "fixed-point residual tolerance");
  solve->add_option("--max-iter", spec.max_iter, "iteration cap");

  auto* chaos = app.add_subcommand("chaos", "finite-population convergence study");
  add_common_options(chaos, spec);
  chaos->add_option("--chaos-N", spec.chaos_N, "population sizes");
  chaos->add_option("--replications", spec.replications, "replications per size");
  chaos->add_option("--M-ref", spec.M_ref, "reference ensemble size");

  auto* verify = app.add_subcommand("verify-pde", "operator verification on an oracle grid");
  add_common_options(verify, spec);
  verify->add_option("--grid-nodes", spec.grid_nodes, "nodes per state axis");
  verify->add_option("--tau-nodes", spec.tau_nodes, "nodes on the time-to-go axis");
  verify->add_option("--tau-max", spec.tau_max, "largest time to go");
  verify->add_option("--M-oracle", spec.M_oracle, "oracle paths per node");

  auto* uniq = app.add_subcommand("check-uniqueness", "uniqueness condition arithmetic");
  add_common_options(uniq, spec);
  uniq->add_option("--M-bound", spec.uniq_M, "empirical Lipschitz constant input");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (!manifest_path.empty()) {
      if (app.get_subcommands().size() > 0)
        throw mfarb::ConfigError("--from-manifest excludes subcommands");
      spec = mfarb::ExperimentSpec::from_file(manifest_path);
      if (out_opt->count() > 0) spec.out_dir = out_override;
      if (workers_opt->count() > 0) spec.workers = workers_override;
    } else if (app.get_subcommands().empty()) {
      std::fputs(app.help().c_str(), stdout);
      return 2;
    } else {
      spec.command = app.get_subcommands().front()->get_name();
    }

    const mfarb::RunResult result = mfarb::run_experiment(spec);
    for (const mfarb::Metric& m : result.metrics) {
      std::string line = m.name + " = " + mfarb::format_double(m.value);
      if (m.stderr_) line += " +- " + mfarb::format_double(*m.stderr_);
      line += '\n';
      std::fputs(line.c_str(), stdout);
    }
    std::fputs(("artifacts: " + result.dir.string() + "\n").c_str(), stdout);
    return 0;
  } catch (const mfarb::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const mfarb::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
