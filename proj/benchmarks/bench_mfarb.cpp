// Throughput benchmarks: particle-engine stepping, noise materialization, and
// the two Wasserstein evaluation methods.

#include <benchmark/benchmark.h>

#include "mfarb/measures.hpp"
#include "mfarb/noise.hpp"
#include "mfarb/rng.hpp"
#include "mfarb/sde.hpp"
#include "mfarb/vsm.hpp"

namespace {

using namespace mfarb;

GameConfig bench_config(int n) {
  GameConfig cfg;
  cfg.n = n;
  cfg.x0 = Vec::Ones(n);
  cfg.T = 1.0;
  cfg.type_law.mu_c = 0.1;
  cfg.type_law.sigma_c = 0.2;
  cfg.seed = 4242;
  return cfg;
}

void BM_EnsembleStep(benchmark::State& state) {
  const int particles = static_cast<int>(state.range(0));
  const GameConfig cfg = bench_config(2);
  VsmConfig vcfg;
  vcfg.n = 2;
  vcfg.x0 = cfg.x0;
  const CoefficientSet coeffs = vsm_coefficients(vcfg);
  const std::vector<InvestorType> types = draw_types(cfg, particles);
  SimOptions opts;
  opts.dt = 1.0 / 256.0;
  opts.z0 = vsm_auto_z0(vcfg, cfg.delta, cfg.e_c_mean());
  EnsembleSim base(cfg, coeffs, types, benchmark_rule(cfg.delta), opts);
  const NoisePath noise = make_noise_path(cfg.seed, 0, 1 << 12, 2, opts.dt);

  long k = 0;
  EnsembleSim sim = base;
  for (auto _ : state) {
    if (k + 1 >= noise.steps()) {
      sim = base;
      k = 0;
    }
    sim.close();
    sim.step(noise.dB.row(k++));
    benchmark::DoNotOptimize(sim.X());
  }
  state.SetItemsProcessed(state.iterations() * particles);
}
BENCHMARK(BM_EnsembleStep)->Arg(64)->Arg(256)->Arg(1024);

void BM_NoisePath(benchmark::State& state) {
  const int steps = static_cast<int>(state.range(0));
  std::uint64_t path = 0;
  for (auto _ : state) {
    const NoisePath p = make_noise_path(99, path++, steps, 2, 1.0 / 256.0);
    benchmark::DoNotOptimize(p.dB);
  }
  state.SetItemsProcessed(state.iterations() * steps * 2);
}
BENCHMARK(BM_NoisePath)->Arg(256)->Arg(1024);

EmpiricalMeasure cloud(int count, std::uint64_t seed, double shift) {
  Mat pts(count, 1);
  for (int i = 0; i < count; ++i)
    pts(i, 0) = shift + rng::normal(seed, rng::Stream::Scratch, static_cast<std::uint64_t>(i), 0);
  return {pts};
}

void BM_W2Assignment(benchmark::State& state) {
  const int count = static_cast<int>(state.range(0));
  const EmpiricalMeasure a = cloud(count, 1, 0.0);
  const EmpiricalMeasure b = cloud(count, 2, 0.3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(w2_assignment(a, b, count));
  }
}
BENCHMARK(BM_W2Assignment)->Arg(32)->Arg(128);

void BM_W2Sliced(benchmark::State& state) {
  const int count = static_cast<int>(state.range(0));
  const EmpiricalMeasure a = cloud(count, 1, 0.0);
  const EmpiricalMeasure b = cloud(count, 2, 0.3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sliced_w2(a, b, 64, 7));
  }
}
BENCHMARK(BM_W2Sliced)->Arg(128)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
