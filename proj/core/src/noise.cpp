#include "mfarb/noise.hpp"

#include <cmath>
#include <vector>

#include "mfarb/rng.hpp"

namespace mfarb {

NoisePath make_noise_path(std::uint64_t seed, std::uint64_t path_index, int steps, int n,
                          double dt) {
  if (steps < 0 || n < 1) throw ConfigError("noise path needs steps >= 0 and n >= 1");
  if (!(dt > 0.0)) throw ConfigError("noise path needs dt > 0");
  NoisePath p;
  p.dt = dt;
  p.seed = seed;
  p.path_index = path_index;
  p.dB.resize(steps, n);
  const double scale = std::sqrt(dt);
  std::vector<double> z(static_cast<std::size_t>(n));
  for (int k = 0; k < steps; ++k) {
    rng::fill_normals(seed, rng::Stream::CommonNoise, path_index, static_cast<std::uint64_t>(k),
                      z);
    for (int j = 0; j < n; ++j) p.dB(k, j) = scale * z[static_cast<std::size_t>(j)];
  }
  return p;
}

int step_count(double T, double dt) {
  if (!(T > 0.0) || !(dt > 0.0)) throw ConfigError("step_count needs T > 0 and dt > 0");
  const long long k = std::llround(T / dt);
  if (k < 1 || std::abs(static_cast<double>(k) * dt - T) > 1e-9 * std::max(1.0, T))
    throw ConfigError("dt must divide the horizon T");
  return static_cast<int>(k);
}

int step_index(double t, double T, double dt) {
  if (t < 0.0 || t > T + 1e-9 * std::max(1.0, T)) {
    throw ConfigError("time lies outside the horizon");
  }
  const long long k = std::llround(t / dt);
  if (std::abs(static_cast<double>(k) * dt - t) > 1e-9 * std::max(1.0, T))
    throw ConfigError("time must sit on the dt grid");
  return static_cast<int>(k);
}

}  // namespace mfarb
