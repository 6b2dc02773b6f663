#pragma once

// Counter-based random number generation (Philox4x32-10, Salmon et al. 2011).
//
// Every random draw in the toolkit is addressed by a logical coordinate
// (seed; stream; unit; step; position) instead of by generator state.  This
// makes simulations reproducible bit-for-bit under any parallel schedule:
// a particle's draws depend only on its own coordinates, never on how work
// was split across threads.  It also gives common random numbers for free:
// re-running with the same coordinates replays the same noise.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace mfarb::rng {

using Block = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

namespace detail {

inline void mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline Block philox_round(const Block& ctr, const Key& key) {
  constexpr std::uint32_t M0 = 0xD2511F53u;
  constexpr std::uint32_t M1 = 0xCD9E8D57u;
  std::uint32_t hi0, lo0, hi1, lo1;
  mulhilo32(M0, ctr[0], hi0, lo0);
  mulhilo32(M1, ctr[2], hi1, lo1);
  return {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

inline Key bump_key(Key key) {
  key[0] += 0x9E3779B9u;  // golden ratio
  key[1] += 0xBB67AE85u;  // sqrt(3)-1
  return key;
}

}  // namespace detail

/// Ten-round Philox 4x32 block function.
inline Block philox4x32(Block ctr, Key key) {
  ctr = detail::philox_round(ctr, key);
  for (int r = 1; r < 10; ++r) {
    key = detail::bump_key(key);
    ctr = detail::philox_round(ctr, key);
  }
  return ctr;
}

/// Logical purpose of a draw stream; keeps address spaces disjoint.
enum class Stream : std::uint32_t {
  CommonNoise = 1,   // Brownian increments shared by an ensemble
  TypeDraw = 2,      // per-investor type sampling
  Projection = 3,    // random directions for sliced distances
  Perturbation = 4,  // solver perturbation experiments
  Scratch = 5,       // tests and ad-hoc draws
};

namespace detail {

inline Block block_at(std::uint64_t seed, Stream stream, std::uint64_t unit, std::uint64_t step,
                      std::uint32_t block) {
  // 128-bit counter: [stream | unit | step | block]; 64-bit key from the seed.
  // unit and step are folded to 32 bits each; desk-scale runs stay far below 2^32.
  const Block ctr = {static_cast<std::uint32_t>(stream) ^ (static_cast<std::uint32_t>(unit >> 32) << 8),
                     static_cast<std::uint32_t>(unit),
                     static_cast<std::uint32_t>(step) ^ (static_cast<std::uint32_t>(step >> 32)),
                     block};
  const Key key = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return philox4x32(ctr, key);
}

inline double u64_to_unit(std::uint64_t x) {
  // 53-bit mantissa in [0,1); offset by half an ulp to stay in (0,1).
  return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace detail

/// Uniform(0,1) draw at a logical coordinate. `position` indexes draws within (unit, step).
inline double uniform01(std::uint64_t seed, Stream stream, std::uint64_t unit, std::uint64_t step,
                        std::uint32_t position = 0) {
  const Block b = detail::block_at(seed, stream, unit, step, position >> 1);
  const std::uint64_t hi = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
  const std::uint64_t lo = (static_cast<std::uint64_t>(b[2]) << 32) | b[3];
  return detail::u64_to_unit((position & 1u) ? lo : hi);
}

/// Fills `out` with independent N(0,1) draws for (seed; stream; unit; step).
/// Each Philox block yields exactly two normals (Box-Muller, no rejection),
/// so consumption is fixed and coordinates never alias.
inline void fill_normals(std::uint64_t seed, Stream stream, std::uint64_t unit, std::uint64_t step,
                         std::span<double> out) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; i += 2) {
    const Block b = detail::block_at(seed, stream, unit, step, static_cast<std::uint32_t>(i / 2));
    const std::uint64_t w1 = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
    const std::uint64_t w2 = (static_cast<std::uint64_t>(b[2]) << 32) | b[3];
    const double u1 = detail::u64_to_unit(w1);
    const double u2 = detail::u64_to_unit(w2);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    out[i] = r * std::cos(phi);
    if (i + 1 < n) out[i + 1] = r * std::sin(phi);
  }
}

/// Single N(0,1) draw at a logical coordinate.
inline double normal(std::uint64_t seed, Stream stream, std::uint64_t unit, std::uint64_t step,
                     std::uint32_t position = 0) {
  const Block b = detail::block_at(seed, stream, unit, step, position >> 1);
  const std::uint64_t w1 = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
  const std::uint64_t w2 = (static_cast<std::uint64_t>(b[2]) << 32) | b[3];
  const double u1 = detail::u64_to_unit(w1);
  const double u2 = detail::u64_to_unit(w2);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  return (position & 1u) ? r * std::sin(phi) : r * std::cos(phi);
}

}  // namespace mfarb::rng
