#pragma once

#include <cstdint>
#include <random>

#include "evl/matrix.hpp"

namespace evl {

/// Mixes a 64-bit value with the SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seedable pseudorandom source.
///
/// Engine: 64-bit Mersenne Twister (std::mt19937_64, whose output sequence is
/// fixed by the C++ standard), seeded with splitmix64(seed). Uniforms take the
/// top 53 bits of one engine word. Normals use the Box-Muller transform on two
/// uniforms; the second value of each pair is cached and returned by the next
/// call. Independent sub-streams come from child(index), which seeds a fresh
/// engine from a hash of (seed, index).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);
  /// Standard normal.
  double gaussian();

  /// Independent stream derived from (seed, index). Does not advance *this.
  Rng child(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Draws n i.i.d. standard normals.
Vector gaussian(Rng& rng, std::size_t n);

/// Fills an rows x cols matrix with i.i.d. standard normals in row-major order.
Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols);

}  // namespace evl
