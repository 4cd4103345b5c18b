#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "evl/matrix.hpp"

namespace evl {

struct Dataset {
  Matrix points;  // [n x dim]
  std::string generator;
  std::uint64_t seed = 0;
  /// Generator parameters, written into the file header.
  std::map<std::string, std::string> params;

  std::size_t dim() const noexcept { return points.cols(); }
  std::size_t size() const noexcept { return points.rows(); }
};

/// Centers of the equal-weight unit-Gaussian mixture for this (dim, modes, seed),
/// drawn uniformly in [-6, 6]^dim from child stream 0 of the seed.
Matrix gaussian_mixture_centers(std::size_t dim, std::size_t n_modes, std::uint64_t seed);

/// n points from the mixture. Samples come from child stream 1 (train) or any
/// other `stream` index, so train and test sets of one seed share centers but
/// not draws. When `modes` is given it receives each row's mixture component.
Dataset make_gaussian_mixture(std::size_t dim, std::size_t n_modes, std::uint64_t seed, std::size_t n,
                              std::uint64_t stream = 1, std::vector<std::size_t>* modes = nullptr);

/// Swiss roll: t = 1.5 pi (1 + 2u), point = scale * ((t cos t, 21 v, t sin t) + noise * N(0, I)),
/// u, v ~ U(0, 1).
Dataset make_swiss_roll(std::size_t n, double noise, double scale, std::uint64_t seed, std::uint64_t stream = 1);

/// Maps a single (u, v, eps) draw to a swiss-roll point. Exposed for tests.
void swiss_roll_point(double u, double v, const double eps[3], double noise, double scale, double out[3]);

/// Text format: line 1 "# key=value ..." metadata, line 2 "<dim> <count>",
/// then one sample per line as space-separated shortest round-trip decimals.
void save_dataset(const std::string& path, const Dataset& ds);

/// Throws ParseError (with line number) on malformed input.
Dataset load_dataset(const std::string& path);

}  // namespace evl
