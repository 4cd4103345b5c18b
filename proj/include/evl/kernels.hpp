#pragma once

// Hot loops used by the rest of the toolkit. Each kernel has an OpenMP
// version (namespace parallel) and a plain reference version (namespace
// serial) kept for testing and benchmarking. The parallel versions give
// bitwise-identical results for any thread count: every output element is
// produced by exactly one thread with a fixed reduction order.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "evl/binning.hpp"

namespace evl::kernels {

enum class Trans : bool { no = false, yes = true };

/// Row-major strided operand.
struct Operand {
  const double* data;
  std::size_t ld;
  Trans trans = Trans::no;

  double at(std::size_t r, std::size_t c) const noexcept {
    return trans == Trans::no ? data[r * ld + c] : data[c * ld + r];
  }
};

/// Histogram bin counts plus the number of samples that fell outside the grid.
struct BinCounts {
  std::vector<std::uint64_t> counts;
  std::uint64_t dropped = 0;
};

namespace parallel {

/// C[m x n] = op(A)[m x k] * op(B)[k x n] + beta * C.
void gemm(std::size_t m, std::size_t n, std::size_t k, Operand a, Operand b, double beta, double* c,
          std::size_t ldc);

/// Counts row-major samples [n x axes.size()] into the flattened grid.
/// Flat index is row-major over axes (last axis fastest).
BinCounts bin_counts(std::span<const double> samples, std::span<const Axis> axes);

}  // namespace parallel

namespace serial {

void gemm(std::size_t m, std::size_t n, std::size_t k, Operand a, Operand b, double beta, double* c,
          std::size_t ldc);

BinCounts bin_counts(std::span<const double> samples, std::span<const Axis> axes);

}  // namespace serial

}  // namespace evl::kernels
