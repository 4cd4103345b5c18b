#pragma once

#include <cstddef>
#include <optional>

namespace evl {

/// One histogram axis: `bins` uniform half-open bins covering [lo, hi).
struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t bins = 1;

  /// Left edge of bin i (i == bins gives hi).
  double edge(std::size_t i) const noexcept {
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  }

  /// Bin containing x, or nullopt when x falls outside [lo, hi) or is NaN.
  /// A value equal to an interior edge belongs to the bin on its right.
  std::optional<std::size_t> locate(double x) const noexcept;

  friend bool operator==(const Axis&, const Axis&) = default;
};

}  // namespace evl
