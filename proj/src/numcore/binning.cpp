#include "evl/binning.hpp"

#include <algorithm>
#include <cmath>

namespace evl {

std::optional<std::size_t> Axis::locate(double x) const noexcept {
  if (!(x >= lo) || !(x < hi)) return std::nullopt;
  const double scaled = (x - lo) / (hi - lo) * static_cast<double>(bins);
  auto idx = static_cast<std::size_t>(std::min(std::floor(scaled), static_cast<double>(bins - 1)));
  // The division can land one bin off near an edge; settle against the edges themselves.
  while (idx + 1 < bins && x >= edge(idx + 1)) ++idx;
  while (idx > 0 && x < edge(idx)) --idx;
  return idx;
}

}  // namespace evl
