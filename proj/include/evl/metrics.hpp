#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evl/binning.hpp"
#include "evl/matrix.hpp"

namespace evl {

/// Normalized histogram over a uniform grid. mass is flattened row-major over
/// axes (last axis fastest) and sums to 1 over in-range samples.
struct HistogramGrid {
  std::vector<Axis> axes;
  std::vector<double> mass;
  std::uint64_t total_in_range = 0;
  std::uint64_t total_dropped = 0;

  std::size_t bin_count() const noexcept { return mass.size(); }
  double dropped_fraction() const noexcept;
  bool same_grid(const HistogramGrid& other) const noexcept { return axes == other.axes; }
};

/// Bins samples [n x axes.size()]. Out-of-range rows are dropped and counted.
/// Throws InvalidInput when no sample lands inside the grid.
HistogramGrid histogram(const Matrix& samples, std::span<const Axis> axes);

/// Histogram from raw counts (for tests and fixtures).
HistogramGrid histogram_from_counts(std::vector<Axis> axes, std::span<const double> counts);

/// Fixed symmetric grid [-9, 9]^dim with 128/64/32/16 bins per axis for dims 1-4.
std::vector<Axis> gaussian_suite_axes(std::size_t dim);

/// Per-axis range of the reference samples widened by `pad` of the span on
/// each side, `bins` bins per axis.
std::vector<Axis> data_range_axes(const Matrix& reference, std::size_t bins, double pad = 0.01);

/// Binning description without commas (CSV-safe), e.g. "[-9:9]x128;[-9:9]x128".
std::string describe_axes(std::span<const Axis> axes);

constexpr double kDefaultKlRegularization = 1e-32;

/// KL(p || q) in nats after adding `reg` virtual mass to every bin of both
/// histograms and renormalizing. Throws InvalidInput on grid mismatch.
double kl_divergence(const HistogramGrid& p, const HistogramGrid& q, double reg = kDefaultKlRegularization);
double kl_divergence(std::span<const double> p, std::span<const double> q, double reg = kDefaultKlRegularization);

enum class FisherForm {
  angle,          // 2 acos(BC)
  paper_literal,  // 2 acos(1 - BC)
};

/// Fisher-Rao distance between discrete distributions via the Bhattacharyya
/// coefficient BC = sum sqrt(p_i q_i), clamped to [0, 1].
double fisher_metric(const HistogramGrid& p, const HistogramGrid& q, FisherForm form = FisherForm::angle);
double fisher_metric(std::span<const double> p, std::span<const double> q, FisherForm form = FisherForm::angle);

/// Bin edges and masses as text for external plotting.
void save_histogram(const std::string& path, const HistogramGrid& h);

}  // namespace evl
