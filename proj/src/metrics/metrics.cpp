#include "evl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "evl/error.hpp"
#include "evl/kernels.hpp"
#include "evl/textio.hpp"

namespace evl {
namespace {

void check_same(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw InvalidInput("histograms are defined on different grids");
}

double bhattacharyya(std::span<const double> p, std::span<const double> q) {
  double bc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) bc += std::sqrt(p[i] * q[i]);
  return std::clamp(bc, 0.0, 1.0);
}

}  // namespace

double HistogramGrid::dropped_fraction() const noexcept {
  const auto total = total_in_range + total_dropped;
  return total == 0 ? 0.0 : static_cast<double>(total_dropped) / static_cast<double>(total);
}

HistogramGrid histogram(const Matrix& samples, std::span<const Axis> axes) {
  if (axes.empty()) throw InvalidInput("histogram: no axes");
  if (samples.cols() != axes.size()) {
    throw InvalidInput("histogram: samples have " + std::to_string(samples.cols()) + " columns, grid has " +
                       std::to_string(axes.size()) + " axes");
  }
  for (const auto& ax : axes) {
    if (ax.bins == 0 || !(ax.hi > ax.lo)) throw InvalidInput("histogram: degenerate axis");
  }
  const kernels::BinCounts bc = kernels::parallel::bin_counts(samples.data(), axes);
  HistogramGrid h;
  h.axes.assign(axes.begin(), axes.end());
  h.total_dropped = bc.dropped;
  h.total_in_range = samples.rows() - bc.dropped;
  if (h.total_in_range == 0) throw InvalidInput("histogram: no samples inside the grid");
  const double inv = 1.0 / static_cast<double>(h.total_in_range);
  h.mass.resize(bc.counts.size());
  for (std::size_t i = 0; i < bc.counts.size(); ++i) h.mass[i] = static_cast<double>(bc.counts[i]) * inv;
  return h;
}

HistogramGrid histogram_from_counts(std::vector<Axis> axes, std::span<const double> counts) {
  std::size_t bins = 1;
  for (const auto& ax : axes) bins *= ax.bins;
  if (counts.size() != bins) throw InvalidInput("histogram_from_counts: count length does not match grid");
  double total = 0.0;
  for (double c : counts) {
    if (c < 0.0) throw InvalidInput("histogram_from_counts: negative count");
    total += c;
  }
  if (!(total > 0.0)) throw InvalidInput("histogram_from_counts: zero total");
  HistogramGrid h;
  h.axes = std::move(axes);
  h.mass.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) h.mass[i] = counts[i] / total;
  h.total_in_range = static_cast<std::uint64_t>(std::llround(total));
  return h;
}

std::vector<Axis> gaussian_suite_axes(std::size_t dim) {
  static constexpr std::size_t kBins[] = {128, 64, 32, 16};
  if (dim < 1 || dim > 4) throw InvalidInput("gaussian_suite_axes: dim must be in [1, 4]");
  return std::vector<Axis>(dim, Axis{-9.0, 9.0, kBins[dim - 1]});
}

std::vector<Axis> data_range_axes(const Matrix& reference, std::size_t bins, double pad) {
  if (reference.rows() == 0) throw InvalidInput("data_range_axes: empty reference");
  std::vector<Axis> axes;
  for (std::size_t j = 0; j < reference.cols(); ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < reference.rows(); ++i) {
      lo = std::min(lo, reference(i, j));
      hi = std::max(hi, reference(i, j));
    }
    double span = hi - lo;
    if (!(span > 0.0)) span = 1.0;
    axes.push_back({lo - pad * span, hi + pad * span, bins});
  }
  return axes;
}

std::string describe_axes(std::span<const Axis> axes) {
  std::string s;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (i) s += ';';
    s += '[' + textio::format_double(axes[i].lo) + ':' + textio::format_double(axes[i].hi) + "]x" +
         std::to_string(axes[i].bins);
  }
  return s;
}

double kl_divergence(std::span<const double> p, std::span<const double> q, double reg) {
  check_same(p, q);
  const double norm = 1.0 + static_cast<double>(p.size()) * reg;
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = (p[i] + reg) / norm;
    const double qi = (q[i] + reg) / norm;
    if (pi > 0.0) kl -= pi * std::log(qi / pi);
  }
  return kl;
}

double kl_divergence(const HistogramGrid& p, const HistogramGrid& q, double reg) {
  if (!p.same_grid(q)) throw InvalidInput("kl_divergence: histograms are defined on different grids");
  return kl_divergence(std::span<const double>(p.mass), std::span<const double>(q.mass), reg);
}

double fisher_metric(std::span<const double> p, std::span<const double> q, FisherForm form) {
  check_same(p, q);
  const double bc = bhattacharyya(p, q);
  return form == FisherForm::angle ? 2.0 * std::acos(bc) : 2.0 * std::acos(1.0 - bc);
}

double fisher_metric(const HistogramGrid& p, const HistogramGrid& q, FisherForm form) {
  if (!p.same_grid(q)) throw InvalidInput("fisher_metric: histograms are defined on different grids");
  return fisher_metric(std::span<const double>(p.mass), std::span<const double>(q.mass), form);
}

void save_histogram(const std::string& path, const HistogramGrid& h) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << "# evl-histogram axes=" << h.axes.size() << " in_range=" << h.total_in_range
     << " dropped=" << h.total_dropped << '\n';
  std::string line;
  for (const auto& ax : h.axes) {
    line = "edges";
    for (std::size_t i = 0; i <= ax.bins; ++i) {
      line.push_back(' ');
      textio::append_double(line, ax.edge(i));
    }
    os << line << '\n';
  }
  line = "mass";
  for (double m : h.mass) {
    line.push_back(' ');
    textio::append_double(line, m);
  }
  os << line << '\n';
}

}  // namespace evl
