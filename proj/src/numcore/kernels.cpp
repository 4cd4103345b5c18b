#include "evl/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace evl::kernels {
namespace {

// Register tile: MR rows by NR columns of C held in 2*MR vector accumulators.
constexpr std::size_t kMR = 8;
constexpr std::size_t kNR = 16;
constexpr std::size_t kKC = 256;

typedef double v8d __attribute__((vector_size(64), aligned(8), may_alias));

inline v8d load8(const double* p) { return *reinterpret_cast<const v8d*>(p); }
inline void store8(double* p, v8d v) { *reinterpret_cast<v8d*>(p) = v; }

// Packs op(B)[p0:p0+kc, 0:n] into NR-wide column panels, each laid out [kc][NR].
void pack_b(Operand b, std::size_t p0, std::size_t kc, std::size_t n, double* out) {
  const std::size_t panels = (n + kNR - 1) / kNR;
  for (std::size_t jp = 0; jp < panels; ++jp) {
    double* dst = out + jp * kc * kNR;
    const std::size_t j0 = jp * kNR;
    const std::size_t nr = std::min(kNR, n - j0);
    for (std::size_t p = 0; p < kc; ++p) {
      double* row = dst + p * kNR;
      if (b.trans == Trans::no) {
        const double* src = b.data + (p0 + p) * b.ld + j0;
        for (std::size_t j = 0; j < nr; ++j) row[j] = src[j];
      } else {
        for (std::size_t j = 0; j < nr; ++j) row[j] = b.data[(j0 + j) * b.ld + p0 + p];
      }
      for (std::size_t j = nr; j < kNR; ++j) row[j] = 0.0;
    }
  }
}

// Packs op(A)[i0:i0+mr, p0:p0+kc] as [kc][MR].
void pack_a(Operand a, std::size_t i0, std::size_t mr, std::size_t p0, std::size_t kc, double* out) {
  for (std::size_t p = 0; p < kc; ++p) {
    double* col = out + p * kMR;
    if (a.trans == Trans::no) {
      for (std::size_t i = 0; i < mr; ++i) col[i] = a.data[(i0 + i) * a.ld + p0 + p];
    } else {
      const double* src = a.data + (p0 + p) * a.ld + i0;
      for (std::size_t i = 0; i < mr; ++i) col[i] = src[i];
    }
    for (std::size_t i = mr; i < kMR; ++i) col[i] = 0.0;
  }
}

void micro_kernel(std::size_t kc, const double* ap, const double* bp, double* c, std::size_t ldc,
                  std::size_t mr, std::size_t nr) {
  v8d acc0[kMR] = {};
  v8d acc1[kMR] = {};
  for (std::size_t p = 0; p < kc; ++p) {
    const v8d b0 = load8(bp + p * kNR);
    const v8d b1 = load8(bp + p * kNR + 8);
    const double* a = ap + p * kMR;
#pragma GCC unroll 8
    for (std::size_t i = 0; i < kMR; ++i) {
      acc0[i] += a[i] * b0;
      acc1[i] += a[i] * b1;
    }
  }
  if (mr == kMR && nr == kNR) {
    for (std::size_t i = 0; i < kMR; ++i) {
      double* crow = c + i * ldc;
      store8(crow, load8(crow) + acc0[i]);
      store8(crow + 8, load8(crow + 8) + acc1[i]);
    }
    return;
  }
  for (std::size_t i = 0; i < mr; ++i) {
    double tile[kNR];
    store8(tile, acc0[i]);
    store8(tile + 8, acc1[i]);
    for (std::size_t j = 0; j < nr; ++j) c[i * ldc + j] += tile[j];
  }
}

void scale_c(std::size_t m, std::size_t n, double beta, double* c, std::size_t ldc) {
  if (beta == 1.0) return;
  for (std::size_t i = 0; i < m; ++i) {
    double* row = c + i * ldc;
    if (beta == 0.0) {
      std::fill(row, row + n, 0.0);
    } else {
      for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
    }
  }
}

std::size_t flat_bin(const double* x, std::span<const Axis> axes, bool& inside) {
  std::size_t flat = 0;
  for (std::size_t a = 0; a < axes.size(); ++a) {
    const auto idx = axes[a].locate(x[a]);
    if (!idx) {
      inside = false;
      return 0;
    }
    flat = flat * axes[a].bins + *idx;
  }
  inside = true;
  return flat;
}

std::size_t grid_size(std::span<const Axis> axes) {
  std::size_t total = 1;
  for (const auto& ax : axes) total *= ax.bins;
  return total;
}

}  // namespace

namespace parallel {

void gemm(std::size_t m, std::size_t n, std::size_t k, Operand a, Operand b, double beta, double* c,
          std::size_t ldc) {
  scale_c(m, n, beta, c, ldc);
  if (m == 0 || n == 0 || k == 0) return;

  const std::size_t n_panels = (n + kNR - 1) / kNR;
  const std::size_t m_panels = (m + kMR - 1) / kMR;
  std::vector<double> bpack(n_panels * kKC * kNR);

  for (std::size_t p0 = 0; p0 < k; p0 += kKC) {
    const std::size_t kc = std::min(kKC, k - p0);
    pack_b(b, p0, kc, n, bpack.data());

#pragma omp parallel
    {
      std::vector<double> apack(kc * kMR);
#pragma omp for schedule(static)
      for (std::ptrdiff_t ip = 0; ip < static_cast<std::ptrdiff_t>(m_panels); ++ip) {
        const std::size_t i0 = static_cast<std::size_t>(ip) * kMR;
        const std::size_t mr = std::min(kMR, m - i0);
        pack_a(a, i0, mr, p0, kc, apack.data());
        for (std::size_t jp = 0; jp < n_panels; ++jp) {
          const std::size_t j0 = jp * kNR;
          micro_kernel(kc, apack.data(), bpack.data() + jp * kc * kNR, c + i0 * ldc + j0, ldc, mr,
                       std::min(kNR, n - j0));
        }
      }
    }
  }
}

BinCounts bin_counts(std::span<const double> samples, std::span<const Axis> axes) {
  const std::size_t d = axes.size();
  const std::size_t n = d == 0 ? 0 : samples.size() / d;
  BinCounts out;
  out.counts.assign(grid_size(axes), 0);
  std::uint64_t dropped = 0;

#pragma omp parallel reduction(+ : dropped)
  {
    std::vector<std::uint64_t> local(out.counts.size(), 0);
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      bool inside = false;
      const std::size_t bin = flat_bin(samples.data() + static_cast<std::size_t>(i) * d, axes, inside);
      if (inside) {
        ++local[bin];
      } else {
        ++dropped;
      }
    }
#pragma omp critical
    for (std::size_t j = 0; j < local.size(); ++j) out.counts[j] += local[j];
  }
  out.dropped = dropped;
  return out;
}

}  // namespace parallel

namespace serial {

void gemm(std::size_t m, std::size_t n, std::size_t k, Operand a, Operand b, double beta, double* c,
          std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += a.at(i, p) * b.at(p, j);
      double& out = c[i * ldc + j];
      out = (beta == 0.0 ? 0.0 : beta * out) + sum;
    }
  }
}

BinCounts bin_counts(std::span<const double> samples, std::span<const Axis> axes) {
  const std::size_t d = axes.size();
  const std::size_t n = d == 0 ? 0 : samples.size() / d;
  BinCounts out;
  out.counts.assign(grid_size(axes), 0);
  for (std::size_t i = 0; i < n; ++i) {
    bool inside = false;
    const std::size_t bin = flat_bin(samples.data() + i * d, axes, inside);
    if (inside) {
      ++out.counts[bin];
    } else {
      ++out.dropped;
    }
  }
  return out;
}

}  // namespace serial

}  // namespace evl::kernels
