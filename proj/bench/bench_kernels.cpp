// Times the OpenMP kernels against their serial references on the shapes
// that dominate training and evaluation.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "evl/kernels.hpp"
#include "evl/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using Clock = std::chrono::steady_clock;
using evl::kernels::Operand;
using evl::kernels::Trans;

double time_best(const std::function<void()>& fn, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return best;
}

struct GemmShape {
  std::string label;
  std::size_t m, n, k;
  Trans ta, tb;
};

void bench_gemm(const GemmShape& s, evl::Rng& rng) {
  const std::size_t a_rows = s.ta == Trans::no ? s.m : s.k;
  const std::size_t a_cols = s.ta == Trans::no ? s.k : s.m;
  const std::size_t b_rows = s.tb == Trans::no ? s.k : s.n;
  const std::size_t b_cols = s.tb == Trans::no ? s.n : s.k;
  const auto a = evl::gaussian(rng, a_rows * a_cols);
  const auto b = evl::gaussian(rng, b_rows * b_cols);
  std::vector<double> c(s.m * s.n);
  const Operand oa{a.data(), a_cols, s.ta};
  const Operand ob{b.data(), b_cols, s.tb};
  const double flops = 2.0 * s.m * s.n * s.k;

  const double t_par =
      time_best([&] { evl::kernels::parallel::gemm(s.m, s.n, s.k, oa, ob, 0.0, c.data(), s.n); }, 20);
  const double t_ser =
      time_best([&] { evl::kernels::serial::gemm(s.m, s.n, s.k, oa, ob, 0.0, c.data(), s.n); }, 3);
  std::printf("gemm %-22s parallel %8.3f ms %7.2f GFLOP/s | serial %8.3f ms %7.2f GFLOP/s | x%.1f\n",
              s.label.c_str(), t_par * 1e3, flops / t_par * 1e-9, t_ser * 1e3, flops / t_ser * 1e-9,
              t_ser / t_par);
}

void bench_histogram(std::size_t n, std::size_t dim, std::size_t bins, evl::Rng& rng) {
  const auto samples = evl::gaussian(rng, n * dim);
  const std::vector<evl::Axis> axes(dim, evl::Axis{-9.0, 9.0, bins});
  const double t_par = time_best([&] { (void)evl::kernels::parallel::bin_counts(samples, axes); }, 5);
  const double t_ser = time_best([&] { (void)evl::kernels::serial::bin_counts(samples, axes); }, 5);
  std::printf("bin_counts n=%zu d=%zu bins=%zu  parallel %8.3f ms | serial %8.3f ms | x%.1f\n", n, dim, bins,
              t_par * 1e3, t_ser * 1e3, t_ser / t_par);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#endif
  evl::Rng rng(7);
  const std::vector<GemmShape> shapes = {
      {"forward 128x256x256", 128, 256, 256, Trans::no, Trans::no},
      {"input-grad 128x256x256^T", 128, 256, 256, Trans::no, Trans::yes},
      {"weight-grad 256^Tx128x256", 256, 256, 128, Trans::yes, Trans::no},
      {"sampling 4096x256x256", 4096, 256, 256, Trans::no, Trans::no},
      {"first layer 128x256x16", 128, 256, 16, Trans::no, Trans::no},
  };
  for (const auto& s : shapes) bench_gemm(s, rng);
  bench_histogram(400000, 1, 128, rng);
  bench_histogram(400000, 4, 16, rng);
  return 0;
}
