#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "evl/baselines.hpp"
#include "evl/datasets.hpp"
#include "evl/error.hpp"

using evl::GmmModel;
using evl::GmmOptions;
using evl::Matrix;

namespace {

Matrix two_modes_1d(std::size_t n, std::uint64_t seed) {
  evl::Rng rng(seed);
  Matrix x(n, 1);
  for (std::size_t i = 0; i < n; ++i) x(i, 0) = (rng.uniform() < 0.5 ? -6.0 : 6.0) + rng.gaussian();
  return x;
}

bool non_decreasing(const std::vector<double>& h) {
  for (std::size_t i = 1; i < h.size(); ++i)
    if (h[i] < h[i - 1] - 1e-10) return false;
  return true;
}

GmmModel unit_model_1d() { return GmmModel{{1.0}, Matrix{{0.0}}, {Matrix{{1.0}}}}; }

}  // namespace

TEST_CASE("k=1 fit is the sample mean and covariance plus reg") {
  evl::Rng rng(1);
  Matrix x = evl::gaussian_matrix(rng, 2000, 2);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    x(i, 0) = 3.0 + 2.0 * x(i, 0);
    x(i, 1) = x(i, 1) + 0.5 * x(i, 0);
  }
  GmmOptions opt;
  opt.k = 1;
  const auto fit = evl::gmm_fit(x, opt, rng);

  const double n = static_cast<double>(x.rows());
  double mu[2] = {0, 0};
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (int j = 0; j < 2; ++j) mu[j] += x(i, j) / n;
  double cov[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) cov[a][b] += (x(i, a) - mu[a]) * (x(i, b) - mu[b]) / n;

  CHECK(fit.model.weights[0] == doctest::Approx(1.0).epsilon(1e-12));
  for (int j = 0; j < 2; ++j) CHECK(fit.model.means(0, j) == doctest::Approx(mu[j]).epsilon(1e-10));
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      CHECK(fit.model.covariances[0](a, b) == doctest::Approx(cov[a][b] + (a == b ? opt.reg : 0.0)).epsilon(1e-10));
}

TEST_CASE("two well-separated modes are recovered") {
  const Matrix x = two_modes_1d(10000, 2);
  GmmOptions opt;
  opt.k = 2;
  evl::Rng rng(3);
  const auto fit = evl::gmm_fit(x, opt, rng);
  std::vector<double> means{fit.model.means(0, 0), fit.model.means(1, 0)};
  std::sort(means.begin(), means.end());
  CHECK(std::abs(means[0] + 6.0) < 0.1);
  CHECK(std::abs(means[1] - 6.0) < 0.1);
  CHECK(non_decreasing(fit.history));
}

TEST_CASE("EM log-likelihood is monotone on mixture datasets") {
  for (std::size_t dim = 1; dim <= 4; ++dim) {
    const auto ds = evl::make_gaussian_mixture(dim, 4, dim, 3000);
    GmmOptions opt;
    opt.tol = 1e-8;
    opt.max_iter = 60;
    evl::Rng rng(dim);
    const auto fit = evl::gmm_fit(ds.points, opt, rng);
    CAPTURE(dim);
    CHECK(fit.history.size() >= 2);
    CHECK(non_decreasing(fit.history));
    CHECK(fit.log_likelihood >= fit.history.back() - 1e-10);
    CHECK(std::abs(std::accumulate(fit.model.weights.begin(), fit.model.weights.end(), 0.0) - 1.0) < 1e-10);
  }
}

TEST_CASE("gmm_fit is deterministic and validates input") {
  const Matrix x = two_modes_1d(500, 4);
  evl::Rng a(9), b(9);
  const auto fa = evl::gmm_fit(x, GmmOptions{}, a);
  const auto fb = evl::gmm_fit(x, GmmOptions{}, b);
  CHECK(fa.model.means == fb.model.means);
  CHECK(fa.model.weights == fb.model.weights);
  CHECK(fa.history == fb.history);

  GmmOptions opt;
  opt.k = 3;
  CHECK_THROWS_AS(evl::gmm_fit(Matrix(2, 1), opt, a), evl::InvalidInput);
}

TEST_CASE("degenerate data converges with regularized covariances") {
  Matrix x(200, 2, 1.5);
  evl::Rng rng(5);
  GmmOptions opt;
  opt.k = 3;
  const auto fit = evl::gmm_fit(x, opt, rng);
  CHECK(std::isfinite(fit.log_likelihood));
  for (const auto& c : fit.model.covariances) {
    CHECK(c(0, 0) == doctest::Approx(opt.reg));
    CHECK(std::abs(c(0, 1)) < 1e-20);
  }
}

TEST_CASE("gmm_sample") {
  SUBCASE("reg-only covariance collapses onto the mean") {
    const GmmModel m{{1.0}, Matrix{{2.0, -1.0}}, {Matrix{{1e-6, 0}, {0, 1e-6}}}};
    evl::Rng rng(6);
    const Matrix s = evl::gmm_sample(m, rng, 1000);
    // 5 sqrt(reg) is a 5-sigma bound per coordinate.
    for (std::size_t i = 0; i < s.rows(); ++i) {
      CHECK(std::abs(s(i, 0) - 2.0) < 5e-3);
      CHECK(std::abs(s(i, 1) + 1.0) < 5e-3);
    }
  }
  SUBCASE("zero-weight components are never drawn") {
    const GmmModel m{{1.0, 0.0}, Matrix{{-100.0}, {100.0}}, {Matrix{{1.0}}, Matrix{{1.0}}}};
    evl::Rng rng(7);
    const Matrix s = evl::gmm_sample(m, rng, 10000);
    CHECK(std::all_of(s.data().begin(), s.data().end(), [](double v) { return v < 0.0; }));
  }
  SUBCASE("unit normal model has unit std") {
    evl::Rng rng(8);
    const Matrix s = evl::gmm_sample(unit_model_1d(), rng, 1000000);
    double m = 0, m2 = 0;
    for (double v : s.data()) {
      m += v;
      m2 += v * v;
    }
    m /= 1e6;
    CHECK(std::abs(std::sqrt(m2 / 1e6 - m * m) - 1.0) < 0.01);
  }
  SUBCASE("non-SPD covariance is a factorization error") {
    const GmmModel bad{{1.0}, Matrix{{0.0}}, {Matrix{{-1.0}}}};
    evl::Rng rng(9);
    CHECK_THROWS_AS(evl::gmm_sample(bad, rng, 3), evl::NumericalError);
  }
}

TEST_CASE("sample then refit recovers the mean") {
  const GmmModel m{{1.0}, Matrix{{1.0, -2.0, 0.5}}, {Matrix{{2.0, 0.3, 0}, {0.3, 1.0, 0.1}, {0, 0.1, 0.5}}}};
  evl::Rng rng(10);
  const Matrix s = evl::gmm_sample(m, rng, 100000);
  GmmOptions opt;
  opt.k = 1;
  const auto fit = evl::gmm_fit(s, opt, rng);
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(fit.model.means(0, j) - m.means(0, j)) < 0.05);
}

TEST_CASE("GMM file round-trips exactly") {
  const Matrix x = two_modes_1d(400, 11);
  evl::Rng rng(11);
  GmmOptions opt;
  opt.k = 3;
  const GmmModel m = evl::gmm_fit(x, opt, rng).model;
  const auto path = std::filesystem::temp_directory_path() / "evl_gmm_roundtrip.txt";
  evl::save_gmm(path.string(), m, {"seed 11"});
  const GmmModel back = evl::load_gmm(path.string());
  CHECK(back.weights == m.weights);
  CHECK(back.means == m.means);
  CHECK(back.covariances == m.covariances);
  std::filesystem::remove(path);
}

TEST_CASE("empirical model") {
  const std::vector<evl::Axis> axes{evl::Axis{-9, 9, 128}};
  const auto one = evl::empirical_model(Matrix{{0.3}}, axes);
  CHECK(std::count(one.mass.begin(), one.mass.end(), 1.0) == 1);

  const auto ds = evl::make_gaussian_mixture(1, 2, 4, 5000);
  const auto h = evl::empirical_model(ds.points, axes);
  CHECK(std::accumulate(h.mass.begin(), h.mass.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(h.dropped_fraction() < 0.01);
  CHECK(h.mass == evl::empirical_model(ds.points, axes).mass);
}
