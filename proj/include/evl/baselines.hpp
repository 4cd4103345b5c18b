#pragma once

#include <span>
#include <string>
#include <vector>

#include "evl/matrix.hpp"
#include "evl/metrics.hpp"
#include "evl/rng.hpp"

namespace evl {

/// Full-covariance Gaussian mixture.
struct GmmModel {
  Vector weights;                   // [k], sums to 1
  Matrix means;                     // [k x d]
  std::vector<Matrix> covariances;  // k of [d x d], SPD

  std::size_t k() const noexcept { return weights.size(); }
  std::size_t dim() const noexcept { return means.cols(); }
};

struct GmmOptions {
  std::size_t k = 10;
  std::size_t max_iter = 100;
  double tol = 1e-3;  // on the change of mean log-likelihood
  double reg = 1e-6;  // added to covariance diagonals
};

struct GmmFit {
  GmmModel model;
  double log_likelihood = 0.0;  // mean per sample, at the returned model
  std::vector<double> history;  // mean log-likelihood before each M-step
  std::size_t iterations = 0;
  bool converged = false;
};

/// EM fit. Means are seeded k-means++ style from data rows, weights start
/// uniform, and every component starts with the pooled covariance of the
/// residuals to the nearest seed. Deterministic given (data, rng state).
/// Throws InvalidInput when data has fewer rows than k.
GmmFit gmm_fit(const Matrix& data, const GmmOptions& options, Rng& rng);

/// Mean log-likelihood of the rows of `data` under the model.
double gmm_mean_log_likelihood(const GmmModel& model, const Matrix& data);

/// Draws n samples (component by weight, then mean + L z with L the Cholesky
/// factor). Throws NumericalError for a non-SPD covariance.
Matrix gmm_sample(const GmmModel& model, Rng& rng, std::size_t n);

void save_gmm(const std::string& path, const GmmModel& model, const std::vector<std::string>& header = {});
GmmModel load_gmm(const std::string& path);

/// The empirical baseline: the training-set histogram itself.
HistogramGrid empirical_model(const Matrix& train, std::span<const Axis> axes);

}  // namespace evl
