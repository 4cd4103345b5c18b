#include <cmath>
#include <unordered_set>

#include "evl/error.hpp"
#include "evl/mlp.hpp"

namespace evl {

GradientCheckResult gradient_check(const MlpParams& params, const LossFn& loss_fn, std::size_t samples, Rng& rng,
                                   double step) {
  const std::size_t count = params.parameter_count();
  if (count == 0) throw InvalidInput("gradient_check: network has no parameters");

  const LossEvaluation base = loss_fn(params, true);
  if (base.grads.dims() != params.dims()) throw InvalidInput("gradient_check: loss_fn returned no gradients");

  GradientCheckResult result;
  MlpParams probe = params;
  std::unordered_set<std::size_t> seen;
  const std::size_t target = std::min(samples, count);
  const std::size_t max_attempts = 20 * target + 100;

  for (std::size_t attempt = 0; attempt < max_attempts && result.probed < target; ++attempt) {
    const std::size_t idx = rng.uniform_index(count);
    if (!seen.insert(idx).second) continue;

    const double original = params.parameter(idx);
    probe.parameter(idx) = original + step;
    const LossEvaluation plus = loss_fn(probe, false);
    probe.parameter(idx) = original - step;
    const LossEvaluation minus = loss_fn(probe, false);
    probe.parameter(idx) = original;

    if (plus.regime != base.regime || minus.regime != base.regime) {
      ++result.skipped_at_kink;
      continue;
    }
    const double numeric = (plus.value - minus.value) / (2.0 * step);
    const double analytic = base.grads.parameter(idx);
    const double rel = std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
    result.max_relative_error = std::max(result.max_relative_error, rel);
    ++result.probed;
  }
  return result;
}

}  // namespace evl
