#pragma once

// Extreme-value loss generator: a noise-driven MLP emits K candidate samples
// per draw plus one logit each. Training takes the minimum of the per-guess
// loss against each target (only the winning guess receives reconstruction
// gradient) and fits the logits with a softmax cross-entropy on the winner's
// index. Sampling draws K guesses and keeps one according to the softmax.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "evl/matrix.hpp"
#include "evl/mlp.hpp"
#include "evl/rng.hpp"

namespace evl {

/// Unconditional generator: trunk maps noise [noise_dim] to [data_dim + 1]
/// (coordinates followed by the probability-head logit).
struct EvlNet {
  MlpParams trunk;
  std::size_t data_dim = 0;

  std::size_t noise_dim() const noexcept { return trunk.input_dim(); }

  /// Checks trunk output == data_dim + 1.
  static EvlNet from_trunk(MlpParams trunk);
};

EvlNet make_evl_net(std::size_t data_dim, const TrainConfig& cfg, Rng& rng);

struct GuessBatch {
  Matrix coords;  // [K x d]
  Vector logits;  // [K]
  Vector probs;   // softmax(logits)
};

/// Numerically stable softmax.
Vector softmax(std::span<const double> logits);

GuessBatch generate_guesses(const EvlNet& net, Rng& rng, std::size_t k);

/// Mean over dimensions of |guess - target|^q.
double guess_loss(std::span<const double> guess, std::span<const double> target, double q);

struct EvlLossTerms {
  std::size_t winner = 0;
  double mse_min = 0.0;
  double ce = 0.0;
};

/// Winner is the lowest-index argmin of guess_loss; ce = -log probs[winner].
EvlLossTerms evl_loss(const GuessBatch& guesses, std::span<const double> target, double q);

/// For each target row, the index of its lowest-loss guess among the shared
/// coordinate rows (ties to the lowest index).
std::vector<std::size_t> match_shared(const Matrix& coords, const Matrix& targets, double q);

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0.0;
  double total = 0.0;  // mean over targets of mse_weight * mse_min + ce_weight * ce
  double mse_min = 0.0;
  double ce = 0.0;
};

struct TrainResult {
  EvlNet net;
  std::vector<EpochStats> history;
};

/// Called after each epoch; returning false stops training early.
using EpochCallback = std::function<bool(const EpochStats&)>;

/// Trains on the rows of `data` (n x net.data_dim). Deterministic given rng state.
TrainResult train(EvlNet net, const Matrix& data, const TrainConfig& cfg, Rng& rng,
                  const EpochCallback& on_epoch = {});

/// Mean batch objective and its gradient for one batch of targets, using the
/// provided noise. In shared mode `noise` has K rows; in independent mode it
/// has targets.rows() * K rows, K per target in order. Exposed for gradient
/// checking; train() uses the same code.
LossEvaluation batch_objective(const EvlNet& net, const Matrix& noise, const Matrix& targets, const TrainConfig& cfg,
                               bool want_grads);

/// Draws n samples: each draw generates K guesses and emits one chosen from
/// the softmax of their logits. With draws_per_batch = m > 1, m indices are
/// drawn (with replacement) from every generated batch; the marginal law of
/// each emitted sample is unchanged.
Matrix rejection_sample(const EvlNet& net, Rng& rng, std::size_t n, std::size_t k, std::size_t draws_per_batch = 1);

/// Writes m coordinate rows chosen from `batch` by its probs into out rows
/// [first_row, first_row + m). This is the selection step of rejection_sample.
void draw_from_batch(const GuessBatch& batch, Rng& rng, std::size_t m, Matrix& out, std::size_t first_row = 0);

/// Categorical draw by inverse CDF over probabilities summing to 1.
std::size_t sample_categorical(std::span<const double> probs, Rng& rng);

}  // namespace evl
