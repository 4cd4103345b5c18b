#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "evl/matrix.hpp"
#include "evl/rng.hpp"

namespace evl {

/// One affine layer: y = x W + b, W stored [in x out].
struct Layer {
  Matrix weights;
  Vector bias;

  std::size_t in_dim() const noexcept { return weights.rows(); }
  std::size_t out_dim() const noexcept { return weights.cols(); }
  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Dense MLP: ReLU after every layer except the last, which is linear.
/// Gradients share this type (one entry per parameter).
struct MlpParams {
  std::vector<Layer> layers;

  std::size_t input_dim() const noexcept { return layers.empty() ? 0 : layers.front().in_dim(); }
  std::size_t output_dim() const noexcept { return layers.empty() ? 0 : layers.back().out_dim(); }
  /// Layer widths including input and output, e.g. {16, 256, ..., 256, 3}.
  std::vector<std::size_t> dims() const;
  std::size_t parameter_count() const noexcept;
  /// Flat parameter addressing: layer by layer, weights (row-major) then bias.
  double& parameter(std::size_t flat);
  double parameter(std::size_t flat) const;

  /// Zero-valued parameters with the same shapes.
  MlpParams zeros_like() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Builds an MLP with the given layer widths. Weights use orthogonal_init with
/// gain sqrt(2) for layers followed by ReLU and gain 1 for the linear output
/// layer; biases start at zero.
MlpParams make_mlp(std::span<const std::size_t> dims, Rng& rng);

/// Layer outputs kept by forward() for backward(). activations[0] is the input,
/// activations[l + 1] the (post-ReLU for hidden layers) output of layer l.
struct ForwardCache {
  std::vector<Matrix> activations;
};

/// Forward pass over a [batch x in] input. Throws InvalidInput on dim mismatch.
/// A supplied cache is refilled in place (its buffers are reused).
Matrix forward(const MlpParams& params, const Matrix& input, ForwardCache* cache = nullptr);

/// Reverse-mode gradients given dLoss/dOutput. The ReLU derivative at 0 is 0.
/// Throws InvalidInput if the cache does not belong to this network and batch.
MlpParams backward(const MlpParams& params, const ForwardCache& cache, const Matrix& output_grad);

/// Buffers reused across backward_into calls.
struct BackpropScratch {
  Matrix delta;
  Matrix prev;
};

/// backward() writing into `grads`, which is reshaped if needed. Every entry
/// of `grads` is overwritten.
void backward_into(const MlpParams& params, const ForwardCache& cache, const Matrix& output_grad, MlpParams& grads,
                   BackpropScratch& scratch);

/// Packs the ReLU on/off pattern of every hidden unit in the cache into a hash.
/// Two evaluations with equal hashes sit in the same linear region.
std::uint64_t activation_signature(const ForwardCache& cache);

struct RmspropState {
  MlpParams mean_square;
  double decay = 0.9;
  double epsilon = 1e-8;
  std::uint64_t steps = 0;

  static RmspropState for_params(const MlpParams& params, double decay = 0.9, double epsilon = 1e-8);
};

/// s <- decay s + (1 - decay) g^2;  theta <- theta - lr g / (sqrt(s) + eps).
void rmsprop_step(MlpParams& params, RmspropState& state, const MlpParams& grads, double lr);

enum class GuessMode { independent, shared };

/// Training hyperparameters for the extreme-value loss network.
struct TrainConfig {
  double lr0 = 5e-4;
  double lr_decay_per_epoch = 0.95;
  std::size_t epochs = 50;
  std::size_t batch_size = 200;
  std::size_t guesses = 128;
  std::size_t noise_dim = 16;
  std::size_t hidden_width = 256;
  std::size_t hidden_layers = 5;
  double loss_exponent = 2.0;
  double mse_weight = 1.0;
  double ce_weight = 1.0;
  GuessMode guess_mode = GuessMode::shared;
  /// When false the cross-entropy gradient only reaches the output layer's
  /// logit weights and never the shared hidden layers.
  bool ce_into_trunk = true;
  double rms_decay = 0.9;
  double rms_epsilon = 1e-8;

  /// Throws InvalidInput if a field is out of range.
  void validate() const;
};

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

/// Value of a scalar loss at some parameters. `regime` identifies the
/// piecewise-smooth region (ReLU pattern, argmin choices); finite-difference
/// probes that cross a region boundary are discarded.
struct LossEvaluation {
  double value = 0.0;
  MlpParams grads;  // only filled when requested
  std::uint64_t regime = 0;
};

using LossFn = std::function<LossEvaluation(const MlpParams&, bool want_grads)>;

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t probed = 0;
  std::size_t skipped_at_kink = 0;
};

/// Compares analytic gradients with central differences (step 1e-5) on
/// `samples` randomly chosen parameters. Relative error is
/// |a - n| / (|a| + |n| + 1e-12).
GradientCheckResult gradient_check(const MlpParams& params, const LossFn& loss_fn, std::size_t samples, Rng& rng,
                                   double step = 1e-5);

/// Text checkpoint. Values use shortest round-trip decimal, so load(save(p)) == p
/// bit for bit. `header` lines are written as '#' comments and ignored on load.
void save_checkpoint(const std::string& path, const MlpParams& params, const std::vector<std::string>& header = {});
MlpParams load_checkpoint(const std::string& path);

}  // namespace evl
