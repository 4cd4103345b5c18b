#include "evl/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "evl/error.hpp"
#include "evl/kernels.hpp"
#include "evl/linalg.hpp"

namespace evl {
namespace {

using kernels::Operand;
using kernels::Trans;

void add_bias(Matrix& z, const Vector& bias) {
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
  }
}

void relu_inplace(Matrix& z) {
  for (auto& v : z.data()) v = v > 0.0 ? v : 0.0;
}

}  // namespace

std::vector<std::size_t> MlpParams::dims() const {
  std::vector<std::size_t> d;
  if (layers.empty()) return d;
  d.push_back(layers.front().in_dim());
  for (const auto& l : layers) d.push_back(l.out_dim());
  return d;
}

std::size_t MlpParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

double& MlpParams::parameter(std::size_t flat) {
  for (auto& l : layers) {
    if (flat < l.weights.size()) return l.weights.data()[flat];
    flat -= l.weights.size();
    if (flat < l.bias.size()) return l.bias[flat];
    flat -= l.bias.size();
  }
  throw InvalidInput("parameter index out of range");
}

double MlpParams::parameter(std::size_t flat) const { return const_cast<MlpParams*>(this)->parameter(flat); }

MlpParams MlpParams::zeros_like() const {
  MlpParams z;
  z.layers.reserve(layers.size());
  for (const auto& l : layers) z.layers.push_back({Matrix(l.in_dim(), l.out_dim()), Vector(l.out_dim(), 0.0)});
  return z;
}

MlpParams make_mlp(std::span<const std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) throw InvalidInput("make_mlp: need at least input and output widths");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] == 0 || dims[i + 1] == 0) throw InvalidInput("make_mlp: zero width");
    const bool feeds_relu = i + 2 < dims.size();
    const double gain = feeds_relu ? std::numbers::sqrt2 : 1.0;
    p.layers.push_back({orthogonal_init(dims[i], dims[i + 1], gain, rng), Vector(dims[i + 1], 0.0)});
  }
  return p;
}

Matrix forward(const MlpParams& params, const Matrix& input, ForwardCache* cache) {
  if (params.layers.empty()) throw InvalidInput("forward: empty network");
  if (input.cols() != params.input_dim()) {
    throw InvalidInput("forward: input has " + std::to_string(input.cols()) + " columns, network expects " +
                       std::to_string(params.input_dim()));
  }
  const std::size_t n_layers = params.layers.size();
  const std::size_t batch = input.rows();
  if (cache) {
    cache->activations.resize(n_layers + 1);
    cache->activations[0] = input;
  }
  Matrix current;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Layer& layer = params.layers[l];
    const Matrix& in = l == 0 ? input : (cache ? cache->activations[l] : current);
    Matrix z;
    Matrix& out = cache ? cache->activations[l + 1] : z;
    if (out.rows() != batch || out.cols() != layer.out_dim()) out = Matrix(batch, layer.out_dim());
    kernels::parallel::gemm(batch, layer.out_dim(), layer.in_dim(), {in.data().data(), in.cols()},
                            {layer.weights.data().data(), layer.weights.cols()}, 0.0, out.data().data(), out.cols());
    add_bias(out, layer.bias);
    if (l + 1 < n_layers) relu_inplace(out);
    if (!cache) current = std::move(z);
  }
  return cache ? cache->activations.back() : current;
}

MlpParams backward(const MlpParams& params, const ForwardCache& cache, const Matrix& output_grad) {
  MlpParams grads;
  BackpropScratch scratch;
  backward_into(params, cache, output_grad, grads, scratch);
  return grads;
}

void backward_into(const MlpParams& params, const ForwardCache& cache, const Matrix& output_grad, MlpParams& grads,
                   BackpropScratch& scratch) {
  const std::size_t n_layers = params.layers.size();
  if (cache.activations.size() != n_layers + 1) throw InvalidInput("backward: cache depth does not match network");
  const std::size_t batch = output_grad.rows();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Matrix& a = cache.activations[l];
    if (a.rows() != batch || a.cols() != params.layers[l].in_dim()) {
      throw InvalidInput("backward: cache does not match network or batch at layer " + std::to_string(l));
    }
  }
  if (output_grad.cols() != params.output_dim() || cache.activations.back().rows() != batch) {
    throw InvalidInput("backward: output gradient shape mismatch");
  }
  if (grads.dims() != params.dims()) grads = params.zeros_like();

  const Matrix* delta = &output_grad;
  for (std::size_t l = n_layers; l-- > 0;) {
    const Layer& layer = params.layers[l];
    const Matrix& a = cache.activations[l];
    Layer& g = grads.layers[l];
    kernels::parallel::gemm(layer.in_dim(), layer.out_dim(), batch, {a.data().data(), a.cols(), Trans::yes},
                            {delta->data().data(), delta->cols()}, 0.0, g.weights.data().data(), g.weights.cols());
    std::fill(g.bias.begin(), g.bias.end(), 0.0);
    for (std::size_t i = 0; i < batch; ++i) {
      const auto row = delta->row(i);
      for (std::size_t j = 0; j < row.size(); ++j) g.bias[j] += row[j];
    }
    if (l == 0) break;
    Matrix& prev = scratch.prev;
    if (prev.rows() != batch || prev.cols() != layer.in_dim()) prev = Matrix(batch, layer.in_dim());
    kernels::parallel::gemm(batch, layer.in_dim(), layer.out_dim(), {delta->data().data(), delta->cols()},
                            {layer.weights.data().data(), layer.weights.cols(), Trans::yes}, 0.0,
                            prev.data().data(), prev.cols());
    const auto act = a.data();
    auto pd = prev.data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      if (!(act[i] > 0.0)) pd[i] = 0.0;
    }
    std::swap(scratch.prev, scratch.delta);
    delta = &scratch.delta;
  }
}

std::uint64_t activation_signature(const ForwardCache& cache) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t l = 1; l + 1 < cache.activations.size(); ++l) {
    std::uint64_t word = 0;
    int bits = 0;
    for (double v : cache.activations[l].data()) {
      word = (word << 1) | (v > 0.0 ? 1u : 0u);
      if (++bits == 64) {
        h = splitmix64(h ^ word);
        word = 0;
        bits = 0;
      }
    }
    h = splitmix64(h ^ word ^ static_cast<std::uint64_t>(bits));
  }
  return h;
}

RmspropState RmspropState::for_params(const MlpParams& params, double decay, double epsilon) {
  return {params.zeros_like(), decay, epsilon, 0};
}

void rmsprop_step(MlpParams& params, RmspropState& state, const MlpParams& grads, double lr) {
  if (params.dims() != grads.dims() || params.dims() != state.mean_square.dims()) {
    throw InvalidInput("rmsprop_step: shape mismatch");
  }
  const double rho = state.decay;
  const double eps = state.epsilon;
  auto update = [rho, eps, lr](std::span<double> theta_span, std::span<double> s_span,
                               std::span<const double> g_span) {
    double* __restrict theta = theta_span.data();
    double* __restrict s = s_span.data();
    const double* __restrict g = g_span.data();
    const std::size_t n = theta_span.size();
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rho * s[i] + (1.0 - rho) * g[i] * g[i];
      theta[i] -= lr * g[i] / (std::sqrt(s[i]) + eps);
    }
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weights.data(), state.mean_square.layers[l].weights.data(), grads.layers[l].weights.data());
    update(params.layers[l].bias, state.mean_square.layers[l].bias, grads.layers[l].bias);
  }
  ++state.steps;
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw InvalidInput("lr0 must be positive");
  if (!(lr_decay_per_epoch > 0.0 && lr_decay_per_epoch <= 1.0)) throw InvalidInput("lr decay must be in (0, 1]");
  if (guesses < 1) throw InvalidInput("guesses must be >= 1");
  if (!(loss_exponent > 0.0)) throw InvalidInput("loss exponent must be positive");
  if (batch_size < 1) throw InvalidInput("batch size must be >= 1");
  if (noise_dim < 1) throw InvalidInput("noise dim must be >= 1");
  if (hidden_width < 1) throw InvalidInput("hidden width must be >= 1");
  if (!(rms_decay >= 0.0 && rms_decay < 1.0)) throw InvalidInput("rmsprop decay must be in [0, 1)");
  if (!(rms_epsilon > 0.0)) throw InvalidInput("rmsprop epsilon must be positive");
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.lr0 * std::pow(cfg.lr_decay_per_epoch, static_cast<double>(epoch));
}

}  // namespace evl
