#include "evl/evl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "evl/error.hpp"

namespace evl {
namespace {

// Rows of trunk evaluation per forward call when many guesses are needed.
constexpr std::size_t kRowsPerChunk = 4096;

double guess_loss_grad(double diff, double q, double inv_d) {
  if (diff == 0.0) return 0.0;
  if (q == 2.0) return 2.0 * inv_d * diff;
  const double mag = q * std::pow(std::abs(diff), q - 1.0) * inv_d;
  return diff > 0.0 ? mag : -mag;
}

double log_sum_exp(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - mx);
  return mx + std::log(sum);
}

// Neumaier compensated sum. The batch loss adds hundreds of O(1) terms and
// finite-difference checks resolve changes near 1e-11 of it.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) {
    const double t = sum + x;
    carry += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + carry; }
};

// Lowest-index argmin of guess_loss over rows [first, first + k) of `out`
// (whose first d columns are coordinates).
std::pair<std::size_t, double> nearest_guess(const Matrix& out, std::size_t first, std::size_t k, std::size_t d,
                                             std::span<const double> target, double q) {
  std::size_t best = 0;
  double best_loss = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double l = guess_loss(out.row(first + i).first(d), target, q);
    if (i == 0 || l < best_loss) {
      best = i;
      best_loss = l;
    }
  }
  return {best, best_loss};
}

struct ObjectiveParts {
  double total = 0.0;
  double mse_min = 0.0;
  double ce = 0.0;
  std::uint64_t regime = 0;
};

// Buffers carried across training steps.
struct Workspace {
  ForwardCache cache;
  BackpropScratch scratch;
  Matrix chunk_noise;
  Matrix grad_out;
  MlpParams chunk_grads;
  MlpParams grads;
};

void add_into(MlpParams& acc, const MlpParams& g) {
  for (std::size_t l = 0; l < acc.layers.size(); ++l) {
    auto a = acc.layers[l].weights.data();
    const auto b = g.layers[l].weights.data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    for (std::size_t i = 0; i < acc.layers[l].bias.size(); ++i) acc.layers[l].bias[i] += g.layers[l].bias[i];
  }
}

// Backprop of ws.grad_out into `grads`. With ce_into_trunk off, the last
// column (the logit) only reaches the output layer.
void backprop(const EvlNet& net, Workspace& ws, MlpParams& grads, bool ce_into_trunk) {
  if (ce_into_trunk) {
    backward_into(net.trunk, ws.cache, ws.grad_out, grads, ws.scratch);
    return;
  }
  const std::size_t d = net.data_dim;
  Matrix& grad_out = ws.grad_out;
  Vector logit_grad(grad_out.rows());
  for (std::size_t i = 0; i < grad_out.rows(); ++i) {
    logit_grad[i] = grad_out(i, d);
    grad_out(i, d) = 0.0;
  }
  backward_into(net.trunk, ws.cache, grad_out, grads, ws.scratch);
  const Matrix& a = ws.cache.activations[ws.cache.activations.size() - 2];
  Layer& last = grads.layers.back();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) last.weights(j, d) += a(i, j) * logit_grad[i];
    last.bias[d] += logit_grad[i];
  }
}

// Fills ws.grads when want_grads is set.
ObjectiveParts objective(const EvlNet& net, const Matrix& noise, const Matrix& targets, const TrainConfig& cfg,
                         bool want_grads, Workspace& ws) {
  const std::size_t d = net.data_dim;
  const std::size_t batch = targets.rows();
  const std::size_t k = cfg.guesses;
  const double q = cfg.loss_exponent;
  const double inv_b = 1.0 / static_cast<double>(batch);
  const double inv_d = 1.0 / static_cast<double>(d);
  if (batch == 0) throw InvalidInput("objective: empty target batch");
  if (targets.cols() != d) throw InvalidInput("objective: target dimension mismatch");

  ObjectiveParts parts;
  CompensatedSum mse_sum, ce_sum;
  std::uint64_t regime = 0x84222325cbf29ce4ULL;

  // Each group shares one softmax over k guesses. Shared mode: one group
  // serving every target. Independent mode: one group per target.
  const bool shared = cfg.guess_mode == GuessMode::shared;
  const std::size_t expected_rows = shared ? k : batch * k;
  if (noise.rows() != expected_rows || noise.cols() != net.noise_dim()) {
    throw InvalidInput("objective: noise has " + std::to_string(noise.rows()) + "x" + std::to_string(noise.cols()) +
                       ", expected " + std::to_string(expected_rows) + "x" + std::to_string(net.noise_dim()));
  }
  const std::size_t targets_per_chunk = shared ? batch : std::max<std::size_t>(1, kRowsPerChunk / k);

  for (std::size_t t0 = 0; t0 < batch; t0 += targets_per_chunk) {
    const std::size_t t1 = std::min(batch, t0 + targets_per_chunk);
    const std::size_t groups = shared ? 1 : t1 - t0;
    const std::size_t row0 = shared ? 0 : t0 * k;

    const bool whole = row0 == 0 && groups * k == noise.rows();
    if (!whole) {
      if (ws.chunk_noise.rows() != groups * k) ws.chunk_noise = Matrix(groups * k, noise.cols());
      std::copy_n(noise.data().begin() + static_cast<std::ptrdiff_t>(row0 * noise.cols()), ws.chunk_noise.size(),
                  ws.chunk_noise.data().begin());
    }
    const Matrix out = forward(net.trunk, whole ? noise : ws.chunk_noise, &ws.cache);
    regime = splitmix64(regime ^ activation_signature(ws.cache));

    Matrix& grad_out = ws.grad_out;
    if (want_grads) {
      if (grad_out.rows() != out.rows() || grad_out.cols() != out.cols()) grad_out = Matrix(out.rows(), out.cols());
      grad_out.fill(0.0);
    }

    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t first = g * k;
      std::vector<double> logits(k);
      for (std::size_t i = 0; i < k; ++i) logits[i] = out(first + i, d);
      const double log_z = log_sum_exp(logits);
      std::vector<double> wins(k, 0.0);

      const std::size_t tb = shared ? t0 : t0 + g;
      const std::size_t te = shared ? t1 : t0 + g + 1;
      for (std::size_t t = tb; t < te; ++t) {
        const auto target = targets.row(t);
        const auto [w, loss] = nearest_guess(out, first, k, d, target, q);
        regime = splitmix64(regime ^ (w + 1));
        mse_sum.add(loss);
        ce_sum.add(log_z - logits[w]);
        if (want_grads) {
          const auto coords = out.row(first + w);
          for (std::size_t j = 0; j < d; ++j) {
            grad_out(first + w, j) += cfg.mse_weight * inv_b * guess_loss_grad(coords[j] - target[j], q, inv_d);
          }
          wins[w] += 1.0;
        }
      }
      if (want_grads) {
        // d(-log p_w)/d logit_i = p_i - [i == w], summed over this group's targets.
        const double group_targets = static_cast<double>(te - tb);
        for (std::size_t i = 0; i < k; ++i) {
          grad_out(first + i, d) += cfg.ce_weight * inv_b * (std::exp(logits[i] - log_z) * group_targets - wins[i]);
        }
      }
    }
    if (want_grads) {
      if (t0 == 0) {
        backprop(net, ws, ws.grads, cfg.ce_into_trunk);
      } else {
        backprop(net, ws, ws.chunk_grads, cfg.ce_into_trunk);
        add_into(ws.grads, ws.chunk_grads);
      }
    }
  }
  parts.mse_min = mse_sum.value() * inv_b;
  parts.ce = ce_sum.value() * inv_b;
  parts.total = cfg.mse_weight * parts.mse_min + cfg.ce_weight * parts.ce;
  parts.regime = regime;
  return parts;
}

}  // namespace

EvlNet EvlNet::from_trunk(MlpParams trunk) {
  const std::size_t out = trunk.output_dim();
  if (out < 2) throw InvalidInput("EvlNet: trunk must emit at least one coordinate and one logit");
  return EvlNet{std::move(trunk), out - 1};
}

EvlNet make_evl_net(std::size_t data_dim, const TrainConfig& cfg, Rng& rng) {
  if (data_dim == 0) throw InvalidInput("make_evl_net: data_dim must be positive");
  std::vector<std::size_t> dims{cfg.noise_dim};
  for (std::size_t i = 0; i < cfg.hidden_layers; ++i) dims.push_back(cfg.hidden_width);
  dims.push_back(data_dim + 1);
  return EvlNet{make_mlp(dims, rng), data_dim};
}

Vector softmax(std::span<const double> logits) {
  if (logits.empty()) return {};
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vector p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += p[i] = std::exp(logits[i] - mx);
  for (auto& v : p) v /= sum;
  return p;
}

GuessBatch generate_guesses(const EvlNet& net, Rng& rng, std::size_t k) {
  if (k == 0) throw InvalidInput("generate_guesses: K must be >= 1");
  const Matrix noise = gaussian_matrix(rng, k, net.noise_dim());
  const Matrix out = forward(net.trunk, noise);
  GuessBatch b{Matrix(k, net.data_dim), Vector(k), {}};
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < net.data_dim; ++j) b.coords(i, j) = out(i, j);
    b.logits[i] = out(i, net.data_dim);
  }
  b.probs = softmax(b.logits);
  return b;
}

double guess_loss(std::span<const double> guess, std::span<const double> target, double q) {
  double s = 0.0;
  if (q == 2.0) {
    for (std::size_t j = 0; j < guess.size(); ++j) {
      const double diff = guess[j] - target[j];
      s += diff * diff;
    }
  } else {
    for (std::size_t j = 0; j < guess.size(); ++j) s += std::pow(std::abs(guess[j] - target[j]), q);
  }
  return s / static_cast<double>(guess.size());
}

EvlLossTerms evl_loss(const GuessBatch& guesses, std::span<const double> target, double q) {
  const std::size_t k = guesses.coords.rows();
  if (k == 0) throw InvalidInput("evl_loss: empty guess batch");
  if (target.size() != guesses.coords.cols()) throw InvalidInput("evl_loss: target dimension mismatch");
  if (!(q > 0.0)) throw InvalidInput("evl_loss: q must be positive");
  const auto [w, loss] = nearest_guess(guesses.coords, 0, k, target.size(), target, q);
  return {w, loss, -std::log(guesses.probs[w])};
}

std::vector<std::size_t> match_shared(const Matrix& coords, const Matrix& targets, double q) {
  if (coords.rows() == 0) throw InvalidInput("match_shared: no guesses");
  if (coords.cols() != targets.cols()) throw InvalidInput("match_shared: dimension mismatch");
  std::vector<std::size_t> winners(targets.rows());
  for (std::size_t t = 0; t < targets.rows(); ++t) {
    winners[t] = nearest_guess(coords, 0, coords.rows(), coords.cols(), targets.row(t), q).first;
  }
  return winners;
}

LossEvaluation batch_objective(const EvlNet& net, const Matrix& noise, const Matrix& targets, const TrainConfig& cfg,
                               bool want_grads) {
  Workspace ws;
  const ObjectiveParts parts = objective(net, noise, targets, cfg, want_grads, ws);
  return {parts.total, std::move(ws.grads), parts.regime};
}

TrainResult train(EvlNet net, const Matrix& data, const TrainConfig& cfg, Rng& rng, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.rows() == 0) throw InvalidInput("train: empty dataset");
  if (data.cols() != net.data_dim) {
    throw InvalidInput("train: dataset dim " + std::to_string(data.cols()) + " != network data dim " +
                       std::to_string(net.data_dim));
  }
  if (net.noise_dim() != cfg.noise_dim) throw InvalidInput("train: network noise dim differs from config");

  RmspropState state = RmspropState::for_params(net.trunk, cfg.rms_decay, cfg.rms_epsilon);
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t d = net.data_dim;

  TrainResult result;
  Workspace ws;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    const double lr = lr_at_epoch(cfg, epoch);
    EpochStats stats{epoch, lr, 0.0, 0.0, 0.0};

    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t rows = std::min(cfg.batch_size, order.size() - b0);
      Matrix targets(rows, d);
      for (std::size_t i = 0; i < rows; ++i) {
        std::copy_n(data.row(order[b0 + i]).begin(), d, targets.row(i).begin());
      }
      const std::size_t noise_rows = cfg.guess_mode == GuessMode::shared ? cfg.guesses : rows * cfg.guesses;
      const Matrix noise = gaussian_matrix(rng, noise_rows, cfg.noise_dim);
      const ObjectiveParts parts = objective(net, noise, targets, cfg, true, ws);
      if (!std::isfinite(parts.total)) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch));
      }
      rmsprop_step(net.trunk, state, ws.grads, lr);

      const double w = static_cast<double>(rows) / static_cast<double>(order.size());
      stats.total += w * parts.total;
      stats.mse_min += w * parts.mse_min;
      stats.ce += w * parts.ce;
    }
    result.history.push_back(stats);
    if (on_epoch && !on_epoch(stats)) break;
  }
  result.net = std::move(net);
  return result;
}

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left the cumulative sum just under 1: take the last nonzero entry.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  throw InvalidInput("sample_categorical: all probabilities are zero");
}

void draw_from_batch(const GuessBatch& batch, Rng& rng, std::size_t m, Matrix& out, std::size_t first_row) {
  const std::size_t d = batch.coords.cols();
  if (out.cols() != d || first_row + m > out.rows()) throw InvalidInput("draw_from_batch: output too small");
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t pick = sample_categorical(batch.probs, rng);
    std::copy_n(batch.coords.row(pick).begin(), d, out.row(first_row + r).begin());
  }
}

Matrix rejection_sample(const EvlNet& net, Rng& rng, std::size_t n, std::size_t k, std::size_t draws_per_batch) {
  if (k == 0) throw InvalidInput("rejection_sample: K must be >= 1");
  if (draws_per_batch == 0) throw InvalidInput("rejection_sample: draws_per_batch must be >= 1");
  const std::size_t d = net.data_dim;
  Matrix samples(n, d);
  const std::size_t total_batches = (n + draws_per_batch - 1) / draws_per_batch;
  const std::size_t batches_per_chunk = std::max<std::size_t>(1, kRowsPerChunk / k);

  std::size_t emitted = 0;
  for (std::size_t b0 = 0; b0 < total_batches; b0 += batches_per_chunk) {
    const std::size_t nb = std::min(batches_per_chunk, total_batches - b0);
    const Matrix noise = gaussian_matrix(rng, nb * k, net.noise_dim());
    const Matrix out = forward(net.trunk, noise);
    GuessBatch batch{Matrix(k, d), Vector(k), {}};
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t i = 0; i < k; ++i) {
        std::copy_n(out.row(b * k + i).begin(), d, batch.coords.row(i).begin());
        batch.logits[i] = out(b * k + i, d);
      }
      batch.probs = softmax(batch.logits);
      const std::size_t m = std::min(draws_per_batch, n - emitted);
      draw_from_batch(batch, rng, m, samples, emitted);
      emitted += m;
    }
  }
  return samples;
}

}  // namespace evl
