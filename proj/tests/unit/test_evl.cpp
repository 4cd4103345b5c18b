#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "evl/error.hpp"
#include "evl/evl.hpp"

using evl::EvlNet;
using evl::GuessBatch;
using evl::Matrix;
using evl::TrainConfig;

namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.noise_dim = 4;
  cfg.hidden_width = 16;
  cfg.hidden_layers = 2;
  cfg.guesses = 8;
  cfg.batch_size = 5;
  return cfg;
}

GuessBatch fixed_batch(Matrix coords, evl::Vector logits) {
  GuessBatch b{std::move(coords), std::move(logits), {}};
  b.probs = evl::softmax(b.logits);
  return b;
}

EvlNet zero_net(std::size_t d, const TrainConfig& cfg) {
  evl::Rng rng(1);
  EvlNet net = evl::make_evl_net(d, cfg, rng);
  for (auto& layer : net.trunk.layers) {
    layer.weights.fill(0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  return net;
}

double mean_of(const Matrix& m, std::size_t col) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, col);
  return s / static_cast<double>(m.rows());
}

double std_of(const Matrix& m, std::size_t col) {
  const double mu = mean_of(m, col);
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) s += (m(i, col) - mu) * (m(i, col) - mu);
  return std::sqrt(s / static_cast<double>(m.rows()));
}

}  // namespace

TEST_CASE("softmax sums to one and handles large logits") {
  const auto p = evl::softmax(std::vector<double>{1000.0, 1000.0 + std::log(3.0)});
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(evl::softmax(std::vector<double>{}).empty());
}

TEST_CASE("generate_guesses") {
  const TrainConfig cfg = small_config();

  SUBCASE("zero-weight net: identical coords, uniform probs") {
    EvlNet net = zero_net(2, cfg);
    net.trunk.layers.back().bias = {0.5, -1.5, 0.0};
    evl::Rng rng(4);
    const GuessBatch b = evl::generate_guesses(net, rng, 16);
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(b.coords(i, 0) == 0.5);
      CHECK(b.coords(i, 1) == -1.5);
      CHECK(b.probs[i] == doctest::Approx(1.0 / 16));
    }
  }
  SUBCASE("K=1 gives probs [1]") {
    evl::Rng rng(5);
    const EvlNet net = evl::make_evl_net(3, cfg, rng);
    const GuessBatch b = evl::generate_guesses(net, rng, 1);
    REQUIRE(b.probs.size() == 1);
    CHECK(b.probs[0] == 1.0);
  }
  SUBCASE("default K=128 shape, probs normalized") {
    evl::Rng rng(6);
    const EvlNet net = evl::make_evl_net(2, TrainConfig{}, rng);
    const GuessBatch b = evl::generate_guesses(net, rng, 128);
    CHECK(b.coords.rows() == 128);
    CHECK(b.coords.cols() == 2);
    const double total = std::accumulate(b.probs.begin(), b.probs.end(), 0.0);
    CHECK(std::abs(total - 1.0) < 1e-10);
    CHECK(std::all_of(b.probs.begin(), b.probs.end(), [](double p) { return p >= 0.0; }));
  }
  SUBCASE("K=0 rejected") {
    evl::Rng rng(7);
    const EvlNet net = evl::make_evl_net(1, cfg, rng);
    CHECK_THROWS_AS(evl::generate_guesses(net, rng, 0), evl::InvalidInput);
  }
}

TEST_CASE("evl_loss examples") {
  SUBCASE("nearest guess wins") {
    const GuessBatch b = fixed_batch(Matrix{{0}, {1}, {2}}, {0, 0, 0});
    const auto t = evl::evl_loss(b, std::vector<double>{0.9}, 2.0);
    CHECK(t.winner == 1);
    CHECK(t.mse_min == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(t.ce == doctest::Approx(std::log(3.0)));
  }
  SUBCASE("ties go to the lowest index") {
    const GuessBatch b = fixed_batch(Matrix{{-1}, {1}}, {0, 0});
    CHECK(evl::evl_loss(b, std::vector<double>{0.0}, 2.0).winner == 0);
  }
  SUBCASE("uniform logits over 128 guesses: ce = ln 128") {
    Matrix coords(128, 1);
    for (std::size_t i = 0; i < 128; ++i) coords(i, 0) = static_cast<double>(i);
    const GuessBatch b = fixed_batch(coords, evl::Vector(128, 0.3));
    const auto t = evl::evl_loss(b, std::vector<double>{17.2}, 2.0);
    CHECK(t.winner == 17);
    CHECK(t.ce == doctest::Approx(4.8520).epsilon(1e-4));
  }
  SUBCASE("mean over dimensions, general q") {
    const GuessBatch b = fixed_batch(Matrix{{1, 3}}, {0});
    const auto t = evl::evl_loss(b, std::vector<double>{0, 0}, 3.0);
    CHECK(t.mse_min == doctest::Approx((1.0 + 27.0) / 2.0));
    CHECK(t.ce == doctest::Approx(0.0));
  }
  SUBCASE("bad input") {
    const GuessBatch b = fixed_batch(Matrix{{1, 3}}, {0});
    CHECK_THROWS_AS(evl::evl_loss(b, std::vector<double>{0}, 2.0), evl::InvalidInput);
    CHECK_THROWS_AS(evl::evl_loss(b, std::vector<double>{0, 0}, 0.0), evl::InvalidInput);
  }
}

TEST_CASE("evl_loss properties on random batches") {
  evl::Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng.uniform_index(20);
    const std::size_t d = 1 + rng.uniform_index(4);
    const GuessBatch b = fixed_batch(evl::gaussian_matrix(rng, k, d), evl::gaussian(rng, k));
    const evl::Vector target = evl::gaussian(rng, d);
    const auto t = evl::evl_loss(b, target, 2.0);

    double mean_loss = 0.0;
    for (std::size_t i = 0; i < k; ++i) mean_loss += evl::guess_loss(b.coords.row(i), target, 2.0) / double(k);
    CHECK(t.mse_min <= mean_loss + 1e-15);
    CHECK(t.ce >= 0.0);
    CHECK(std::abs(std::accumulate(b.probs.begin(), b.probs.end(), 0.0) - 1.0) < 1e-10);

    if (d == 1) {
      // Monotone transforms of |guess - target| keep the winner.
      CHECK(evl::evl_loss(b, target, 1.0).winner == t.winner);
      CHECK(evl::evl_loss(b, target, 3.5).winner == t.winner);
    }
  }
  // ce = 0 exactly when the winner holds all the probability.
  const GuessBatch sure = fixed_batch(Matrix{{0}, {5}}, {0.0, -1e4});
  CHECK(evl::evl_loss(sure, std::vector<double>{0.1}, 2.0).ce == doctest::Approx(0.0).epsilon(1e-300));
  CHECK(evl::evl_loss(sure, std::vector<double>{4.9}, 2.0).ce > 1.0);
}

TEST_CASE("match_shared examples") {
  CHECK(evl::match_shared(Matrix{{0.1}, {9.8}, {5}}, Matrix{{0}, {10}}, 2.0) == std::vector<std::size_t>{0, 1});

  evl::Rng rng(8);
  const Matrix coords = evl::gaussian_matrix(rng, 12, 3);
  const Matrix one = evl::gaussian_matrix(rng, 1, 3);
  const GuessBatch b = fixed_batch(coords, evl::Vector(12, 0.0));
  CHECK(evl::match_shared(coords, one, 2.0)[0] == evl::evl_loss(b, one.row(0), 2.0).winner);

  Matrix same(6, 3);
  for (std::size_t i = 0; i < 6; ++i) std::copy_n(one.row(0).begin(), 3, same.row(i).begin());
  const auto w = evl::match_shared(coords, same, 2.0);
  CHECK(std::all_of(w.begin(), w.end(), [&](std::size_t x) { return x == w[0]; }));

  CHECK_THROWS_AS(evl::match_shared(coords, Matrix(2, 2), 2.0), evl::InvalidInput);
}

TEST_CASE("batch_objective value matches evl_loss terms") {
  TrainConfig cfg = small_config();
  cfg.mse_weight = 0.7;
  cfg.ce_weight = 1.3;
  evl::Rng rng(31);
  const EvlNet net = evl::make_evl_net(2, cfg, rng);
  const Matrix targets = evl::gaussian_matrix(rng, 5, 2);

  SUBCASE("shared") {
    const Matrix noise = evl::gaussian_matrix(rng, cfg.guesses, cfg.noise_dim);
    const Matrix out = evl::forward(net.trunk, noise);
    GuessBatch b{Matrix(cfg.guesses, 2), evl::Vector(cfg.guesses), {}};
    for (std::size_t i = 0; i < cfg.guesses; ++i) {
      b.coords(i, 0) = out(i, 0);
      b.coords(i, 1) = out(i, 1);
      b.logits[i] = out(i, 2);
    }
    b.probs = evl::softmax(b.logits);
    double expect = 0.0;
    for (std::size_t t = 0; t < 5; ++t) {
      const auto terms = evl::evl_loss(b, targets.row(t), 2.0);
      expect += (0.7 * terms.mse_min + 1.3 * terms.ce) / 5.0;
    }
    CHECK(evl::batch_objective(net, noise, targets, cfg, false).value == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("independent") {
    cfg.guess_mode = evl::GuessMode::independent;
    const Matrix noise = evl::gaussian_matrix(rng, 5 * cfg.guesses, cfg.noise_dim);
    const Matrix out = evl::forward(net.trunk, noise);
    double expect = 0.0;
    for (std::size_t t = 0; t < 5; ++t) {
      GuessBatch b{Matrix(cfg.guesses, 2), evl::Vector(cfg.guesses), {}};
      for (std::size_t i = 0; i < cfg.guesses; ++i) {
        b.coords(i, 0) = out(t * cfg.guesses + i, 0);
        b.coords(i, 1) = out(t * cfg.guesses + i, 1);
        b.logits[i] = out(t * cfg.guesses + i, 2);
      }
      b.probs = evl::softmax(b.logits);
      const auto terms = evl::evl_loss(b, targets.row(t), 2.0);
      expect += (0.7 * terms.mse_min + 1.3 * terms.ce) / 5.0;
    }
    CHECK(evl::batch_objective(net, noise, targets, cfg, false).value == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("wrong noise shape") {
    CHECK_THROWS_AS(evl::batch_objective(net, Matrix(3, cfg.noise_dim), targets, cfg, false), evl::InvalidInput);
  }
}

TEST_CASE("batch_objective gradient matches finite differences") {
  for (auto mode : {evl::GuessMode::shared, evl::GuessMode::independent}) {
    for (double q : {2.0, 3.0}) {
      CAPTURE(static_cast<int>(mode));
      CAPTURE(q);
      TrainConfig cfg = small_config();
      cfg.guess_mode = mode;
      cfg.loss_exponent = q;
      evl::Rng rng(41);
      const EvlNet net = evl::make_evl_net(2, cfg, rng);
      const Matrix targets = evl::gaussian_matrix(rng, 5, 2);
      const std::size_t rows = mode == evl::GuessMode::shared ? cfg.guesses : 5 * cfg.guesses;
      const Matrix noise = evl::gaussian_matrix(rng, rows, cfg.noise_dim);
      const evl::LossFn fn = [&](const evl::MlpParams& p, bool g) {
        return evl::batch_objective(EvlNet{p, 2}, noise, targets, cfg, g);
      };
      const auto r = evl::gradient_check(net.trunk, fn, 150, rng);
      CHECK(r.probed >= 100);
      CHECK(r.max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("independent mode chunking agrees with a single pass") {
  // 4096 / 8 = 512 targets per chunk, so 600 targets span two chunks.
  TrainConfig cfg = small_config();
  cfg.guess_mode = evl::GuessMode::independent;
  evl::Rng rng(43);
  const EvlNet net = evl::make_evl_net(1, cfg, rng);
  const Matrix targets = evl::gaussian_matrix(rng, 600, 1);
  const Matrix noise = evl::gaussian_matrix(rng, 600 * cfg.guesses, cfg.noise_dim);
  const auto whole = evl::batch_objective(net, noise, targets, cfg, true);

  // Same objective assembled from two halves of 300 targets each.
  auto half = [&](std::size_t t0) {
    Matrix t(300, 1), z(300 * cfg.guesses, cfg.noise_dim);
    std::copy_n(targets.data().begin() + t0, 300, t.data().begin());
    std::copy_n(noise.data().begin() + t0 * cfg.guesses * cfg.noise_dim, z.size(), z.data().begin());
    return evl::batch_objective(net, z, t, cfg, true);
  };
  const auto a = half(0), b = half(300);
  CHECK(whole.value == doctest::Approx((a.value + b.value) / 2).epsilon(1e-12));
  const auto& gw = whole.grads.layers[0].weights;
  for (std::size_t i = 0; i < gw.size(); ++i) {
    const double avg = (a.grads.layers[0].weights.data()[i] + b.grads.layers[0].weights.data()[i]) / 2;
    CHECK(gw.data()[i] == doctest::Approx(avg).epsilon(1e-9).scale(1e-12));
  }
}

TEST_CASE("ce_into_trunk=false confines the logit gradient to the output layer") {
  TrainConfig cfg = small_config();
  cfg.mse_weight = 0.0;
  evl::Rng rng(51);
  const EvlNet net = evl::make_evl_net(2, cfg, rng);
  const Matrix targets = evl::gaussian_matrix(rng, 5, 2);
  const Matrix noise = evl::gaussian_matrix(rng, cfg.guesses, cfg.noise_dim);

  const auto flowing = evl::batch_objective(net, noise, targets, cfg, true);
  cfg.ce_into_trunk = false;
  const auto stopped = evl::batch_objective(net, noise, targets, cfg, true);

  CHECK(flowing.value == stopped.value);
  for (std::size_t l = 0; l + 1 < net.trunk.layers.size(); ++l) {
    const auto w = stopped.grads.layers[l].weights.data();
    CHECK(std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; }));
  }
  // The output layer's logit column is unaffected by the switch.
  const auto& a = flowing.grads.layers.back();
  const auto& b = stopped.grads.layers.back();
  for (std::size_t j = 0; j < a.weights.rows(); ++j) CHECK(a.weights(j, 2) == doctest::Approx(b.weights(j, 2)));
  CHECK(a.bias[2] == doctest::Approx(b.bias[2]));
}

TEST_CASE("rejection sampler: frozen fixture frequencies") {
  const GuessBatch b = fixed_batch(Matrix{{-1.0}, {2.0}}, {std::log(3.0), 0.0});
  CHECK(b.probs[0] == doctest::Approx(0.75).epsilon(1e-12));
  evl::Rng rng(61);
  std::size_t first = 0;
  const std::size_t draws = 100000;
  for (std::size_t i = 0; i < draws; ++i) first += evl::sample_categorical(b.probs, rng) == 0;
  const double f = static_cast<double>(first) / draws;
  CHECK(std::abs(f - 0.75) < 0.01);
  CHECK(std::abs((1.0 - f) - 0.25) < 0.01);

  Matrix out(draws, 1);
  evl::draw_from_batch(b, rng, draws, out);
  const auto at_first = std::count(out.data().begin(), out.data().end(), -1.0);
  CHECK(at_first + std::count(out.data().begin(), out.data().end(), 2.0) == static_cast<long>(draws));
  CHECK(std::abs(static_cast<double>(at_first) / draws - 0.75) < 0.01);
  CHECK_THROWS_AS(evl::draw_from_batch(b, rng, 2, out, draws - 1), evl::InvalidInput);
}

TEST_CASE("sample_categorical edge cases") {
  evl::Rng rng(62);
  const std::vector<double> one_hot{0.0, 1.0, 0.0};
  for (int i = 0; i < 100; ++i) CHECK(evl::sample_categorical(one_hot, rng) == 1);
  CHECK_THROWS_AS(evl::sample_categorical(std::vector<double>{0.0, 0.0}, rng), evl::InvalidInput);
}

TEST_CASE("rejection_sample with uniform logits equals the push-forward") {
  TrainConfig cfg = small_config();
  evl::Rng init(71);
  EvlNet net = evl::make_evl_net(1, cfg, init);
  auto& last = net.trunk.layers.back();
  for (std::size_t j = 0; j < last.weights.rows(); ++j) last.weights(j, 1) = 0.0;
  last.bias[1] = 0.0;

  evl::Rng a(72), b(73);
  const Matrix rs = evl::rejection_sample(net, a, 40000, 16, 4);
  const Matrix push = evl::generate_guesses(net, b, 40000).coords;
  CHECK(mean_of(rs, 0) == doctest::Approx(mean_of(push, 0)).epsilon(0.03).scale(0.02));
  CHECK(std_of(rs, 0) == doctest::Approx(std_of(push, 0)).epsilon(0.03));
}

TEST_CASE("rejection_sample shapes and determinism") {
  TrainConfig cfg = small_config();
  evl::Rng init(81);
  const EvlNet net = evl::make_evl_net(3, cfg, init);
  evl::Rng a(5);
  CHECK(evl::rejection_sample(net, a, 0, 8).rows() == 0);
  evl::Rng b(5), c(5);
  const Matrix x = evl::rejection_sample(net, b, 101, 8, 7);
  CHECK(x.rows() == 101);
  CHECK(x.cols() == 3);
  CHECK(x == evl::rejection_sample(net, c, 101, 8, 7));
  CHECK_THROWS_AS(evl::rejection_sample(net, a, 10, 0), evl::InvalidInput);
}

TEST_CASE("train: validation, determinism, progress") {
  TrainConfig cfg = small_config();
  cfg.epochs = 6;
  cfg.batch_size = 32;
  cfg.lr0 = 3e-3;
  evl::Rng data_rng(91);
  Matrix data(300, 1);
  for (std::size_t i = 0; i < data.rows(); ++i) data(i, 0) = (i % 2 ? 3.0 : -3.0) + 0.3 * data_rng.gaussian();

  evl::Rng r1(1), r2(1);
  const EvlNet n1 = evl::make_evl_net(1, cfg, r1);
  const EvlNet n2 = evl::make_evl_net(1, cfg, r2);
  const auto a = evl::train(n1, data, cfg, r1);
  const auto b = evl::train(n2, data, cfg, r2);
  CHECK(a.net.trunk == b.net.trunk);
  REQUIRE(a.history.size() == 6);
  CHECK(a.history.back().total < a.history.front().total);
  CHECK(a.history[1].lr == doctest::Approx(cfg.lr0 * 0.95));

  std::size_t calls = 0;
  evl::Rng r3(1);
  const auto stopped = evl::train(n1, data, cfg, r3, [&](const evl::EpochStats&) { return ++calls < 2; });
  CHECK(stopped.history.size() == 2);

  evl::Rng r4(2);
  CHECK_THROWS_AS(evl::train(n1, Matrix(0, 1), cfg, r4), evl::InvalidInput);
  CHECK_THROWS_AS(evl::train(n1, Matrix(10, 2), cfg, r4), evl::InvalidInput);
}
