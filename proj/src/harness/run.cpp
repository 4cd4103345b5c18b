#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "evl/error.hpp"
#include "evl/harness.hpp"

namespace evl::harness {

Dataset make_dataset(const DatasetSpec& spec, std::uint64_t seed, std::uint64_t stream, std::size_t n) {
  if (spec.kind == "gaussians") return make_gaussian_mixture(spec.dim, spec.modes, seed, n, stream);
  if (spec.kind == "swissroll") return make_swiss_roll(n, spec.noise, spec.scale, seed, stream);
  throw InvalidInput("unknown dataset kind '" + spec.kind + "'");
}

DatasetPair make_datasets(const DatasetSpec& spec, std::uint64_t seed) {
  return {make_dataset(spec, seed, 1, spec.train_size), make_dataset(spec, seed, 2, spec.test_size)};
}

std::vector<Axis> eval_axes(const DatasetSpec& spec, const Matrix& test, std::size_t range_bins) {
  if (spec.kind == "gaussians") return gaussian_suite_axes(spec.dim);
  return data_range_axes(test, range_bins);
}

Rng training_rng(std::uint64_t seed) { return Rng(seed).child(3); }
Rng sampling_rng(std::uint64_t seed) { return Rng(seed).child(4); }

TrainResult fit_evl(const RunConfig& cfg, const Matrix& train, const LogFn& log) {
  Rng rng = training_rng(cfg.seed);
  EvlNet net = make_evl_net(train.cols(), cfg.train, rng);
  EpochCallback cb;
  if (log) {
    cb = [&](const EpochStats& s) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %zu lr %.3e loss %.5f mse_min %.5f ce %.5f", s.epoch, s.lr, s.total,
                    s.mse_min, s.ce);
      log(buf);
      return true;
    };
  }
  return evl::train(std::move(net), train, cfg.train, rng, cb);
}

GmmFit fit_gmm(const RunConfig& cfg, const Matrix& train) {
  Rng rng = training_rng(cfg.seed);
  return gmm_fit(train, cfg.gmm, rng);
}

Matrix sample_evl(const RunConfig& cfg, const EvlNet& net, std::size_t n) {
  Rng rng = sampling_rng(cfg.seed);
  const std::size_t k = cfg.eval.sample_guesses ? cfg.eval.sample_guesses : cfg.train.guesses;
  return rejection_sample(net, rng, n, k, cfg.eval.draws_per_batch);
}

Matrix sample_gmm(const RunConfig& cfg, const GmmModel& model, std::size_t n) {
  Rng rng = sampling_rng(cfg.seed);
  return gmm_sample(model, rng, n);
}

Scores score(const HistogramGrid& test, const HistogramGrid& model, FisherForm form) {
  return {kl_divergence(test, model), fisher_metric(test, model, form), model.dropped_fraction()};
}

ResultRow run_cell(const RunConfig& cfg, const LogFn& log) {
  const auto start = std::chrono::steady_clock::now();
  ResultRow row;
  row.model = to_string(cfg.model);
  row.dataset = cfg.data.kind;
  row.dim = cfg.data.kind == "swissroll" ? 3 : cfg.data.dim;
  row.modes = cfg.data.kind == "swissroll" ? 0 : cfg.data.modes;
  row.seed = cfg.seed;
  row.train_size = cfg.data.train_size;
  row.config_hash = config_hash(cfg);

  try {
    const DatasetPair data = make_datasets(cfg.data, cfg.seed);
    const auto axes = eval_axes(cfg.data, data.test.points, cfg.eval.range_bins);
    row.binning = describe_axes(axes);
    const HistogramGrid test_hist = histogram(data.test.points, axes);

    HistogramGrid model_hist;
    switch (cfg.model) {
      case ModelKind::empirical:
        model_hist = empirical_model(data.train.points, axes);
        break;
      case ModelKind::gmm: {
        const GmmFit fit = fit_gmm(cfg, data.train.points);
        model_hist = histogram(sample_gmm(cfg, fit.model, cfg.eval.samples), axes);
        break;
      }
      case ModelKind::evl: {
        const TrainResult fit = fit_evl(cfg, data.train.points, log);
        model_hist = histogram(sample_evl(cfg, fit.net, cfg.eval.samples), axes);
        break;
      }
    }
    const Scores s = score(test_hist, model_hist, cfg.eval.fisher_form);
    row.kl = s.kl;
    row.fisher = s.fisher;
    row.dropped_fraction = s.dropped_fraction;
    if (s.dropped_fraction > 0.01 && log) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "warning: %.2f%% of model samples fell outside the grid",
                    100.0 * s.dropped_fraction);
      log(buf);
    }
  } catch (const std::exception& e) {
    row.error = e.what();
    row.kl = row.fisher = std::numeric_limits<double>::quiet_NaN();
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

}  // namespace evl::harness
