// evl: command-line front end for datasets, training, sampling, evaluation,
// the experiment suite and gradient checking.
//
// Exit codes: 0 success, 2 usage error, 1 runtime failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "evl/error.hpp"
#include "evl/harness.hpp"
#include "evl/textio.hpp"

namespace fs = std::filesystem;
using namespace evl;
using namespace evl::harness;

namespace {

// Thrown for argument combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void log_line(const std::string& s) { std::cerr << s << '\n'; }

// Flags that override RunConfig fields. Each is applied only when given.
struct Overrides {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string model, guess_mode, fisher_form;
  std::size_t epochs = 0, guesses = 0, batch_size = 0, gmm_k = 0, samples = 0, draws = 0, sample_guesses = 0;
  double lr = 0, loss_exponent = 0;
  bool ce_into_trunk = true;
  CLI::Option *o_seed{}, *o_model{}, *o_mode{}, *o_fisher{}, *o_epochs{}, *o_guesses{}, *o_batch{}, *o_k{},
      *o_samples{}, *o_draws{}, *o_sample_k{}, *o_lr{}, *o_q{}, *o_ce{};

  void add_to(CLI::App& app, bool with_model) {
    app.add_option("--config", config_path, "JSON run config; flags override its fields")->check(CLI::ExistingFile);
    o_seed = app.add_option("--seed", seed, "Run seed");
    if (with_model) o_model = app.add_option("--model", model, "evl | gmm | empirical");
    o_epochs = app.add_option("--epochs", epochs, "Training epochs");
    o_guesses = app.add_option("--guesses", guesses, "Guesses K per draw");
    o_mode = app.add_option("--guess-mode", guess_mode, "shared | independent");
    o_batch = app.add_option("--batch-size", batch_size, "Targets per optimizer step");
    o_lr = app.add_option("--lr", lr, "Initial learning rate");
    o_q = app.add_option("--loss-exponent", loss_exponent, "Per-guess loss exponent q");
    o_ce = app.add_option("--ce-into-trunk", ce_into_trunk, "Let the logit loss train hidden layers (true/false)");
    o_k = app.add_option("--gmm-k", gmm_k, "GMM components");
    o_samples = app.add_option("--samples", samples, "Model samples drawn for evaluation");
    o_draws = app.add_option("--draws-per-batch", draws, "Rejection-sampler picks per generated batch");
    o_sample_k = app.add_option("--sample-guesses", sample_guesses, "Guesses per batch when sampling (0: training K)");
    o_fisher = app.add_option("--fisher-form", fisher_form, "angle | paper_literal");
  }

  RunConfig apply(RunConfig c) const {
    if (!config_path.empty()) c = load_run_config(config_path, c);
    nlohmann::json j = nlohmann::json::object();
    if (o_seed && *o_seed) j["seed"] = seed;
    if (o_model && *o_model) j["model"] = model;
    if (*o_epochs) j["train"]["epochs"] = epochs;
    if (*o_guesses) j["train"]["guesses"] = guesses;
    if (*o_mode) j["train"]["guess_mode"] = guess_mode;
    if (*o_batch) j["train"]["batch_size"] = batch_size;
    if (*o_lr) j["train"]["lr0"] = lr;
    if (*o_q) j["train"]["loss_exponent"] = loss_exponent;
    if (*o_ce) j["train"]["ce_into_trunk"] = ce_into_trunk;
    if (*o_k) j["gmm"]["k"] = gmm_k;
    if (*o_samples) j["eval"]["samples"] = samples;
    if (*o_draws) j["eval"]["draws_per_batch"] = draws;
    if (*o_sample_k) j["eval"]["sample_guesses"] = sample_guesses;
    if (*o_fisher) j["eval"]["fisher_form"] = fisher_form;
    c = from_json(j, c);
    c.train.validate();
    return c;
  }
};

// Fills the data section of a config from a dataset file's metadata.
void describe_data(RunConfig& cfg, const Dataset& ds, bool is_train) {
  cfg.data.kind = ds.generator == "swissroll" ? "swissroll" : "gaussians";
  cfg.data.dim = ds.dim();
  if (auto it = ds.params.find("modes"); it != ds.params.end()) {
    if (auto m = textio::parse_size(it->second)) cfg.data.modes = *m;
  }
  if (is_train) cfg.data.train_size = ds.size();
  else cfg.data.test_size = ds.size();
}

bool is_gmm_file(const std::string& path) {
  std::ifstream is(path);
  std::string first;
  std::getline(is, first);
  return first.rfind("evl-gmm", 0) == 0;
}

void write_samples(const std::string& path, const Matrix& samples, const std::string& source, std::uint64_t seed) {
  Dataset ds{samples, "samples", seed, {{"source", source}}};
  save_dataset(path, ds);
}

// ---------------------------------------------------------------------------

struct GenData {
  std::string kind;
  std::size_t dim = 0, modes = 0, train = 0, test = 0;
  std::uint64_t seed = 1;
  double noise = 0.1, scale = 0.5;
  std::string out;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("gen-data", "Write train and test files for a synthetic dataset");
    c->add_option("kind", kind, "gaussians | swissroll")->required()->check(CLI::IsMember({"gaussians", "swissroll"}));
    c->add_option("--dim", dim, "Dimension (gaussians, 1-4)")->check(CLI::Range(1, 4));
    c->add_option("--modes", modes, "Mixture components (gaussians)")->check(CLI::PositiveNumber);
    c->add_option("--seed", seed, "Dataset seed");
    c->add_option("--train", train, "Training set size")->required()->check(CLI::PositiveNumber);
    c->add_option("--test", test, "Test set size")->required()->check(CLI::PositiveNumber);
    c->add_option("--noise", noise, "Swiss-roll noise");
    c->add_option("--scale", scale, "Swiss-roll scale");
    c->add_option("--out", out, "Output prefix; writes <prefix>_train.txt and <prefix>_test.txt");
    c->callback([this] { run(); });
  }

  void run() {
    DatasetSpec spec;
    spec.kind = kind;
    if (kind == "gaussians") {
      if (dim == 0 || modes == 0) throw UsageError("gen-data gaussians requires --dim and --modes");
      spec.dim = dim;
      spec.modes = modes;
    } else {
      spec.dim = 3;
      spec.modes = 0;
      spec.noise = noise;
      spec.scale = scale;
    }
    spec.train_size = train;
    spec.test_size = test;
    if (out.empty()) {
      out = kind == "gaussians" ? "gaussians_d" + std::to_string(dim) + "_n" + std::to_string(modes) : "swissroll";
      out += "_s" + std::to_string(seed);
    }
    const DatasetPair pair = make_datasets(spec, seed);
    save_dataset(out + "_train.txt", pair.train);
    save_dataset(out + "_test.txt", pair.test);
    std::cout << out << "_train.txt\n" << out << "_test.txt\n";
  }
};

struct Train {
  Overrides ov;
  std::string data, out, history;
  bool quiet = false;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("train", "Fit an EVL network or a GMM to a dataset file");
    ov.add_to(*c, true);
    c->add_option("--data", data, "Training dataset file")->required()->check(CLI::ExistingFile);
    c->add_option("--out", out, "Checkpoint path")->required();
    c->add_option("--history", history, "Per-epoch loss CSV (evl)");
    c->add_flag("--quiet", quiet, "No per-epoch log");
    c->callback([this] { run(); });
  }

  void run() {
    RunConfig cfg = ov.apply({});
    if (cfg.model == ModelKind::empirical) throw UsageError("train: the empirical model needs no training");
    const Dataset ds = load_dataset(data);
    describe_data(cfg, ds, true);

    if (cfg.model == ModelKind::gmm) {
      const GmmFit fit = fit_gmm(cfg, ds.points);
      save_gmm(out, fit.model, provenance_header(cfg));
      std::cerr << "gmm: " << fit.iterations << " iterations, mean log-likelihood " << fit.log_likelihood
                << (fit.converged ? "" : " (not converged)") << '\n';
      return;
    }
    const TrainResult r = fit_evl(cfg, ds.points, quiet ? LogFn{} : LogFn{log_line});
    save_checkpoint(out, r.net.trunk, provenance_header(cfg));
    if (!history.empty()) {
      std::ofstream os(history);
      if (!os) throw std::runtime_error("cannot open " + history);
      os << "epoch,lr,total,mse_min,ce\n";
      for (const auto& s : r.history) {
        os << s.epoch << ',' << textio::format_double(s.lr) << ',' << textio::format_double(s.total) << ','
           << textio::format_double(s.mse_min) << ',' << textio::format_double(s.ce) << '\n';
      }
    }
  }
};

struct Sample {
  Overrides ov;
  std::string checkpoint, out;
  std::size_t n = 0;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("sample", "Draw samples from a trained EVL or GMM checkpoint");
    ov.add_to(*c, false);
    c->add_option("--checkpoint", checkpoint, "Checkpoint from 'train'")->required()->check(CLI::ExistingFile);
    c->add_option("-n,--n", n, "Number of samples")->required();
    c->add_option("--out", out, "Sample file")->required();
    c->callback([this] { run(); });
  }

  void run() {
    const RunConfig cfg = ov.apply(embedded_config(checkpoint).value_or(RunConfig{}));
    Matrix samples;
    if (is_gmm_file(checkpoint)) {
      samples = sample_gmm(cfg, load_gmm(checkpoint), n);
    } else {
      samples = sample_evl(cfg, EvlNet::from_trunk(load_checkpoint(checkpoint)), n);
    }
    write_samples(out, samples, checkpoint, cfg.seed);
  }
};

struct Eval {
  Overrides ov;
  std::string test, checkpoint, train, samples_file, csv, binning = "auto", hist_out;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("eval", "Score a model against a test set and append a CSV row");
    ov.add_to(*c, false);
    c->add_option("--model", model_name, "evl | gmm | empirical | samples")
        ->required()
        ->check(CLI::IsMember({"evl", "gmm", "empirical", "samples"}));
    c->add_option("--test", test, "Test dataset file")->required()->check(CLI::ExistingFile);
    c->add_option("--checkpoint", checkpoint, "Model checkpoint (evl, gmm)")->check(CLI::ExistingFile);
    c->add_option("--train", train, "Training dataset (empirical)")->check(CLI::ExistingFile);
    c->add_option("--samples-file", samples_file, "Pre-drawn samples (samples)")->check(CLI::ExistingFile);
    c->add_option("--csv", csv, "Results CSV to append to");
    c->add_option("--binning", binning, "auto | suite | range")->check(CLI::IsMember({"auto", "suite", "range"}));
    c->add_option("--hist-out", hist_out, "Write <prefix>_test.hist and <prefix>_model.hist");
    c->callback([this] { run(); });
  }
  std::string model_name;

  void run() {
    const auto start = std::chrono::steady_clock::now();
    const bool needs_ckpt = model_name == "evl" || model_name == "gmm";
    if (needs_ckpt && checkpoint.empty()) throw UsageError("eval --model " + model_name + " requires --checkpoint");
    if (model_name == "empirical" && train.empty()) throw UsageError("eval --model empirical requires --train");
    if (model_name == "samples" && samples_file.empty()) throw UsageError("eval --model samples requires --samples-file");

    RunConfig base;
    if (needs_ckpt) base = embedded_config(checkpoint).value_or(RunConfig{});
    RunConfig cfg = ov.apply(base);
    const Dataset test_ds = load_dataset(test);
    const std::size_t train_size = cfg.data.train_size;
    describe_data(cfg, test_ds, false);
    cfg.data.train_size = train_size;

    std::vector<Axis> axes;
    const bool suite_grid =
        binning == "suite" || (binning == "auto" && test_ds.generator == "gaussians" && test_ds.dim() <= 4);
    if (suite_grid) {
      if (test_ds.dim() > 4) throw UsageError("eval: suite binning needs dim <= 4");
      axes = gaussian_suite_axes(test_ds.dim());
    } else {
      axes = data_range_axes(test_ds.points, cfg.eval.range_bins);
    }

    const HistogramGrid test_hist = histogram(test_ds.points, axes);
    HistogramGrid model_hist;
    std::string label = model_name;
    if (model_name == "evl") {
      model_hist = histogram(sample_evl(cfg, EvlNet::from_trunk(load_checkpoint(checkpoint)), cfg.eval.samples), axes);
    } else if (model_name == "gmm") {
      model_hist = histogram(sample_gmm(cfg, load_gmm(checkpoint), cfg.eval.samples), axes);
    } else if (model_name == "empirical") {
      const Dataset tr = load_dataset(train);
      cfg.data.train_size = tr.size();
      model_hist = empirical_model(tr.points, axes);
    } else {
      cfg.data.train_size = 0;
      model_hist = histogram(load_dataset(samples_file).points, axes);
    }
    if (model_name != "samples") cfg.model = parse_model(model_name);

    const Scores s = score(test_hist, model_hist, cfg.eval.fisher_form);
    if (s.dropped_fraction > 0.01) {
      std::cerr << "warning: " << 100.0 * s.dropped_fraction << "% of model samples fell outside the grid\n";
    }
    std::cout << "kl " << textio::format_double(s.kl) << "\nfisher " << textio::format_double(s.fisher) << '\n';

    if (!hist_out.empty()) {
      save_histogram(hist_out + "_test.hist", test_hist);
      save_histogram(hist_out + "_model.hist", model_hist);
    }
    if (!csv.empty()) {
      ResultRow row;
      row.model = label;
      row.dataset = cfg.data.kind;
      row.dim = test_ds.dim();
      row.modes = cfg.data.kind == "swissroll" ? 0 : cfg.data.modes;
      row.seed = test_ds.seed;
      row.train_size = cfg.data.train_size;
      row.kl = s.kl;
      row.fisher = s.fisher;
      row.binning = describe_axes(axes);
      row.config_hash = config_hash(cfg);
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const bool fresh = !fs::exists(csv) || fs::file_size(csv) == 0;
      std::ofstream os(csv, std::ios::app);
      if (!os) throw std::runtime_error("cannot open " + csv);
      if (fresh) write_csv_header(os);
      write_csv_row(os, row);
    }
  }
};

struct Suite {
  Overrides ov;
  bool ci = false, no_gaussians = false, no_swissroll = false;
  std::string csv = "results.csv", summary;
  std::size_t workers = 0;
  std::vector<std::string> models;
  std::vector<std::size_t> dims, modes;
  std::vector<std::uint64_t> seeds;
  std::size_t train_size = 0, test_size = 0;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("suite", "Run the model x dataset x seed grid and write results CSV");
    ov.add_to(*c, false);
    c->add_flag("--ci", ci, "Reduced grid: 1 seed, 10 epochs, dims 1-2, no swiss roll");
    c->add_option("--csv", csv, "Per-run results CSV");
    c->add_option("--summary", summary, "Mean/std per cell CSV (default <csv stem>.summary.csv)");
    c->add_option("--workers", workers, "Parallel cells (default: EVL_WORKERS or core count)");
    c->add_option("--models", models, "Subset of empirical gmm evl")->check(CLI::IsMember({"empirical", "gmm", "evl"}));
    c->add_option("--dims", dims, "Gaussian dims")->check(CLI::Range(1, 4));
    c->add_option("--modes", modes, "Gaussian mode counts")->check(CLI::PositiveNumber);
    c->add_option("--seeds", seeds, "Seeds");
    c->add_option("--train-size", train_size, "Training set size");
    c->add_option("--test-size", test_size, "Test set size");
    c->add_flag("--no-gaussians", no_gaussians, "Skip the Gaussian grid");
    c->add_flag("--no-swissroll", no_swissroll, "Skip the swiss roll");
    c->callback([this] { run(); });
  }

  void run() {
    SuiteSpec spec = ci ? SuiteSpec::ci() : SuiteSpec{};
    spec.base = ov.apply(spec.base);
    if (!models.empty()) {
      spec.models.clear();
      for (const auto& m : models) spec.models.push_back(parse_model(m));
    }
    if (!dims.empty()) spec.dims = dims;
    if (!modes.empty()) spec.modes = modes;
    if (!seeds.empty()) spec.seeds = seeds;
    if (train_size) spec.base.data.train_size = train_size;
    if (test_size) spec.base.data.test_size = test_size;
    if (no_gaussians) spec.gaussians = false;
    if (no_swissroll) spec.swissroll = false;
    if (workers == 0) workers = workers_from_env();
    if (summary.empty()) summary = (fs::path(csv).parent_path() / fs::path(csv).stem()).string() + ".summary.csv";

    const auto cells = expand(spec);
    std::cerr << "suite: " << cells.size() << " runs on " << workers << " worker(s)\n";
    std::ofstream os(csv);
    if (!os) throw std::runtime_error("cannot open " + csv);
    write_csv_header(os);

    // Rows are written in cell order as soon as every earlier row is done.
    std::vector<const ResultRow*> ready(cells.size(), nullptr);
    std::size_t written = 0, failures = 0;
    const auto rows = run_suite(
        cells, workers,
        [&](std::size_t i, const ResultRow& r) {
          ready[i] = &r;
          std::cerr << "[" << i + 1 << "/" << cells.size() << "] " << r.model << ' ' << r.dataset << " dim "
                    << r.dim << " modes " << r.modes << " seed " << r.seed << ": "
                    << (r.ok() ? "kl " + textio::format_double(r.kl) + " fisher " + textio::format_double(r.fisher)
                               : "FAILED " + r.error)
                    << " (" << r.seconds << " s)\n";
          while (written < ready.size() && ready[written]) write_csv_row(os, *ready[written++]);
          os.flush();
        },
        log_line);
    for (const auto& r : rows) failures += !r.ok();

    std::ofstream ss(summary);
    if (!ss) throw std::runtime_error("cannot open " + summary);
    write_summary_csv(ss, aggregate(rows));
    std::cerr << "wrote " << csv << " and " << summary << '\n';
    if (failures) throw std::runtime_error(std::to_string(failures) + " run(s) failed; see log");
  }
};

struct GradCheck {
  Overrides ov;
  std::size_t dim = 2, probes = 100;
  double tol = 1e-4;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("gradcheck", "Finite-difference check of the EVL objective gradient");
    ov.add_to(*c, false);
    c->add_option("--dim", dim, "Data dimension")->check(CLI::Range(1, 4));
    c->add_option("--probes", probes, "Parameters to probe")->check(CLI::PositiveNumber);
    c->add_option("--tol", tol, "Maximum accepted relative error");
    c->callback([this] { run(); });
  }

  void run() {
    const RunConfig cfg = ov.apply({});
    Rng rng = training_rng(cfg.seed);
    const EvlNet net = make_evl_net(dim, cfg.train, rng);
    const Matrix targets = make_gaussian_mixture(dim, 4, cfg.seed, cfg.train.batch_size).points;
    const std::size_t rows =
        cfg.train.guess_mode == GuessMode::shared ? cfg.train.guesses : cfg.train.guesses * cfg.train.batch_size;
    const Matrix noise = gaussian_matrix(rng, rows, cfg.train.noise_dim);
    const LossFn fn = [&](const MlpParams& p, bool g) {
      return batch_objective(EvlNet{p, dim}, noise, targets, cfg.train, g);
    };
    const GradientCheckResult r = gradient_check(net.trunk, fn, probes, rng);
    std::cout << "max_relative_error " << textio::format_double(r.max_relative_error) << "\nprobed " << r.probed
              << "\nskipped_at_kink " << r.skipped_at_kink << '\n';
    if (r.probed < probes) throw std::runtime_error("too few probes landed away from kinks");
    if (!(r.max_relative_error < tol)) throw std::runtime_error("gradient check failed");
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extreme-value loss generative toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  GenData gen;
  Train train;
  Sample sample;
  Eval eval;
  Suite suite;
  GradCheck grad;
  gen.add(app);
  train.add(app);
  sample.add(app);
  eval.add(app);
  suite.add(app);
  grad.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\nRun with --help for more information.\n";
    return 2;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
