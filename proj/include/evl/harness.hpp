#pragma once

// Experiment plumbing shared by the CLI, the suite runner and the acceptance
// checks: run configuration (JSON), dataset construction per seed, training
// and evaluation of one (model, dataset, seed) cell, results CSV, and the
// parallel suite driver.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evl/baselines.hpp"
#include "evl/datasets.hpp"
#include "evl/evl.hpp"
#include "evl/metrics.hpp"

namespace evl::harness {

enum class ModelKind { empirical, gmm, evl };

std::string to_string(ModelKind m);
ModelKind parse_model(const std::string& s);  // throws InvalidInput

struct DatasetSpec {
  std::string kind = "gaussians";  // gaussians | swissroll
  std::size_t dim = 1;             // forced to 3 for swissroll
  std::size_t modes = 1;           // 0 for swissroll
  std::size_t train_size = 50000;
  std::size_t test_size = 400000;
  double noise = 0.1;  // swissroll only
  double scale = 0.5;  // swissroll only
};

struct EvalSpec {
  std::size_t samples = 400000;
  std::size_t sample_guesses = 0;  // 0: same K as training
  std::size_t draws_per_batch = 32;
  std::size_t range_bins = 32;  // per axis, data-range grids (swissroll)
  FisherForm fisher_form = FisherForm::angle;
};

struct RunConfig {
  ModelKind model = ModelKind::evl;
  std::uint64_t seed = 1;
  DatasetSpec data;
  TrainConfig train;
  GmmOptions gmm;
  EvalSpec eval;
};

// JSON round trip. from_json starts from `base` and overrides only the keys
// present; unknown keys and wrong types raise InvalidInput.
nlohmann::json to_json(const RunConfig& cfg);
RunConfig from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const std::string& path, RunConfig base = {});

/// 16 hex digits of FNV-1a over the canonical (sorted-key, compact) JSON.
std::string config_hash(const RunConfig& cfg);

struct DatasetPair {
  Dataset train;
  Dataset test;
};

/// Train rows come from child stream 1 of the seed and test rows from
/// stream 2; mixture centers (stream 0) are shared.
DatasetPair make_datasets(const DatasetSpec& spec, std::uint64_t seed);
Dataset make_dataset(const DatasetSpec& spec, std::uint64_t seed, std::uint64_t stream, std::size_t n);

/// Fixed suite grid for Gaussian mixtures, test-set range grid otherwise.
std::vector<Axis> eval_axes(const DatasetSpec& spec, const Matrix& test, std::size_t range_bins);

// Model-side random streams of a run seed (datasets use streams 0-2).
Rng training_rng(std::uint64_t seed);
Rng sampling_rng(std::uint64_t seed);

/// Progress/warning sink; lines have no trailing newline.
using LogFn = std::function<void(const std::string&)>;

// Model fitting and sampling as used by run_cell, exposed for the CLI.
TrainResult fit_evl(const RunConfig& cfg, const Matrix& train, const LogFn& log = {});
GmmFit fit_gmm(const RunConfig& cfg, const Matrix& train);
Matrix sample_evl(const RunConfig& cfg, const EvlNet& net, std::size_t n);
Matrix sample_gmm(const RunConfig& cfg, const GmmModel& model, std::size_t n);

/// Header lines embedding the run config in checkpoints ("config <json>").
std::vector<std::string> provenance_header(const RunConfig& cfg);
/// The config embedded by provenance_header, if the file carries one.
std::optional<RunConfig> embedded_config(const std::string& path);

struct Scores {
  double kl = 0.0;
  double fisher = 0.0;
  double dropped_fraction = 0.0;
};

/// KL(test || model) and the Fisher distance on one grid.
Scores score(const HistogramGrid& test, const HistogramGrid& model, FisherForm form);

struct ResultRow {
  std::string model;
  std::string dataset;
  std::size_t dim = 0;
  std::size_t modes = 0;
  std::uint64_t seed = 0;
  std::size_t train_size = 0;
  double kl = 0.0;
  double fisher = 0.0;
  std::string binning;
  std::string config_hash;
  double seconds = 0.0;
  // Not part of the CSV.
  double dropped_fraction = 0.0;
  std::string error;

  bool ok() const noexcept { return error.empty(); }
};

/// Generates data, fits the model, draws eval samples and scores them.
/// Failures are reported in ResultRow::error (kl and fisher are NaN).
ResultRow run_cell(const RunConfig& cfg, const LogFn& log = {});

// Results CSV.
extern const char* const kCsvHeader;  // model,dataset,dim,modes,seed,train_size,kl,fisher,binning,config_hash,seconds
void write_csv_header(std::ostream& os);
void write_csv_row(std::ostream& os, const ResultRow& row);
/// Throws ParseError on a header mismatch or malformed row.
std::vector<ResultRow> read_csv(const std::string& path);

struct SuiteSpec {
  RunConfig base;
  std::vector<ModelKind> models{ModelKind::empirical, ModelKind::gmm, ModelKind::evl};
  bool gaussians = true;
  bool swissroll = true;
  std::vector<std::size_t> dims{1, 2, 3, 4};
  std::vector<std::size_t> modes{1, 2, 4, 10};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  /// Reduced grid: one seed, 10 epochs, dims {1, 2}, no swiss roll.
  static SuiteSpec ci();
};

/// Cells in deterministic order: Gaussian (dim, modes, seed, model) then
/// swiss roll (seed, model).
std::vector<RunConfig> expand(const SuiteSpec& spec);

/// Worker count from EVL_WORKERS, falling back to the hardware thread count.
std::size_t workers_from_env();

/// Runs every cell on a pool of `workers` threads. Rows are returned in cell
/// order whatever the completion order; on_row fires as each finishes.
std::vector<ResultRow> run_suite(const std::vector<RunConfig>& cells, std::size_t workers,
                                 const std::function<void(std::size_t, const ResultRow&)>& on_row = {},
                                 const LogFn& log = {});

struct CellSummary {
  std::string model;
  std::string dataset;
  std::size_t dim = 0;
  std::size_t modes = 0;
  std::size_t train_size = 0;
  std::size_t runs = 0;
  double kl_mean = 0.0;
  double kl_std = 0.0;  // sample std over seeds (0 for a single run)
  double fisher_mean = 0.0;
  double fisher_std = 0.0;
};

/// Groups successful rows by (model, dataset, dim, modes, train_size), in
/// order of first appearance.
std::vector<CellSummary> aggregate(const std::vector<ResultRow>& rows);
void write_summary_csv(std::ostream& os, const std::vector<CellSummary>& cells);

}  // namespace evl::harness
