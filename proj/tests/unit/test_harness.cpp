#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "evl/error.hpp"
#include "evl/harness.hpp"

using namespace evl::harness;
using nlohmann::json;

namespace {

RunConfig tiny(ModelKind model) {
  RunConfig c;
  c.model = model;
  c.data.dim = 2;
  c.data.modes = 2;
  c.data.train_size = 1500;
  c.data.test_size = 20000;
  c.train.epochs = 1;
  c.train.hidden_width = 24;
  c.train.hidden_layers = 2;
  c.train.guesses = 16;
  c.gmm.k = 3;
  c.eval.samples = 20000;
  c.eval.draws_per_batch = 4;
  return c;
}

}  // namespace

TEST_CASE("run config JSON round trip and overrides") {
  RunConfig c;
  c.model = ModelKind::gmm;
  c.seed = 77;
  c.data.kind = "swissroll";
  c.train.guess_mode = evl::GuessMode::independent;
  c.train.ce_into_trunk = false;
  c.train.lr0 = 1.0 / 3.0;
  c.eval.fisher_form = evl::FisherForm::paper_literal;
  const RunConfig back = from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(config_hash(back) == config_hash(c));

  const RunConfig partial = from_json(json::parse(R"({"train": {"epochs": 3}, "seed": 9})"), c);
  CHECK(partial.train.epochs == 3);
  CHECK(partial.seed == 9);
  CHECK(partial.model == ModelKind::gmm);
  CHECK(partial.train.lr0 == c.train.lr0);
}

TEST_CASE("run config rejects unknown keys and wrong types") {
  CHECK_THROWS_AS(from_json(json::parse(R"({"trian": {}})")), evl::InvalidInput);
  CHECK_THROWS_AS(from_json(json::parse(R"({"train": {"epoch": 3}})")), evl::InvalidInput);
  CHECK_THROWS_AS(from_json(json::parse(R"({"train": {"epochs": -3}})")), evl::InvalidInput);
  CHECK_THROWS_AS(from_json(json::parse(R"({"train": {"lr0": "fast"}})")), evl::InvalidInput);
  CHECK_THROWS_AS(from_json(json::parse(R"({"model": "gan"})")), evl::InvalidInput);
  CHECK_THROWS_AS(from_json(json::parse(R"({"data": {"kind": "moons"}})")), evl::InvalidInput);
  CHECK_THROWS_AS(from_json(json::parse(R"({"train": {"guess_mode": "both"}})")), evl::InvalidInput);
}

TEST_CASE("config hash is stable and field-sensitive") {
  const RunConfig a;
  RunConfig b;
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b.train.guesses = 127;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("embedded config survives a checkpoint") {
  const auto path = std::filesystem::temp_directory_path() / "evl_harness_ckpt.txt";
  RunConfig c = tiny(ModelKind::evl);
  c.seed = 31;
  evl::Rng rng(1);
  const evl::EvlNet net = evl::make_evl_net(2, c.train, rng);
  evl::save_checkpoint(path.string(), net.trunk, provenance_header(c));
  const auto back = embedded_config(path.string());
  REQUIRE(back.has_value());
  CHECK(config_hash(*back) == config_hash(c));
  CHECK(evl::load_checkpoint(path.string()) == net.trunk);
  std::filesystem::remove(path);
}

TEST_CASE("suite expansion") {
  const auto full = expand(SuiteSpec{});
  std::size_t gauss = 0, roll = 0;
  for (const auto& c : full) (c.data.kind == "gaussians" ? gauss : roll)++;
  CHECK(gauss == 240);
  CHECK(roll == 15);
  CHECK(full.front().model == ModelKind::empirical);
  CHECK(full[3].data.dim == 1);
  CHECK(full[3].seed == 2);

  const auto ci = expand(SuiteSpec::ci());
  CHECK(ci.size() == 2 * 4 * 1 * 3);
  for (const auto& c : ci) {
    CHECK(c.train.epochs == 10);
    CHECK(c.data.dim <= 2);
  }
}

TEST_CASE("results CSV round trip") {
  ResultRow r;
  r.model = "evl";
  r.dataset = "gaussians";
  r.dim = 2;
  r.modes = 4;
  r.seed = 3;
  r.train_size = 50000;
  r.kl = 0.012345678901234;
  r.fisher = 0.1;
  r.binning = "[-9:9]x64;[-9:9]x64";
  r.config_hash = "0123456789abcdef";
  r.seconds = 12.5;
  const auto path = std::filesystem::temp_directory_path() / "evl_results.csv";
  {
    std::ofstream os(path);
    write_csv_header(os);
    write_csv_row(os, r);
  }
  const auto rows = read_csv(path.string());
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].kl == r.kl);
  CHECK(rows[0].binning == r.binning);
  CHECK(rows[0].seconds == 12.5);

  std::ofstream(path) << "model,dataset\n";
  CHECK_THROWS_AS(read_csv(path.string()), evl::ParseError);
  std::ofstream(path) << kCsvHeader << "\nevl,gaussians,2\n";
  CHECK_THROWS_AS(read_csv(path.string()), evl::ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("aggregate matches recomputation") {
  std::vector<ResultRow> rows;
  const double kls[] = {0.1, 0.2, 0.6};
  for (int s = 0; s < 3; ++s) {
    ResultRow r;
    r.model = "gmm";
    r.dataset = "gaussians";
    r.dim = 1;
    r.modes = 2;
    r.seed = s + 1;
    r.kl = kls[s];
    r.fisher = 1.0;
    rows.push_back(r);
  }
  ResultRow failed = rows[0];
  failed.error = "boom";
  failed.kl = std::nan("");
  rows.push_back(failed);
  ResultRow other = rows[0];
  other.model = "evl";
  rows.push_back(other);

  const auto cells = aggregate(rows);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].model == "gmm");
  CHECK(cells[0].runs == 3);
  CHECK(cells[0].kl_mean == doctest::Approx(0.3));
  CHECK(cells[0].kl_std == doctest::Approx(std::sqrt((0.04 + 0.01 + 0.09) / 2)));
  CHECK(cells[0].fisher_std == 0.0);
  CHECK(cells[1].runs == 1);
  CHECK(cells[1].kl_std == 0.0);
}

TEST_CASE("workers from environment") {
  setenv("EVL_WORKERS", "3", 1);
  CHECK(workers_from_env() == 3);
  setenv("EVL_WORKERS", "zero", 1);
  CHECK_THROWS_AS(workers_from_env(), evl::InvalidInput);
  unsetenv("EVL_WORKERS");
  CHECK(workers_from_env() >= 1);
}

TEST_CASE("run_cell: empirical baseline on one Gaussian") {
  RunConfig c;
  c.model = ModelKind::empirical;
  c.data.dim = 1;
  c.data.modes = 1;
  const ResultRow r = run_cell(c);
  REQUIRE(r.ok());
  CHECK(r.kl < 0.01);
  CHECK(r.binning == "[-9:9]x128");
  CHECK(r.config_hash == config_hash(c));
}

TEST_CASE("run_cell reports failures instead of throwing") {
  RunConfig c = tiny(ModelKind::gmm);
  c.data.train_size = 2;  // fewer rows than components
  const ResultRow r = run_cell(c);
  CHECK_FALSE(r.ok());
  CHECK(std::isnan(r.kl));
}

TEST_CASE("run_suite is deterministic and ordered across worker counts") {
  std::vector<RunConfig> cells;
  for (auto m : {ModelKind::empirical, ModelKind::gmm, ModelKind::evl}) {
    for (std::uint64_t seed : {1, 2}) {
      RunConfig c = tiny(m);
      c.seed = seed;
      cells.push_back(c);
    }
  }
  cells.push_back(tiny(ModelKind::evl));
  cells.back().data.kind = "swissroll";
  cells.back().data.dim = 3;

  std::vector<std::size_t> order;
  const auto serial = run_suite(cells, 1, [&](std::size_t i, const ResultRow&) { order.push_back(i); });
  const auto parallel = run_suite(cells, 3);
  REQUIRE(serial.size() == cells.size());
  CHECK(order.size() == cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    CAPTURE(i);
    CHECK(serial[i].ok());
    CHECK(serial[i].model == to_string(cells[i].model));
    CHECK(serial[i].kl == parallel[i].kl);
    CHECK(serial[i].fisher == parallel[i].fisher);
    CHECK(serial[i].kl >= 0.0);
    CHECK(serial[i].fisher <= 3.14159266);
  }
  CHECK(serial.back().dim == 3);
  CHECK(serial.back().modes == 0);
}
