#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include "evl/error.hpp"
#include "evl/harness.hpp"
#include "evl/textio.hpp"

namespace evl::harness {

const char* const kCsvHeader = "model,dataset,dim,modes,seed,train_size,kl,fisher,binning,config_hash,seconds";

void write_csv_header(std::ostream& os) { os << kCsvHeader << '\n'; }

void write_csv_row(std::ostream& os, const ResultRow& r) {
  char secs[32];
  std::snprintf(secs, sizeof secs, "%.3f", r.seconds);
  os << r.model << ',' << r.dataset << ',' << r.dim << ',' << r.modes << ',' << r.seed << ',' << r.train_size << ','
     << textio::format_double(r.kl) << ',' << textio::format_double(r.fisher) << ',' << r.binning << ','
     << r.config_hash << ',' << secs << '\n';
}

std::vector<ResultRow> read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open results " + path);
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) throw ParseError(path, 1, "header does not match results schema");

  std::vector<ResultRow> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    for (;;) {
      const auto comma = line.find(',', pos);
      f.push_back(line.substr(pos, comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (f.size() != 11) throw ParseError(path, line_no, "expected 11 fields, found " + std::to_string(f.size()));
    const auto dim = textio::parse_size(f[2]);
    const auto modes = textio::parse_size(f[3]);
    const auto seed = textio::parse_size(f[4]);
    const auto train = textio::parse_size(f[5]);
    const auto kl = textio::parse_double(f[6]);
    const auto fisher = textio::parse_double(f[7]);
    const auto secs = textio::parse_double(f[10]);
    if (!dim || !modes || !seed || !train || !kl || !fisher || !secs) throw ParseError(path, line_no, "bad field");
    ResultRow r;
    r.model = f[0];
    r.dataset = f[1];
    r.dim = *dim;
    r.modes = *modes;
    r.seed = *seed;
    r.train_size = *train;
    r.kl = *kl;
    r.fisher = *fisher;
    r.binning = f[8];
    r.config_hash = f[9];
    r.seconds = *secs;
    if (std::isnan(r.kl)) r.error = "failed run";
    rows.push_back(std::move(r));
  }
  return rows;
}

SuiteSpec SuiteSpec::ci() {
  SuiteSpec s;
  s.seeds = {1};
  s.dims = {1, 2};
  s.swissroll = false;
  s.base.train.epochs = 10;
  return s;
}

std::vector<RunConfig> expand(const SuiteSpec& spec) {
  std::vector<RunConfig> cells;
  auto add = [&](RunConfig cfg, std::uint64_t seed) {
    cfg.seed = seed;
    for (ModelKind m : spec.models) {
      cfg.model = m;
      cells.push_back(cfg);
    }
  };
  if (spec.gaussians) {
    for (std::size_t dim : spec.dims) {
      for (std::size_t modes : spec.modes) {
        for (std::uint64_t seed : spec.seeds) {
          RunConfig cfg = spec.base;
          cfg.data.kind = "gaussians";
          cfg.data.dim = dim;
          cfg.data.modes = modes;
          add(cfg, seed);
        }
      }
    }
  }
  if (spec.swissroll) {
    for (std::uint64_t seed : spec.seeds) {
      RunConfig cfg = spec.base;
      cfg.data.kind = "swissroll";
      cfg.data.dim = 3;
      cfg.data.modes = 0;
      add(cfg, seed);
    }
  }
  return cells;
}

std::size_t workers_from_env() {
  if (const char* env = std::getenv("EVL_WORKERS"); env && *env) {
    const auto v = textio::parse_size(env);
    if (!v || *v == 0) throw InvalidInput(std::string("EVL_WORKERS must be a positive integer, got '") + env + "'");
    return *v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<ResultRow> run_suite(const std::vector<RunConfig>& cells, std::size_t workers,
                                 const std::function<void(std::size_t, const ResultRow&)>& on_row, const LogFn& log) {
  std::vector<ResultRow> rows(cells.size());
  if (cells.empty()) return rows;
  workers = std::clamp<std::size_t>(workers, 1, cells.size());
  // Split the cores between workers so GEMM threads do not oversubscribe.
  const int omp_threads = std::max(1, omp_get_num_procs() / static_cast<int>(workers));

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  auto work = [&] {
    omp_set_num_threads(omp_threads);
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      LogFn cell_log;
      if (log) {
        cell_log = [&, i](const std::string& msg) {
          const std::lock_guard lock(mu);
          log("[" + std::to_string(i + 1) + "/" + std::to_string(cells.size()) + "] " + msg);
        };
      }
      ResultRow row = run_cell(cells[i], cell_log);
      const std::lock_guard lock(mu);
      rows[i] = std::move(row);
      if (on_row) on_row(i, rows[i]);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return rows;
}

std::vector<CellSummary> aggregate(const std::vector<ResultRow>& rows) {
  using Key = std::tuple<std::string, std::string, std::size_t, std::size_t, std::size_t>;
  std::map<Key, std::size_t> index;
  std::vector<CellSummary> cells;
  std::vector<std::vector<const ResultRow*>> members;
  for (const auto& r : rows) {
    if (!r.ok()) continue;
    const Key key{r.model, r.dataset, r.dim, r.modes, r.train_size};
    auto [it, inserted] = index.try_emplace(key, cells.size());
    if (inserted) {
      cells.push_back({r.model, r.dataset, r.dim, r.modes, r.train_size});
      members.emplace_back();
    }
    members[it->second].push_back(&r);
  }
  auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  };
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<double> kl, fi;
    for (const ResultRow* r : members[c]) {
      kl.push_back(r->kl);
      fi.push_back(r->fisher);
    }
    cells[c].runs = kl.size();
    mean_std(kl, cells[c].kl_mean, cells[c].kl_std);
    mean_std(fi, cells[c].fisher_mean, cells[c].fisher_std);
  }
  return cells;
}

void write_summary_csv(std::ostream& os, const std::vector<CellSummary>& cells) {
  os << "model,dataset,dim,modes,train_size,runs,kl_mean,kl_std,fisher_mean,fisher_std\n";
  for (const auto& c : cells) {
    os << c.model << ',' << c.dataset << ',' << c.dim << ',' << c.modes << ',' << c.train_size << ',' << c.runs << ','
       << textio::format_double(c.kl_mean) << ',' << textio::format_double(c.kl_std) << ','
       << textio::format_double(c.fisher_mean) << ',' << textio::format_double(c.fisher_std) << '\n';
  }
}

}  // namespace evl::harness
