#include "evl/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "evl/error.hpp"
#include "evl/rng.hpp"
#include "evl/textio.hpp"

namespace evl {

Matrix gaussian_mixture_centers(std::size_t dim, std::size_t n_modes, std::uint64_t seed) {
  if (dim < 1 || dim > 4) throw InvalidInput("gaussian mixture: dim must be in [1, 4]");
  if (n_modes < 1) throw InvalidInput("gaussian mixture: need at least one mode");
  Rng rng = Rng(seed).child(0);
  Matrix centers(n_modes, dim);
  for (auto& c : centers.data()) c = rng.uniform(-6.0, 6.0);
  return centers;
}

Dataset make_gaussian_mixture(std::size_t dim, std::size_t n_modes, std::uint64_t seed, std::size_t n,
                              std::uint64_t stream, std::vector<std::size_t>* modes) {
  const Matrix centers = gaussian_mixture_centers(dim, n_modes, seed);
  Rng rng = Rng(seed).child(stream);
  Dataset ds{Matrix(n, dim), "gaussians", seed, {}};
  if (modes) modes->assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t mode = rng.uniform_index(n_modes);
    if (modes) (*modes)[i] = mode;
    for (std::size_t j = 0; j < dim; ++j) ds.points(i, j) = centers(mode, j) + rng.gaussian();
  }
  ds.params = {{"dim", std::to_string(dim)}, {"modes", std::to_string(n_modes)}, {"stream", std::to_string(stream)}};
  return ds;
}

void swiss_roll_point(double u, double v, const double eps[3], double noise, double scale, double out[3]) {
  const double t = 1.5 * std::numbers::pi * (1.0 + 2.0 * u);
  out[0] = scale * (t * std::cos(t) + noise * eps[0]);
  out[1] = scale * (21.0 * v + noise * eps[1]);
  out[2] = scale * (t * std::sin(t) + noise * eps[2]);
}

Dataset make_swiss_roll(std::size_t n, double noise, double scale, std::uint64_t seed, std::uint64_t stream) {
  if (n < 1) throw InvalidInput("swiss roll: n must be >= 1");
  Rng rng = Rng(seed).child(stream);
  Dataset ds{Matrix(n, 3), "swissroll", seed, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    const double v = rng.uniform();
    const double eps[3] = {rng.gaussian(), rng.gaussian(), rng.gaussian()};
    swiss_roll_point(u, v, eps, noise, scale, ds.points.row(i).data());
  }
  ds.params = {{"noise", textio::format_double(noise)},
               {"scale", textio::format_double(scale)},
               {"stream", std::to_string(stream)}};
  return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << "# generator=" << (ds.generator.empty() ? "unknown" : ds.generator) << " seed=" << ds.seed;
  for (const auto& [k, v] : ds.params) os << ' ' << k << '=' << v;
  os << '\n' << ds.dim() << ' ' << ds.size() << '\n';
  std::string line;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    line.clear();
    const auto row = ds.points.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) line.push_back(' ');
      textio::append_double(line, row[j]);
    }
    line.push_back('\n');
    os << line;
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open dataset " + path);
  std::string line;
  Dataset ds;

  if (!std::getline(is, line)) throw ParseError(path, 1, "empty file");
  if (line.empty() || line[0] != '#') throw ParseError(path, 1, "expected '#' metadata line");
  for (auto tok : textio::split_ws(std::string_view(line).substr(1))) {
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos) throw ParseError(path, 1, "metadata token without '='");
    const std::string key(tok.substr(0, eq));
    const std::string value(tok.substr(eq + 1));
    if (key == "generator") {
      ds.generator = value;
    } else if (key == "seed") {
      const auto s = textio::parse_size(value);
      if (!s) throw ParseError(path, 1, "bad seed");
      ds.seed = *s;
    } else {
      ds.params[key] = value;
    }
  }

  if (!std::getline(is, line)) throw ParseError(path, 2, "missing '<dim> <count>' line");
  const auto header = textio::split_ws(line);
  if (header.size() != 2) throw ParseError(path, 2, "expected '<dim> <count>'");
  const auto dim = textio::parse_size(header[0]);
  const auto count = textio::parse_size(header[1]);
  if (!dim || !count || *dim == 0) throw ParseError(path, 2, "bad dim or count");

  std::vector<double> values;
  values.reserve(std::min<std::size_t>(*dim * *count, std::size_t{1} << 24));
  std::size_t line_no = 2;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto tokens = textio::split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.size() != *dim) {
      throw ParseError(path, line_no,
                       "row has " + std::to_string(tokens.size()) + " values, header says dim " + std::to_string(*dim));
    }
    for (auto tok : tokens) {
      const auto v = textio::parse_double(tok);
      if (!v || !std::isfinite(*v)) throw ParseError(path, line_no, "bad value '" + std::string(tok) + "'");
      values.push_back(*v);
    }
    ++rows;
  }
  if (rows != *count) {
    throw ParseError(path, line_no, "found " + std::to_string(rows) + " rows, header says " + std::to_string(*count));
  }
  ds.points = Matrix(rows, *dim, std::move(values));
  return ds;
}

}  // namespace evl
