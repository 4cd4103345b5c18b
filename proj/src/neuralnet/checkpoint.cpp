#include <fstream>
#include <sstream>

#include "evl/error.hpp"
#include "evl/mlp.hpp"
#include "evl/textio.hpp"

namespace evl {
namespace {

constexpr std::string_view kMagic = "evl-mlp-checkpoint 1";

void write_values(std::ostream& os, std::span<const double> values, std::size_t per_line) {
  std::string line;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i % per_line != 0) line.push_back(' ');
    textio::append_double(line, values[i]);
    if ((i + 1) % per_line == 0 || i + 1 == values.size()) {
      line.push_back('\n');
      os << line;
      line.clear();
    }
  }
}

class LineReader {
 public:
  LineReader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}

  // Next non-comment line; throws at end of file.
  std::string next() {
    std::string line;
    while (std::getline(is_, line)) {
      ++line_no_;
      if (!line.empty() && line[0] == '#') continue;
      return line;
    }
    fail("unexpected end of file");
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, line_no_, what); }

  void read_values(std::span<double> out, std::size_t per_line) {
    std::size_t filled = 0;
    while (filled < out.size()) {
      const std::string line = next();
      const auto tokens = textio::split_ws(line);
      if (tokens.size() != std::min(per_line, out.size() - filled)) fail("wrong number of values on line");
      for (auto tok : tokens) {
        const auto v = textio::parse_double(tok);
        if (!v) fail("bad number '" + std::string(tok) + "'");
        out[filled++] = *v;
      }
    }
  }

 private:
  std::istream& is_;
  std::string path_;
  std::size_t line_no_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const MlpParams& params, const std::vector<std::string>& header) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << kMagic << '\n';
  for (const auto& h : header) os << "# " << h << '\n';
  const auto dims = params.dims();
  os << "dims";
  for (auto d : dims) os << ' ' << d;
  os << '\n';
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const Layer& layer = params.layers[l];
    os << "weights " << l << '\n';
    write_values(os, layer.weights.data(), layer.weights.cols());
    os << "bias " << l << '\n';
    write_values(os, layer.bias, layer.bias.size());
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

MlpParams load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  LineReader reader(is, path);
  if (reader.next() != kMagic) reader.fail("not an evl-mlp checkpoint");

  const std::string dim_line = reader.next();
  const auto dim_tokens = textio::split_ws(dim_line);
  if (dim_tokens.size() < 3 || dim_tokens[0] != "dims") reader.fail("expected 'dims' line with at least two widths");
  std::vector<std::size_t> dims;
  for (std::size_t i = 1; i < dim_tokens.size(); ++i) {
    const auto v = textio::parse_size(dim_tokens[i]);
    if (!v || *v == 0) reader.fail("bad layer width");
    dims.push_back(*v);
  }

  MlpParams params;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer{Matrix(dims[l], dims[l + 1]), Vector(dims[l + 1])};
    if (reader.next() != "weights " + std::to_string(l)) reader.fail("expected 'weights " + std::to_string(l) + "'");
    reader.read_values(layer.weights.data(), dims[l + 1]);
    if (reader.next() != "bias " + std::to_string(l)) reader.fail("expected 'bias " + std::to_string(l) + "'");
    reader.read_values(layer.bias, dims[l + 1]);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

}  // namespace evl
