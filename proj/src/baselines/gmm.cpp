#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "evl/baselines.hpp"
#include "evl/error.hpp"
#include "evl/linalg.hpp"
#include "evl/textio.hpp"

namespace evl {
namespace {

struct Component {
  Matrix chol;
  double log_norm;  // log weight - 0.5 (d log 2 pi + log det)
};

std::vector<Component> prepare(const GmmModel& m) {
  const double d = static_cast<double>(m.dim());
  std::vector<Component> comps;
  comps.reserve(m.k());
  for (std::size_t c = 0; c < m.k(); ++c) {
    Matrix l = cholesky(m.covariances[c]);
    const double log_det = cholesky_log_det(l);
    const double log_w = m.weights[c] > 0.0 ? std::log(m.weights[c]) : -std::numeric_limits<double>::infinity();
    comps.push_back({std::move(l), log_w - 0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det)});
  }
  return comps;
}

// Fills log_joint[c] = log(w_c N(x | mu_c, Sigma_c)); returns logsumexp.
double log_joint(const GmmModel& m, const std::vector<Component>& comps, std::span<const double> x,
                 std::vector<double>& scratch, std::vector<double>& log_joint) {
  const std::size_t d = m.dim();
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < m.k(); ++c) {
    for (std::size_t j = 0; j < d; ++j) scratch[j] = x[j] - m.means(c, j);
    forward_substitute(comps[c].chol, scratch);
    double maha = 0.0;
    for (std::size_t j = 0; j < d; ++j) maha += scratch[j] * scratch[j];
    log_joint[c] = comps[c].log_norm - 0.5 * maha;
    mx = std::max(mx, log_joint[c]);
  }
  double s = 0.0;
  for (double v : log_joint) s += std::exp(v - mx);
  return mx + std::log(s);
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

GmmModel initialize(const Matrix& data, const GmmOptions& opt, Rng& rng) {
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();
  const std::size_t k = opt.k;
  Matrix means(k, d);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> owner(n, 0);

  std::size_t pick = rng.uniform_index(n);
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (double v : nearest) total += v;
      if (total > 0.0) {
        double u = rng.uniform() * total;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          u -= nearest[i];
          if (u < 0.0) {
            pick = i;
            break;
          }
        }
      } else {
        pick = rng.uniform_index(n);
      }
    }
    std::copy_n(data.row(pick).begin(), d, means.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) {
      const double dist = sq_dist(data.row(i), means.row(c));
      if (dist < nearest[i]) {
        nearest[i] = dist;
        owner[i] = c;
      }
    }
  }

  Matrix pooled(d, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data.row(i);
    const auto mu = means.row(owner[i]);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) pooled(a, b) += (x[a] - mu[a]) * (x[b] - mu[b]);
  }
  for (auto& v : pooled.data()) v /= static_cast<double>(n);
  for (std::size_t a = 0; a < d; ++a) pooled(a, a) += opt.reg;

  return GmmModel{Vector(k, 1.0 / static_cast<double>(k)), std::move(means), std::vector<Matrix>(k, pooled)};
}

}  // namespace

double gmm_mean_log_likelihood(const GmmModel& model, const Matrix& data) {
  const auto comps = prepare(model);
  std::vector<double> scratch(model.dim()), lj(model.k());
  double total = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) total += log_joint(model, comps, data.row(i), scratch, lj);
  return total / static_cast<double>(data.rows());
}

GmmFit gmm_fit(const Matrix& data, const GmmOptions& opt, Rng& rng) {
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();
  const std::size_t k = opt.k;
  if (k < 1) throw InvalidInput("gmm_fit: k must be >= 1");
  if (n < k) throw InvalidInput("gmm_fit: need at least k data points");
  if (d < 1) throw InvalidInput("gmm_fit: zero-dimensional data");

  GmmFit fit;
  fit.model = initialize(data, opt, rng);
  Matrix resp(n, k);
  std::vector<double> scratch(d), lj(k);
  double previous = -std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < opt.max_iter; ++iter) {
    // E-step
    const auto comps = prepare(fit.model);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double lse = log_joint(fit.model, comps, data.row(i), scratch, lj);
      total += lse;
      for (std::size_t c = 0; c < k; ++c) resp(i, c) = std::exp(lj[c] - lse);
    }
    const double mean_ll = total / static_cast<double>(n);
    fit.history.push_back(mean_ll);

    // M-step
    GmmModel& m = fit.model;
    for (std::size_t c = 0; c < k; ++c) {
      double nk = 0.0;
      for (std::size_t i = 0; i < n; ++i) nk += resp(i, c);
      nk += 10.0 * std::numeric_limits<double>::epsilon();
      m.weights[c] = nk / static_cast<double>(n);

      auto mu = m.means.row(c);
      std::fill(mu.begin(), mu.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double r = resp(i, c);
        const auto x = data.row(i);
        for (std::size_t j = 0; j < d; ++j) mu[j] += r * x[j];
      }
      for (auto& v : mu) v /= nk;

      Matrix& cov = m.covariances[c];
      cov.fill(0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double r = resp(i, c);
        const auto x = data.row(i);
        for (std::size_t a = 0; a < d; ++a) {
          const double da = r * (x[a] - mu[a]);
          for (std::size_t b = 0; b <= a; ++b) cov(a, b) += da * (x[b] - mu[b]);
        }
      }
      for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = 0; b <= a; ++b) {
          cov(a, b) /= nk;
          cov(b, a) = cov(a, b);
        }
        cov(a, a) += opt.reg;
      }
    }
    double wsum = 0.0;
    for (double w : m.weights) wsum += w;
    for (auto& w : m.weights) w /= wsum;

    fit.iterations = iter + 1;
    if (std::abs(mean_ll - previous) < opt.tol) {
      fit.converged = true;
      break;
    }
    previous = mean_ll;
  }
  fit.log_likelihood = gmm_mean_log_likelihood(fit.model, data);
  return fit;
}

Matrix gmm_sample(const GmmModel& model, Rng& rng, std::size_t n) {
  const std::size_t d = model.dim();
  std::vector<Matrix> chol;
  chol.reserve(model.k());
  for (const auto& cov : model.covariances) chol.push_back(cholesky(cov));
  Matrix out(n, d);
  std::vector<double> z(d);
  for (std::size_t i = 0; i < n; ++i) {
    double u = rng.uniform();
    std::size_t c = model.k() - 1;
    for (std::size_t j = 0; j < model.k(); ++j) {
      u -= model.weights[j];
      if (u < 0.0) {
        c = j;
        break;
      }
    }
    while (model.weights[c] <= 0.0 && c > 0) --c;
    for (auto& v : z) v = rng.gaussian();
    auto row = out.row(i);
    for (std::size_t a = 0; a < d; ++a) {
      double s = model.means(c, a);
      for (std::size_t b = 0; b <= a; ++b) s += chol[c](a, b) * z[b];
      row[a] = s;
    }
  }
  return out;
}

void save_gmm(const std::string& path, const GmmModel& model, const std::vector<std::string>& header) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << "evl-gmm 1\n";
  for (const auto& h : header) os << "# " << h << '\n';
  os << "k " << model.k() << " dim " << model.dim() << '\n';
  auto write_row = [&](std::string_view tag, std::span<const double> values) {
    std::string line(tag);
    for (double v : values) {
      line.push_back(' ');
      textio::append_double(line, v);
    }
    os << line << '\n';
  };
  write_row("weights", model.weights);
  for (std::size_t c = 0; c < model.k(); ++c) {
    write_row("mean", model.means.row(c));
    for (std::size_t a = 0; a < model.dim(); ++a) write_row("cov", model.covariances[c].row(a));
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

GmmModel load_gmm(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open GMM file " + path);
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() -> std::string {
    while (std::getline(is, line)) {
      ++line_no;
      if (!line.empty() && line[0] == '#') continue;
      return line;
    }
    throw ParseError(path, line_no, "unexpected end of file");
  };
  auto read_row = [&](std::string_view tag, std::size_t count, std::span<double> out) {
    const std::string l = next();
    const auto tokens = textio::split_ws(l);
    if (tokens.size() != count + 1 || tokens[0] != tag) {
      throw ParseError(path, line_no, "expected '" + std::string(tag) + "' with " + std::to_string(count) + " values");
    }
    for (std::size_t i = 0; i < count; ++i) {
      const auto v = textio::parse_double(tokens[i + 1]);
      if (!v) throw ParseError(path, line_no, "bad number");
      out[i] = *v;
    }
  };

  if (next() != "evl-gmm 1") throw ParseError(path, line_no, "not an evl-gmm file");
  const std::string hdr = next();
  const auto t = textio::split_ws(hdr);
  if (t.size() != 4 || t[0] != "k" || t[2] != "dim") throw ParseError(path, line_no, "expected 'k <k> dim <d>'");
  const auto k = textio::parse_size(t[1]);
  const auto d = textio::parse_size(t[3]);
  if (!k || !d || *k == 0 || *d == 0) throw ParseError(path, line_no, "bad k or dim");

  GmmModel m{Vector(*k), Matrix(*k, *d), std::vector<Matrix>(*k, Matrix(*d, *d))};
  read_row("weights", *k, m.weights);
  for (std::size_t c = 0; c < *k; ++c) {
    read_row("mean", *d, m.means.row(c));
    for (std::size_t a = 0; a < *d; ++a) read_row("cov", *d, m.covariances[c].row(a));
  }
  return m;
}

HistogramGrid empirical_model(const Matrix& train, std::span<const Axis> axes) { return histogram(train, axes); }

}  // namespace evl
