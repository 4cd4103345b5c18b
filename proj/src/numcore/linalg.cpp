#include "evl/linalg.hpp"

#include <cmath>
#include <string>

#include "evl/error.hpp"

namespace evl {
namespace {

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

// Removes from row i its components along rows 0..i-1 (two passes).
void project_out(std::vector<double>& v, std::size_t i, std::size_t len) {
  double* vi = v.data() + i * len;
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t j = 0; j < i; ++j) {
      const double* vj = v.data() + j * len;
      const double proj = dot(vi, vj, len);
      for (std::size_t t = 0; t < len; ++t) vi[t] -= proj * vj[t];
    }
  }
}

// Orthonormalizes the rows of a count x len row-major block in place.
void orthonormalize_rows(std::vector<double>& v, std::size_t count, std::size_t len, Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    double* vi = v.data() + i * len;
    project_out(v, i, len);
    double norm = std::sqrt(dot(vi, vi, len));
    // A Gaussian draw in the span of earlier rows has probability zero; redraw if it happens.
    while (norm < 1e-10) {
      for (std::size_t t = 0; t < len; ++t) vi[t] = rng.gaussian();
      project_out(v, i, len);
      norm = std::sqrt(dot(vi, vi, len));
    }
    for (std::size_t t = 0; t < len; ++t) vi[t] /= norm;
  }
}

}  // namespace

Matrix orthogonal_init(std::size_t rows, std::size_t cols, double gain, Rng& rng) {
  if (rows == 0 || cols == 0) throw InvalidInput("orthogonal_init: empty shape");
  Matrix w = gaussian_matrix(rng, rows, cols);
  if (rows <= cols) {
    std::vector<double> v(w.data().begin(), w.data().end());
    orthonormalize_rows(v, rows, cols, rng);
    for (std::size_t i = 0; i < v.size(); ++i) w.data()[i] = gain * v[i];
  } else {
    Matrix t = transpose(w);
    std::vector<double> v(t.data().begin(), t.data().end());
    orthonormalize_rows(v, cols, rows, rng);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) w(i, j) = gain * v[j * rows + i];
  }
  return w;
}

Matrix cholesky(const Matrix& spd) {
  const std::size_t n = spd.rows();
  if (spd.cols() != n) throw InvalidInput("cholesky: matrix not square");
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = spd(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0)) throw NumericalError("cholesky: non-positive pivot " + std::to_string(diag) + " at " + std::to_string(j));
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = spd(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

double cholesky_log_det(const Matrix& chol) {
  double s = 0.0;
  for (std::size_t i = 0; i < chol.rows(); ++i) s += std::log(chol(i, i));
  return 2.0 * s;
}

void forward_substitute(const Matrix& lower, std::span<double> b) {
  const std::size_t n = lower.rows();
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= lower(i, k) * b[k];
    b[i] = s / lower(i, i);
  }
}

}  // namespace evl
