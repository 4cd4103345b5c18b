#pragma once

#include "evl/matrix.hpp"
#include "evl/rng.hpp"

namespace evl {

/// Random (semi-)orthogonal matrix scaled by `gain`.
///
/// Entries are drawn as unit Gaussians and the vectors along the smaller
/// dimension are orthonormalized with two passes of modified Gram-Schmidt.
/// For rows <= cols the result satisfies W W^T = gain^2 I, otherwise
/// W^T W = gain^2 I.
Matrix orthogonal_init(std::size_t rows, std::size_t cols, double gain, Rng& rng);

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Throws NumericalError if a pivot is not strictly positive.
Matrix cholesky(const Matrix& spd);

/// log|det| of the matrix whose Cholesky factor is `chol`.
double cholesky_log_det(const Matrix& chol);

/// Solves L x = b in place for lower-triangular L.
void forward_substitute(const Matrix& lower, std::span<double> b);

}  // namespace evl
