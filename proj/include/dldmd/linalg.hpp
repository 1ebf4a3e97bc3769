#pragma once

#include <complex>

#include <Eigen/Dense>

namespace dldmd::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

inline constexpr double kDefaultRelThreshold = 1e-10;

/// Thin SVD, A = U * diag(sigma) * W^T, sigma non-negative and descending.
struct Svd {
  Matrix U;
  Vector sigma;
  Matrix W;

  /// Number of singular values above rel_threshold * sigma_max.
  Eigen::Index rank(double rel_threshold) const;
};

/// Throws NumericError on non-finite input or non-convergence.
Svd svd(const Matrix& a);

/// Moore-Penrose pseudo-inverse over singular values >= rel_threshold * sigma_max.
/// An all-zero matrix maps to the zero matrix of transposed shape.
Matrix pinv_truncated(const Matrix& a, double rel_threshold = kDefaultRelThreshold);
CMatrix pinv_truncated(const CMatrix& a, double rel_threshold = kDefaultRelThreshold);

/// Eigen-decomposition of a real square matrix, A * V = V * diag(values).
/// Eigenvalues are ordered by (real part, |imag part|) and each conjugate pair
/// is stored as (positive imag, negative imag) with exactly conjugated vectors.
struct Eig {
  CMatrix V;
  CVector values;
  double cond_V = 1.0;  // 2-norm condition number of V
};

Eig eig(const Matrix& a);

/// sigma_max / sigma_min; infinity for singular input.
double condition_number(const CMatrix& a);

/// V * diag(t)^j * k. j = 0 gives V * k.
CVector matpow_apply(const CMatrix& V, const CVector& t, const CVector& k, int j);

/// Minimum-norm least-squares solution of A x = b.
CVector lstsq(const CMatrix& a, const CVector& b);

/// Solves A X = B for square A; throws NumericError when A is singular.
Matrix solve(const Matrix& a, const Matrix& b);

}  // namespace dldmd::linalg
