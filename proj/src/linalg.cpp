#include "dldmd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "dldmd/errors.hpp"

namespace dldmd::linalg {

Eigen::Index Svd::rank(double rel_threshold) const {
  if (sigma.size() == 0 || sigma(0) <= 0.0) return 0;
  const double cut = rel_threshold * sigma(0);
  Eigen::Index r = 0;
  while (r < sigma.size() && sigma(r) > 0.0 && sigma(r) >= cut) ++r;
  return r;
}

Svd svd(const Matrix& a) {
  if (!a.allFinite()) throw NumericError("svd: input is not finite");
  Eigen::JacobiSVD<Matrix, Eigen::ColPivHouseholderQRPreconditioner> solver(
      a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success) throw NumericError("svd: did not converge");
  return {solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

Matrix pinv_truncated(const Matrix& a, double rel_threshold) {
  if (!(rel_threshold >= 0.0 && rel_threshold < 1.0))
    throw std::invalid_argument("pinv_truncated: threshold must lie in [0, 1)");
  const Svd s = svd(a);
  const Eigen::Index r = s.rank(rel_threshold);
  if (r == 0) return Matrix::Zero(a.cols(), a.rows());
  return s.W.leftCols(r) * s.sigma.head(r).cwiseInverse().asDiagonal() *
         s.U.leftCols(r).transpose();
}

CMatrix pinv_truncated(const CMatrix& a, double rel_threshold) {
  if (!(rel_threshold >= 0.0 && rel_threshold < 1.0))
    throw std::invalid_argument("pinv_truncated: threshold must lie in [0, 1)");
  if (!a.allFinite()) throw NumericError("pinv_truncated: input is not finite");
  Eigen::JacobiSVD<CMatrix, Eigen::ColPivHouseholderQRPreconditioner> solver(
      a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success) throw NumericError("svd: did not converge");
  const Vector& sigma = solver.singularValues();
  Eigen::Index r = 0;
  if (sigma.size() > 0 && sigma(0) > 0.0)
    while (r < sigma.size() && sigma(r) > 0.0 && sigma(r) >= rel_threshold * sigma(0)) ++r;
  if (r == 0) return CMatrix::Zero(a.cols(), a.rows());
  return solver.matrixV().leftCols(r) *
         sigma.head(r).cwiseInverse().cast<Complex>().asDiagonal() *
         solver.matrixU().leftCols(r).adjoint();
}

double condition_number(const CMatrix& a) {
  if (a.size() == 0) return 1.0;
  Eigen::JacobiSVD<CMatrix> solver(a);
  const Vector& s = solver.singularValues();
  const double smin = s(s.size() - 1);
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

Eig eig(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("eig: matrix is not square");
  if (!a.allFinite()) throw NumericError("eig: input is not finite");
  const Eigen::Index n = a.rows();
  Eig out;
  if (n == 0) return out;

  Eigen::EigenSolver<Matrix> solver(a, true);
  if (solver.info() != Eigen::Success) throw NumericError("eig: QR iteration did not converge");
  const CVector raw_values = solver.eigenvalues();
  const CMatrix raw_vectors = solver.eigenvectors();

  // Deterministic order: real part, then |imag|, then positive imag first.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    const Complex x = raw_values(i), y = raw_values(j);
    if (x.real() != y.real()) return x.real() < y.real();
    if (std::abs(x.imag()) != std::abs(y.imag()))
      return std::abs(x.imag()) < std::abs(y.imag());
    return x.imag() > y.imag();
  });
  out.values.resize(n);
  out.V.resize(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    out.values(c) = raw_values(order[static_cast<std::size_t>(c)]);
    out.V.col(c) = raw_vectors.col(order[static_cast<std::size_t>(c)]);
  }

  // Enforce exact conjugate pairs for near-pairs.
  const double scale = std::max(1.0, out.values.cwiseAbs().maxCoeff());
  for (Eigen::Index c = 0; c + 1 < n; ++c) {
    const Complex x = out.values(c), y = out.values(c + 1);
    if (x.imag() == 0.0) continue;
    if (std::abs(x - std::conj(y)) <= 1e-12 * scale) {
      if (x.imag() < 0.0) {
        out.values(c) = std::conj(x);
        out.V.col(c) = out.V.col(c).conjugate().eval();
      }
      out.values(c + 1) = std::conj(out.values(c));
      out.V.col(c + 1) = out.V.col(c).conjugate();
      ++c;
    }
  }
  out.cond_V = condition_number(out.V);
  return out;
}

namespace {

Complex int_pow(Complex base, int e) {
  Complex r(1.0, 0.0);
  while (e > 0) {
    if (e & 1) r *= base;
    base *= base;
    e >>= 1;
  }
  return r;
}

}  // namespace

CVector matpow_apply(const CMatrix& V, const CVector& t, const CVector& k, int j) {
  if (j < 0) throw std::invalid_argument("matpow_apply: negative power");
  if (V.cols() != t.size() || t.size() != k.size())
    throw std::invalid_argument("matpow_apply: dimension mismatch");
  CVector scaled = k;
  for (Eigen::Index l = 0; l < t.size(); ++l) scaled(l) *= int_pow(t(l), j);
  return V * scaled;
}

CVector lstsq(const CMatrix& a, const CVector& b) {
  if (a.rows() != b.size()) throw std::invalid_argument("lstsq: dimension mismatch");
  return a.completeOrthogonalDecomposition().solve(b);
}

Matrix solve(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || a.rows() != b.rows())
    throw std::invalid_argument("solve: dimension mismatch");
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) throw NumericError("solve: matrix is singular");
  Matrix x = lu.solve(b);
  if (!x.allFinite()) throw NumericError("solve: non-finite solution");
  return x;
}

}  // namespace dldmd::linalg
