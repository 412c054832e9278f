#pragma once

#include <Eigen/Dense>

#include "pdeopt/csr.hpp"

namespace pdeopt {

template <class T>
using DenseMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

using Mat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;

/// Direct solve A X = B by partial-pivot LU (real or complex field).
/// Intended as the reference route for property tests and small systems.
template <class T>
DenseMatrix<T> dense_solve(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
  if (a.rows() != a.cols()) throw ContractError("dense_solve: matrix not square");
  if (a.rows() != b.rows()) throw ContractError("dense_solve: rhs dimension mismatch");
  Eigen::PartialPivLU<DenseMatrix<T>> lu(a);
  const auto& u = lu.matrixLU();
  double umax = 0.0;
  for (Eigen::Index i = 0; i < u.rows(); ++i) umax = std::max(umax, std::abs(u(i, i)));
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    if (!(std::abs(u(i, i)) > umax * 1e-300))
      throw NumericalError("dense_solve: singular matrix (zero pivot)");
  }
  return lu.solve(b);
}

template <class T>
Vector<T> dense_solve(const DenseMatrix<T>& a, const Vector<T>& b) {
  DenseMatrix<T> rhs = b;
  DenseMatrix<T> x = dense_solve<T>(a, rhs);
  return Vector<T>(x.col(0));
}

inline void require_symmetric(const Mat& a, const char* who) {
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if (((a - a.transpose()).cwiseAbs().maxCoeff()) > 1e-10 * scale)
    throw ContractError(std::string(who) + ": matrix is not symmetric");
}

/// Eigenvalues of a symmetric matrix, sorted ascending. With a second SPD
/// matrix B this solves the pencil A x = lambda B x.
inline Vec dense_eigenvalues(const Mat& a) {
  require_symmetric(a, "dense_eigenvalues");
  Eigen::SelfAdjointEigenSolver<Mat> es(a, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("dense_eigenvalues: did not converge");
  return es.eigenvalues();
}

inline Vec dense_eigenvalues(const Mat& a, const Mat& b) {
  require_symmetric(a, "dense_eigenvalues");
  require_symmetric(b, "dense_eigenvalues(B)");
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(a, b, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  if (es.info() != Eigen::Success)
    throw NumericalError("dense_eigenvalues: generalized solve failed (is B SPD?)");
  return es.eigenvalues();
}

/// Spectral 2-norm condition number of a symmetric matrix.
inline double dense_condition_number(const Mat& a) {
  const Vec ev = dense_eigenvalues(a);
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    lo = std::min(lo, std::abs(ev[i]));
    hi = std::max(hi, std::abs(ev[i]));
  }
  if (lo == 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace pdeopt
