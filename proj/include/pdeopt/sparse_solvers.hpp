#pragma once

#include <memory>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "pdeopt/csr.hpp"
#include "pdeopt/krylov.hpp"

namespace pdeopt {

/// Sparse Cholesky of an SPD matrix, the workhorse for the inner V-solves.
class SpdCholesky {
 public:
  explicit SpdCholesky(const CsrMatrix<double>& a) : n_(a.n_rows) {
    Eigen::SparseMatrix<double> m = a.to_eigen();
    llt_.compute(m);
    if (llt_.info() != Eigen::Success)
      throw NumericalError("SpdCholesky: factorization failed (matrix not SPD?)");
  }

  Eigen::Index size() const { return n_; }

  Vec solve(const Vec& b) const { return llt_.solve(b); }

  CVec solve(const CVec& b) const {
    Vec re = llt_.solve(Vec(b.real()));
    Vec im = llt_.solve(Vec(b.imag()));
    CVec out(b.size());
    out.real() = re;
    out.imag() = im;
    return out;
  }

 private:
  Eigen::Index n_;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt_;
};

/// Sparse LU with partial pivoting, real or complex field. Used for the
/// per-subdomain blocks and for near-exact factor solves at desk scale.
template <class T>
class SparseLuSolver {
 public:
  explicit SparseLuSolver(const CsrMatrix<T>& a) : n_(a.n_rows) {
    Eigen::SparseMatrix<T> m = a.to_eigen();
    lu_.analyzePattern(m);
    lu_.factorize(m);
    if (lu_.info() != Eigen::Success)
      throw NumericalError("SparseLuSolver: factorization failed (singular block?)");
  }

  Eigen::Index size() const { return n_; }

  Vector<T> solve(const Vector<T>& b) const { return lu_.solve(b); }

 private:
  Eigen::Index n_;
  Eigen::SparseLU<Eigen::SparseMatrix<T>> lu_;
};

}  // namespace pdeopt
