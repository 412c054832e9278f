#pragma once

#include <algorithm>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace pdeopt {

using Real = double;
using Complex = std::complex<double>;

template <class T>
using Vector = Eigen::Vector<T, Eigen::Dynamic>;

using Vec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;

inline constexpr double kPi = 3.14159265358979323846;

/// Thrown when a caller violates an operation's contract (bad dimensions,
/// non-symmetric input where symmetry is required, out-of-domain arguments).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical procedure cannot continue (singular pivot,
/// NaN/Inf breakdown, singular coarse problem).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
struct Triplet {
  int row;
  int col;
  T value;
};

/// Compressed sparse row matrix over a real or complex field.
/// Column indices are strictly increasing within each row; duplicate
/// triplets are summed during construction.
template <class T>
class CsrMatrix {
 public:
  int n_rows = 0;
  int n_cols = 0;
  std::vector<int> row_offsets;  // size n_rows + 1
  std::vector<int> col_indices;
  std::vector<T> values;
  bool symmetric = false;  // metadata flag; see check_symmetric()

  CsrMatrix() = default;

  static CsrMatrix from_triplets(int rows, int cols, std::vector<Triplet<T>> trip,
                                 bool symmetric_flag = false) {
    if (rows < 0 || cols < 0) throw ContractError("CsrMatrix: negative dimension");
    for (const auto& t : trip) {
      if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
        throw ContractError("CsrMatrix: triplet index out of range");
    }
    std::sort(trip.begin(), trip.end(), [](const Triplet<T>& a, const Triplet<T>& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    CsrMatrix m;
    m.n_rows = rows;
    m.n_cols = cols;
    m.symmetric = symmetric_flag;
    m.row_offsets.assign(rows + 1, 0);
    m.col_indices.reserve(trip.size());
    m.values.reserve(trip.size());
    std::size_t k = 0;
    for (int r = 0; r < rows; ++r) {
      while (k < trip.size() && trip[k].row == r) {
        const int c = trip[k].col;
        T v = trip[k].value;
        ++k;
        while (k < trip.size() && trip[k].row == r && trip[k].col == c) {
          v += trip[k].value;
          ++k;
        }
        m.col_indices.push_back(c);
        m.values.push_back(v);
      }
      m.row_offsets[r + 1] = static_cast<int>(m.col_indices.size());
    }
    return m;
  }

  static CsrMatrix identity(int n) {
    std::vector<Triplet<T>> trip;
    trip.reserve(n);
    for (int i = 0; i < n; ++i) trip.push_back({i, i, T(1)});
    return from_triplets(n, n, std::move(trip), true);
  }

  int nnz() const { return static_cast<int>(values.size()); }

  T coeff(int r, int c) const {
    for (int k = row_offsets[r]; k < row_offsets[r + 1]; ++k)
      if (col_indices[k] == c) return values[k];
    return T(0);
  }

  /// y = A x.  The vector scalar may be wider than the matrix scalar
  /// (a real matrix applied to a complex vector).
  template <class S>
  void apply(const Vector<S>& x, Vector<S>& y) const {
    if (x.size() != n_cols) throw ContractError("CsrMatrix::apply: dimension mismatch");
    y.resize(n_rows);
    for (int r = 0; r < n_rows; ++r) {
      S acc{};
      for (int k = row_offsets[r]; k < row_offsets[r + 1]; ++k)
        acc += S(values[k]) * x[col_indices[k]];
      y[r] = acc;
    }
  }

  template <class S>
  Vector<S> operator*(const Vector<S>& x) const {
    Vector<S> y;
    apply(x, y);
    return y;
  }

  CsrMatrix transposed() const {
    std::vector<Triplet<T>> trip;
    trip.reserve(values.size());
    for (int r = 0; r < n_rows; ++r)
      for (int k = row_offsets[r]; k < row_offsets[r + 1]; ++k)
        trip.push_back({col_indices[k], r, values[k]});
    return from_triplets(n_cols, n_rows, std::move(trip), symmetric);
  }

  /// Verifies A = A^T exactly (structure and values). Matrices carrying the
  /// `symmetric` flag are expected to pass this bit-for-bit.
  bool check_symmetric(double tol = 0.0) const {
    if (n_rows != n_cols) return false;
    const CsrMatrix t = transposed();
    if (t.row_offsets != row_offsets || t.col_indices != col_indices) return false;
    for (std::size_t k = 0; k < values.size(); ++k)
      if (std::abs(values[k] - t.values[k]) > tol) return false;
    return true;
  }

  Eigen::SparseMatrix<T> to_eigen() const {
    Eigen::SparseMatrix<T> out(n_rows, n_cols);
    std::vector<Eigen::Triplet<T>> trip;
    trip.reserve(values.size());
    for (int r = 0; r < n_rows; ++r)
      for (int k = row_offsets[r]; k < row_offsets[r + 1]; ++k)
        trip.emplace_back(r, col_indices[k], values[k]);
    out.setFromTriplets(trip.begin(), trip.end());
    out.makeCompressed();
    return out;
  }

  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> to_dense() const {
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> d =
        Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>::Zero(n_rows, n_cols);
    for (int r = 0; r < n_rows; ++r)
      for (int k = row_offsets[r]; k < row_offsets[r + 1]; ++k)
        d(r, col_indices[k]) = values[k];
    return d;
  }
};

/// alpha*A + beta*B on the union sparsity pattern. Used to assemble the
/// complex combinations K + z V from the real operators.
template <class T, class TA, class TB>
CsrMatrix<T> linear_combination(T alpha, const CsrMatrix<TA>& a, T beta, const CsrMatrix<TB>& b) {
  if (a.n_rows != b.n_rows || a.n_cols != b.n_cols)
    throw ContractError("linear_combination: shape mismatch");
  std::vector<Triplet<T>> trip;
  trip.reserve(a.values.size() + b.values.size());
  for (int r = 0; r < a.n_rows; ++r)
    for (int k = a.row_offsets[r]; k < a.row_offsets[r + 1]; ++k)
      trip.push_back({r, a.col_indices[k], alpha * T(a.values[k])});
  for (int r = 0; r < b.n_rows; ++r)
    for (int k = b.row_offsets[r]; k < b.row_offsets[r + 1]; ++k)
      trip.push_back({r, b.col_indices[k], beta * T(b.values[k])});
  auto out = CsrMatrix<T>::from_triplets(a.n_rows, a.n_cols, std::move(trip),
                                         a.symmetric && b.symmetric);
  return out;
}

template <class T>
CsrMatrix<Complex> to_complex(const CsrMatrix<T>& a) {
  CsrMatrix<Complex> out;
  out.n_rows = a.n_rows;
  out.n_cols = a.n_cols;
  out.row_offsets = a.row_offsets;
  out.col_indices = a.col_indices;
  out.symmetric = a.symmetric;
  out.values.assign(a.values.begin(), a.values.end());
  return out;
}

}  // namespace pdeopt
