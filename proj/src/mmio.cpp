#include "pdeopt/mmio.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace pdeopt {

namespace {

const char* kBanner = "%%MatrixMarket matrix coordinate";

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <class T>
void write_body(std::ostream& os, const CsrMatrix<T>& a, bool complex_field) {
  const bool sym = a.symmetric;
  std::size_t count = 0;
  for (int r = 0; r < a.n_rows; ++r)
    for (int k = a.row_offsets[r]; k < a.row_offsets[r + 1]; ++k)
      if (!sym || a.col_indices[k] <= r) ++count;

  os << kBanner << (complex_field ? " complex " : " real ") << (sym ? "symmetric" : "general")
     << "\n";
  os << a.n_rows << " " << a.n_cols << " " << count << "\n";
  for (int r = 0; r < a.n_rows; ++r) {
    for (int k = a.row_offsets[r]; k < a.row_offsets[r + 1]; ++k) {
      const int c = a.col_indices[k];
      if (sym && c > r) continue;
      os << (r + 1) << " " << (c + 1) << " ";
      if constexpr (std::is_same_v<T, Complex>) {
        os << fmt17(a.values[k].real()) << " " << fmt17(a.values[k].imag());
      } else {
        os << fmt17(a.values[k]);
      }
      os << "\n";
    }
  }
}

struct MmHeader {
  int rows = 0, cols = 0;
  long nnz = 0;
  bool symmetric = false;
  bool complex_field = false;
};

MmHeader read_header(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw NumericalError("matrix market: empty stream");
  std::istringstream hdr(line);
  std::string tag, obj, fmt, field, sym;
  hdr >> tag >> obj >> fmt >> field >> sym;
  if (tag != "%%MatrixMarket" || obj != "matrix" || fmt != "coordinate")
    throw NumericalError("matrix market: unsupported header '" + line + "'");
  MmHeader h;
  if (field == "real")
    h.complex_field = false;
  else if (field == "complex")
    h.complex_field = true;
  else
    throw NumericalError("matrix market: unsupported field '" + field + "'");
  if (sym == "general")
    h.symmetric = false;
  else if (sym == "symmetric")
    h.symmetric = true;
  else
    throw NumericalError("matrix market: unsupported symmetry '" + sym + "'");
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '%') continue;
    std::istringstream sz(line);
    if (!(sz >> h.rows >> h.cols >> h.nnz))
      throw NumericalError("matrix market: malformed size line");
    return h;
  }
  throw NumericalError("matrix market: missing size line");
}

template <class T>
CsrMatrix<T> read_body(std::istream& is, const MmHeader& h) {
  std::vector<Triplet<T>> trip;
  trip.reserve(static_cast<std::size_t>(h.nnz) * (h.symmetric ? 2 : 1));
  std::string line;
  long seen = 0;
  while (seen < h.nnz && std::getline(is, line)) {
    if (line.empty() || line[0] == '%') continue;
    std::istringstream ls(line);
    int r, c;
    if (!(ls >> r >> c)) throw NumericalError("matrix market: malformed entry line");
    T value;
    if constexpr (std::is_same_v<T, Complex>) {
      double re, im;
      if (!(ls >> re >> im)) throw NumericalError("matrix market: malformed complex entry");
      value = Complex(re, im);
    } else {
      double re;
      if (!(ls >> re)) throw NumericalError("matrix market: malformed real entry");
      value = re;
    }
    trip.push_back({r - 1, c - 1, value});
    if (h.symmetric && r != c) trip.push_back({c - 1, r - 1, value});
    ++seen;
  }
  if (seen != h.nnz) throw NumericalError("matrix market: truncated entry list");
  return CsrMatrix<T>::from_triplets(h.rows, h.cols, std::move(trip), h.symmetric);
}

template <class T>
CsrMatrix<T> read_any(std::istream& is, bool want_complex) {
  const MmHeader h = read_header(is);
  if (h.complex_field != want_complex)
    throw NumericalError("matrix market: field does not match the requested reader");
  return read_body<T>(is, h);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw NumericalError("cannot open for writing: " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw NumericalError("cannot open for reading: " + path);
  return is;
}

}  // namespace

void write_matrix_market(std::ostream& os, const CsrMatrix<double>& a) {
  write_body(os, a, false);
}
void write_matrix_market(std::ostream& os, const CsrMatrix<Complex>& a) {
  write_body(os, a, true);
}
void write_matrix_market(const std::string& path, const CsrMatrix<double>& a) {
  auto os = open_out(path);
  write_body(os, a, false);
}
void write_matrix_market(const std::string& path, const CsrMatrix<Complex>& a) {
  auto os = open_out(path);
  write_body(os, a, true);
}

CsrMatrix<double> read_matrix_market_real(std::istream& is) { return read_any<double>(is, false); }
CsrMatrix<Complex> read_matrix_market_complex(std::istream& is) {
  return read_any<Complex>(is, true);
}
CsrMatrix<double> read_matrix_market_real(const std::string& path) {
  auto is = open_in(path);
  return read_any<double>(is, false);
}
CsrMatrix<Complex> read_matrix_market_complex(const std::string& path) {
  auto is = open_in(path);
  return read_any<Complex>(is, true);
}

}  // namespace pdeopt
