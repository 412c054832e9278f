#pragma once

#include <iosfwd>
#include <string>

#include "pdeopt/csr.hpp"

namespace pdeopt {

// Matrix Market coordinate format, real and complex fields. Matrices whose
// `symmetric` flag is set are written as `symmetric` with the lower triangle
// only and expanded again on read.

void write_matrix_market(std::ostream& os, const CsrMatrix<double>& a);
void write_matrix_market(std::ostream& os, const CsrMatrix<Complex>& a);
void write_matrix_market(const std::string& path, const CsrMatrix<double>& a);
void write_matrix_market(const std::string& path, const CsrMatrix<Complex>& a);

CsrMatrix<double> read_matrix_market_real(std::istream& is);
CsrMatrix<Complex> read_matrix_market_complex(std::istream& is);
CsrMatrix<double> read_matrix_market_real(const std::string& path);
CsrMatrix<Complex> read_matrix_market_complex(const std::string& path);

}  // namespace pdeopt
