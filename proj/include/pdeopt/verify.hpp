#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pdeopt {

/// One acceptance criterion outcome.
struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Runs the full acceptance/property suite (exact algebraic identities,
/// spectral bounds, oracle equivalence, monotone trends, determinism).
std::vector<CheckResult> run_acceptance_checks();

/// Prints one PASS/FAIL line per criterion; returns the number of failures.
int run_acceptance_report(std::ostream& os);

}  // namespace pdeopt
