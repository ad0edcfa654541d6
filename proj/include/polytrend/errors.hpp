#ifndef POLYTREND_ERRORS_HPP
#define POLYTREND_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace polytrend {

/// Malformed or inconsistent input data (CSV parse errors, invariant
/// violations).  Maps to CLI exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Model fitting failed in a way that cannot be reported as a flagged
/// result (rank deficiency, impossible configuration).  Exit code 3.
struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace polytrend

#endif  // POLYTREND_ERRORS_HPP
