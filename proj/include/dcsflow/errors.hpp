#pragma once

#include <stdexcept>
#include <string>

namespace dcsflow {

/// Bad inputs: invalid configs, out-of-domain positions, dimension mismatches.
/// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failures: solvers that cannot produce a usable result
/// (e.g. every selection trial failed). The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dcsflow
