#ifndef PAFT_ERROR_HPP
#define PAFT_ERROR_HPP

#include <stdexcept>
#include <string>

namespace paft {

/// Malformed or invalid input data (CSV rows, design files, dataset invariants).
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure could not produce a usable result
/// (non-convergent quadrature, degenerate likelihood, unstable resampling).
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed arguments outside an operation's precondition.
class usage_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace paft

#endif  // PAFT_ERROR_HPP
