#pragma once

#include <stdexcept>
#include <string>

namespace jointnet {

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed input files. Carries the offending row when there is one.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what, long row = -1)
      : std::runtime_error(row >= 0 ? "row " + std::to_string(row) + ": " + what : what),
        row(row) {}
  long row;
};

struct NumericalDegeneracy : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a ROC area is requested for labels of a single class.
struct UndefinedAur : std::domain_error {
  using std::domain_error::domain_error;
};

struct TooLarge : std::length_error {
  using std::length_error::length_error;
};

}  // namespace jointnet
