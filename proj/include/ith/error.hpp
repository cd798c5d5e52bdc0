#ifndef ITH_ERROR_HPP
#define ITH_ERROR_HPP

#include <stdexcept>
#include <string>

namespace ith {

// Error hierarchy. Validation-type errors map to CLI exit code 2,
// NumericError to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (shape mismatch, bad label...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value (bandwidth <= 0, empty layer list...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Input is well-formed but degenerate for the requested quantity.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered or an iterative routine failed to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ith

#endif  // ITH_ERROR_HPP
