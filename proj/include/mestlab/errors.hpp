#pragma once

#include <stdexcept>
#include <string>

namespace mestlab {

/// Base class for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input / configuration problems. The CLI maps these to exit code 2.
class InvalidSpec : public Error {
 public:
  using Error::Error;
};
class InvalidModel : public Error {
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
class EmptySample : public Error {
 public:
  using Error::Error;
};

// Numerical failures. The CLI maps these to exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};
class RankDeficient : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class FactorizationFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace mestlab
