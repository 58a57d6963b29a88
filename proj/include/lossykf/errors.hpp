#pragma once

#include <stdexcept>
#include <string>

namespace lossykf {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
};

/// Incompatible matrix, vector, or point shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its mathematical domain (negative distance, probability
/// outside [0,1], location outside the candidate region, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: singular factorization, non-finite values, loss of
/// positive semidefiniteness beyond tolerance.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid scenario or configuration data. Messages carry the offending
/// field path, e.g. "sensors[1].R not positive definite".
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace lossykf
