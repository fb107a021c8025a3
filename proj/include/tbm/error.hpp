#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tbm {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input (file syntax, wrong JSON shape).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a documented precondition or invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Numerical failure inside an algorithm (non-finite values, no convergence).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public NumericalError {
 public:
  explicit NotPositiveDefinite(std::size_t pivot)
      : NumericalError("matrix is not positive definite (pivot " +
                       std::to_string(pivot) + ")"),
        pivot_(pivot) {}

  // Column of the permuted matrix where the factorization broke down.
  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

}  // namespace tbm
