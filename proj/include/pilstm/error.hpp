#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pilstm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape, range, or argument violations.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A state became non-finite while integrating or rolling out.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// A tangent basis lost rank during reorthonormalization.
class DegenerateTangent : public Error {
 public:
  using Error::Error;
};

/// Non-finite activation or gradient.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace pilstm
