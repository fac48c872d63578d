#pragma once

#include <stdexcept>
#include <string>

namespace hetpref {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown prompt or response id, or an index out of range.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// A pairwise comparison of a response with itself.
class InvalidPairError : public Error {
 public:
  using Error::Error;
};

/// The chosen item is not a member of the choice set, or the set is malformed.
class InvalidChoiceError : public Error {
 public:
  using Error::Error;
};

/// A preference record that cannot be scored (empty rejected set, winner rejected, ...).
class InvalidRecordError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument domain.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input that violates a data invariant (non-finite values, bad simplex, shape mismatch).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A population whose types cannot be told apart by construction.
class DegeneratePopulationError : public Error {
 public:
  using Error::Error;
};

/// A rank-deficient comparison design.
class RankError : public Error {
 public:
  RankError(const std::string& what, long rank, long required)
      : Error(what), rank_(rank), required_(required) {}
  long rank() const noexcept { return rank_; }
  long required() const noexcept { return required_; }

 private:
  long rank_;
  long required_;
};

/// An iterative solver hit its iteration cap before meeting its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double gradient_norm)
      : Error(what), gradient_norm_(gradient_norm) {}
  double gradient_norm() const noexcept { return gradient_norm_; }

 private:
  double gradient_norm_;
};

/// Gradient dynamics blew up; the step size is too large.
class StepSizeError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure that should be impossible for valid inputs.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Input files that were produced from a different catalog / dataset / ensemble.
class HashMismatchError : public Error {
 public:
  HashMismatchError(const std::string& what, std::string expected, std::string actual)
      : Error(what), expected_(std::move(expected)), actual_(std::move(actual)) {}
  const std::string& expected() const noexcept { return expected_; }
  const std::string& actual() const noexcept { return actual_; }

 private:
  std::string expected_;
  std::string actual_;
};

}  // namespace hetpref
