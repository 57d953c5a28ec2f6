#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rdmise {

// Base of everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- interval-core -------------------------------------------------------

class InvalidInterval : public Error {
 public:
  using Error::Error;
};

class DivisionByIntervalContainingZero : public Error {
 public:
  DivisionByIntervalContainingZero()
      : Error("interval division by an interval containing zero") {}
};

class RdmVarRebound : public Error {
 public:
  using Error::Error;
};

class DegreeOverflow : public Error {
 public:
  DegreeOverflow() : Error("polynomial product would exceed degree 2") {}
};

class TooManyRdmVars : public Error {
 public:
  TooManyRdmVars(std::size_t count, std::size_t cap)
      : Error("span requested over " + std::to_string(count) +
              " RDM variables; cap is " + std::to_string(cap)) {}
};

// ---- input files -----------------------------------------------------------
// Everything derived from InputError maps to the "parse" exit code.

class InputError : public Error {
 public:
  using Error::Error;
};

class ParseError : public InputError {
 public:
  using InputError::InputError;
};

class NonRadialTopology : public InputError {
 public:
  using InputError::InputError;
};

class AsymmetricImpedance : public InputError {
 public:
  using InputError::InputError;
};

class UnknownLocation : public InputError {
 public:
  using InputError::InputError;
};

class EmptyErrorInterval : public InputError {
 public:
  using InputError::InputError;
};

class InvalidMeasurement : public InputError {
 public:
  using InputError::InputError;
};

// ---- estimation ------------------------------------------------------------

class EmptySolutionSet : public Error {
 public:
  explicit EmptySolutionSet(std::string what, int iteration = -1)
      : Error(std::move(what)), iteration_(iteration) {}

  // Outer-loop iteration in which the inconsistency surfaced (-1 if unknown).
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

class NoConvergence : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace rdmise
