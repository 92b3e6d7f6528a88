#pragma once

#include <stdexcept>
#include <string>

namespace rrcca {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatchError : public Error {
 public:
  using Error::Error;
};

class NotPsdError : public Error {
 public:
  using Error::Error;
};

class RankDeficientError : public Error {
 public:
  using Error::Error;
};

class InvalidGraphError : public Error {
 public:
  using Error::Error;
};

/// Thrown when a penalized fit selects an empty support. Carries the
/// penalty level that produced the empty model.
class EmptyModelError : public Error {
 public:
  EmptyModelError(const std::string& msg, double rho) : Error(msg), rho_(rho) {}
  double rho() const noexcept { return rho_; }

 private:
  double rho_;
};

class GenerationFailedError : public Error {
 public:
  using Error::Error;
};

class CvFailedError : public Error {
 public:
  using Error::Error;
};

}  // namespace rrcca
