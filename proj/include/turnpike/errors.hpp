#pragma once

#include <stdexcept>
#include <string>

namespace turnpike {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed input: wrong dimensions, bad scenario fields.
class InputError : public Error {
public:
  using Error::Error;
};

// A named modelling assumption does not hold for the given data.
class AssumptionViolation : public Error {
public:
  AssumptionViolation(std::string assumption, const std::string& what)
      : Error(assumption + ": " + what), assumption_(std::move(assumption)) {}
  const std::string& assumption() const noexcept { return assumption_; }

private:
  std::string assumption_;
};

// Integration breakdown, ill-conditioned solves, residual breaches.
class NumericalFailure : public Error {
public:
  using Error::Error;
};

}  // namespace turnpike
