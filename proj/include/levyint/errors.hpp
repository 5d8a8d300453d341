#pragma once

#include <stdexcept>
#include <string>

namespace levyint {

/// Argument outside the mathematical domain of an operation (s <= 0, alpha outside (0,1), ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Requested value lies outside the range of a function (e.g. y above sup phi).
class RangeError : public std::range_error {
 public:
  using std::range_error::range_error;
};

/// An iterative numerical method failed to converge or could not decide.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The object lacks data needed for the operation (no Levy triplet, no Q inverse, ...).
class CapabilityError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A theorem-level applicability condition is violated. The message names the
/// violated inequality; the CLI maps this to exit status 2.
class PreconditionRefusal : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace levyint
