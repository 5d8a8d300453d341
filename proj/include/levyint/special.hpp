#pragma once

#include <cmath>
#include <limits>

#include "levyint/errors.hpp"

namespace levyint {

/// Gamma function. Backed by the C library (a few ulp over the real line,
/// reflection handled internally); poles raise DomainError.
inline double gamma_fn(double x) {
  if (x <= 0.0 && x == std::floor(x)) throw DomainError("gamma_fn: pole at non-positive integer");
  return std::tgamma(x);
}

/// Gamma(a) / Gamma(b) evaluated through lgamma to avoid overflow.
inline double gamma_ratio(double a, double b) {
  int sa = 1;
  int sb = 1;
  double la = ::lgamma_r(a, &sa);
  double lb = ::lgamma_r(b, &sb);
  return static_cast<double>(sa * sb) * std::exp(la - lb);
}

/// Exponential integral E1(x) = int_x^inf e^{-s}/s ds for x > 0.
inline double expint_e1(double x) {
  if (!(x > 0.0)) throw DomainError("expint_e1: x must be positive");
  return -std::expint(-x);
}

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace levyint
