// Scalar special functions: standard normal CDF/PDF, digamma and the
// regularized lower incomplete gamma function. All are overloaded for Dual
// so constraint probabilities stay differentiable; the normal CDF derivative
// uses the density relation instead of differentiating erfc.
#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "cpmp/dual.hpp"

namespace cpmp {

inline constexpr double kInvSqrt2Pi = 0.3989422804014326779;

inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

inline Dual normal_cdf(const Dual& x) {
  return x.chain(normal_cdf(x.value()), normal_pdf(x.value()));
}

// Asymptotic expansion with upward recurrence for small arguments.
inline double digamma(double x) {
  double r = 0.0;
  while (x < 6.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  const double f = 1.0 / (x * x);
  return r + std::log(x) - 0.5 / x -
         f * (1.0 / 12.0 - f * (1.0 / 120.0 - f * (1.0 / 252.0 - f * (1.0 / 240.0 - f / 132.0))));
}

inline double lgamma_t(double x) { return std::lgamma(x); }
inline Dual lgamma_t(const Dual& x) {
  return x.chain(std::lgamma(x.value()), digamma(x.value()));
}

namespace detail {

// Lower series representation, valid for x < a + 1.
template <class T>
T gamma_p_series(const T& a, const T& x) {
  T ap = a;
  T sum = T(1.0) / a;
  T del = sum;
  for (int k = 0; k < 800; ++k) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(value_of(del)) < std::abs(value_of(sum)) * 1e-15) break;
  }
  return sum * exp(-x + a * log(x) - lgamma_t(a));
}

// Continued fraction (modified Lentz) for the upper function, x >= a + 1.
template <class T>
T gamma_q_cf(const T& a, const T& x) {
  const double tiny = 1e-300;
  T b = x + 1.0 - a;
  T c = T(1.0 / tiny);
  T d = T(1.0) / b;
  T h = d;
  for (int i = 1; i <= 800; ++i) {
    T an = T(double(-i)) * (T(double(i)) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(value_of(d)) < tiny) d = T(tiny);
    c = b + an / c;
    if (std::abs(value_of(c)) < tiny) c = T(tiny);
    d = T(1.0) / d;
    T delta = d * c;
    h *= delta;
    if (std::abs(value_of(delta) - 1.0) < 1e-15) break;
  }
  return exp(-x + a * log(x) - lgamma_t(a)) * h;
}

}  // namespace detail

// Regularized lower incomplete gamma P(a, x); absolute accuracy ~1e-14.
template <class T>
T gamma_p(const T& a, const T& x) {
  if (value_of(a) <= 0.0) throw std::domain_error("gamma_p: shape must be positive");
  if (value_of(x) <= 0.0) return T(0.0);
  if (value_of(x) < value_of(a) + 1.0) return detail::gamma_p_series(a, x);
  return T(1.0) - detail::gamma_q_cf(a, x);
}

template <class T>
T gamma_q(const T& a, const T& x) {
  return T(1.0) - gamma_p(a, x);
}

}  // namespace cpmp
