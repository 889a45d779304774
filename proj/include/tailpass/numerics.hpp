#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <utility>

namespace tailpass {

/// x^n by repeated squaring, n >= 0.
inline double ipow(double x, long n) {
  double result = 1.0;
  double base = x;
  while (n > 0) {
    if (n & 1) result *= base;
    base *= base;
    n >>= 1;
  }
  return result;
}

inline double sign_of(double v) { return (v > 0.0) - (v < 0.0); }

/// Bisection on a bracket [lo, hi] with f(lo), f(hi) of opposite sign (or one of
/// them zero). Stops when the bracket is narrower than x_tol.
template <class F>
double bisect(F&& f, double lo, double hi, double f_lo, double f_hi, double x_tol,
              int max_iter = 200) {
  if (f_lo == 0.0) return lo;
  if (f_hi == 0.0) return hi;
  for (int it = 0; it < max_iter && (hi - lo) > x_tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double f_mid = f(mid);
    if (f_mid == 0.0) return mid;
    if (sign_of(f_mid) == sign_of(f_lo)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
      f_hi = f_mid;
    }
  }
  return 0.5 * (lo + hi);
}

struct GoldenResult {
  double x;
  double value;
};

/// Golden-section minimisation on [lo, hi] down to a bracket of width x_tol.
template <class F>
GoldenResult golden_section(F&& f, double lo, double hi, double x_tol, int max_iter = 400) {
  constexpr double inv_phi = 0.6180339887498948482;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < max_iter && (b - a) > x_tol; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? GoldenResult{c, fc} : GoldenResult{d, fd};
}

}  // namespace tailpass
