#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "ali/tensor.hpp"

namespace ali::testutil {

// Central difference of a scalar function of one tensor entry. Restores the
// entry afterwards.
template <class F>
double fd_partial(F&& f, Tensor& x, std::size_t i, double h = 1e-6) {
  const double orig = x[i];
  x[i] = orig + h;
  const double fp = f();
  x[i] = orig - h;
  const double fm = f();
  x[i] = orig;
  return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

}  // namespace ali::testutil
