#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "fdmnet/ops.hpp"
#include "fdmnet/tensor.hpp"

namespace fdmnet::testing {

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return a.size() == b.size() ? m : INFINITY;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  return max_abs_diff(a.data(), b.data());
}

// Random projection weights so a tensor output becomes a scalar loss with a
// non-degenerate gradient.
inline Tensor projection_loss(const Tensor& out, const Tensor& weights) {
  return sum(mul(out, weights));
}

}  // namespace fdmnet::testing
