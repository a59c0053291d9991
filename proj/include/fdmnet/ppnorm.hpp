#pragma once

#include <cstddef>
#include <vector>

#include "fdmnet/tensor.hpp"

namespace fdmnet {

struct PPNormConfig {
  bool enabled = true;
  double eps = 1e-5;
  // 1-based backbone stages whose normalization is replaced.
  std::vector<std::size_t> stages{3};

  void validate() const;
  bool replaces(std::size_t stage) const;
};

/// Amplitude of the instance-normalized map combined with the phase of the
/// input map, per channel over the spatial axes. [h,w,c] or [n,h,w,c].
Tensor ppnorm_forward(const Tensor& features, double eps = 1e-5);

}  // namespace fdmnet
