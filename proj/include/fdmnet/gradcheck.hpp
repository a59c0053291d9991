#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fdmnet/tensor.hpp"

namespace fdmnet {

struct GradCheckResult {
  double max_abs_error = 0.0;
  // max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf, 1e-6)
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

/// Compares reverse-mode gradients of a scalar loss against central finite
/// differences for every entry of `inputs` (leaves with requires_grad set).
/// The loss function is re-evaluated without recording for the numeric side.
GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn,
                                std::vector<Tensor> inputs, double step = 1e-5);

struct GradCheckRow {
  std::string name;
  std::size_t instances = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Finite-difference suite over every differentiable operation of the
/// library, `instances` random problems each.
std::vector<GradCheckRow> run_gradcheck_suite(std::uint64_t seed, std::size_t instances = 20,
                                              double tolerance = 1e-4);

}  // namespace fdmnet
