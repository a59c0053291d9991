#pragma once

#include <string>
#include <vector>

#include "fdmnet/tensor.hpp"

namespace fdmnet {

// Tensor handles alias their storage, so a list of these can be used both to
// step parameters and to load them in place.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using NamedTensors = std::vector<NamedTensor>;

inline std::vector<Tensor> tensors_of(const NamedTensors& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& n : named) out.push_back(n.tensor);
  return out;
}

}  // namespace fdmnet
