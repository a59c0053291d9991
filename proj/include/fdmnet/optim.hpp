#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "fdmnet/tensor.hpp"

namespace fdmnet {

struct SgdOptions {
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// Classical SGD with a momentum buffer per parameter:
///   v <- momentum * v + (g + weight_decay * p);  p <- p - lr * v
class Sgd {
 public:
  explicit Sgd(SgdOptions options = {}) : options_(options) {}

  void step(std::span<Tensor> params, double lr);
  void reset() { velocity_.clear(); }
  const SgdOptions& options() const { return options_; }

 private:
  SgdOptions options_;
  std::unordered_map<const void*, std::vector<double>> velocity_;
};

}  // namespace fdmnet
