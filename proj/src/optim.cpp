#include "fdmnet/optim.hpp"

#include <stdexcept>

namespace fdmnet {

void Sgd::step(std::span<Tensor> params, double lr) {
  if (!(lr >= 0.0)) throw std::invalid_argument("Sgd::step: learning rate must be non-negative");
  for (auto& p : params) {
    if (!p.has_grad()) {
      throw std::logic_error("Sgd::step: parameter of shape " + shape_string(p.shape()) +
                             " has no gradient");
    }
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& v = velocity_[p.id()];
    bool fresh = v.empty();
    if (fresh) v.assign(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      double d = g[i] + options_.weight_decay * w[i];
      v[i] = fresh ? d : options_.momentum * v[i] + d;
      w[i] -= lr * v[i];
    }
  }
}

}  // namespace fdmnet
