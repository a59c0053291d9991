#include "fdmnet/ppnorm.hpp"

#include <algorithm>
#include <stdexcept>

#include "fdmnet/fourier.hpp"
#include "fdmnet/ops.hpp"

namespace fdmnet {

void PPNormConfig::validate() const {
  if (!(eps > 0.0)) throw std::invalid_argument("ppnorm.eps must be positive");
  if (enabled && stages.empty()) throw std::invalid_argument("ppnorm.stages is empty");
  for (auto s : stages)
    if (s == 0) throw std::invalid_argument("ppnorm.stages are 1-based");
}

bool PPNormConfig::replaces(std::size_t stage) const {
  return enabled && std::find(stages.begin(), stages.end(), stage) != stages.end();
}

Tensor ppnorm_forward(const Tensor& features, double eps) {
  if (features.rank() != 3 && features.rank() != 4) {
    throw std::invalid_argument("ppnorm: expected [h,w,c] or [n,h,w,c], got " +
                                shape_string(features.shape()));
  }
  auto normalized = decompose(dft2d_forward(instance_norm(features, eps)));
  auto original = decompose(dft2d_forward(features));
  return dft2d_inverse(compose({normalized.amplitude, original.phase, original.width}));
}

}  // namespace fdmnet
