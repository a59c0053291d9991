#pragma once

#include <cstddef>

#include "fdmnet/ops.hpp"
#include "fdmnet/params.hpp"
#include "fdmnet/random.hpp"

namespace fdmnet {

struct IafConfig {
  std::size_t channels = 3;
  std::size_t hidden = 8;
  // Feed log(1 + A) to the projection; the mask still scales the raw A.
  bool log_amplitude = true;
};

/// Instance-adaptive amplitude filter parameters: a 1x1 projection with
/// batch norm, then a 3x3 conv over the channel-pooled map.
struct IafParams {
  IafConfig config;
  Tensor proj_kernel;  // [1,1,C,hidden]
  Tensor proj_bias;    // [hidden]
  Tensor bn_gamma;     // [hidden]
  Tensor bn_beta;      // [hidden]
  BatchNormStats bn_stats;
  Tensor mask_kernel;  // [3,3,2,1]
  Tensor mask_bias;    // [1]

  static IafParams init(const IafConfig& config, Rng& rng);

  NamedTensors parameters(const std::string& prefix) const;
  NamedTensors buffers(const std::string& prefix) const;
};

// Mask in (0,1) of shape [N,H,W/2+1,1] from an amplitude [N,H,W/2+1,C].
// In training mode the batch norm uses batch statistics and, when
// `update_stats` is set, folds them into the running estimates.
Tensor compute_mask(const Tensor& amplitude, IafParams& params, bool training,
                    bool update_stats = true);

// Averages each self-conjugate column (v = 0, and v = W/2 for even W) with
// its row mirror u -> -u mod H, so the masked spectrum stays Hermitian.
Tensor symmetrize_mask(const Tensor& mask, std::size_t width);

struct IafOutput {
  Tensor filtered;  // same shape as the input images
  Tensor mask;      // the symmetrized mask that was applied
};

// Scales the amplitude of [H,W,C] or [N,H,W,C] images by a [N,H,W/2+1,1]
// (or [H,W/2+1,1]) mask and reconstructs with the original phase.
Tensor apply_mask(const Tensor& images, const Tensor& mask);

IafOutput apply_filter(const Tensor& images, IafParams& params, bool training,
                       bool update_stats = true);

}  // namespace fdmnet
