#pragma once

#include <cstddef>
#include <span>

#include "fdmnet/tensor.hpp"

namespace fdmnet {

enum class Modality : std::size_t { visible = 0, infrared = 1 };

inline constexpr double kProbabilityFloor = 1e-12;

struct LossWeights {
  double lambda1 = 0.001;  // consistency
  double lambda2 = 0.5;  // center cluster
  double rho = 1.0;      // center margin

  void validate() const;
};

// Mean over the batch (axis 0) of the per-sample L1 distance.
Tensor consistency_loss(const Tensor& filtered_visible, const Tensor& filtered_gray);

// Cross-entropy of [n,2] modality probabilities against the real labels
// (0 = visible, 1 = infrared).
Tensor discriminator_loss(const Tensor& probs, std::span<const std::size_t> modality);
// Cross-entropy against the uniform label (0.5, 0.5).
Tensor confusion_loss(const Tensor& probs);

// Mean softmax cross-entropy of [n,k] logits.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);
// Sum of the per-modality mean cross-entropies of a shared classifier.
Tensor identity_loss(const Tensor& logits_visible, std::span<const std::size_t> labels_visible,
                     const Tensor& logits_infrared, std::span<const std::size_t> labels_infrared);

// Mean distance of each feature to its batch identity center plus the
// average margin hinge over distinct center pairs. Labels may be arbitrary.
Tensor center_cluster_loss(const Tensor& features, std::span<const std::size_t> labels,
                           double rho);

struct LossComponents {
  Tensor adversarial;  // confusion term seen by the extractor
  Tensor identity;
  Tensor consistency;
  Tensor center;
};

Tensor total_loss(const LossComponents& parts, const LossWeights& weights);

}  // namespace fdmnet
