#include "fdmnet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdmnet/ops.hpp"

namespace fdmnet {

void LossWeights::validate() const {
  if (lambda1 < 0.0 || lambda2 < 0.0 || rho < 0.0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

Tensor consistency_loss(const Tensor& filtered_visible, const Tensor& filtered_gray) {
  if (filtered_visible.shape() != filtered_gray.shape()) {
    throw std::invalid_argument("consistency_loss: shapes " +
                                shape_string(filtered_visible.shape()) + " and " +
                                shape_string(filtered_gray.shape()) + " differ");
  }
  if (filtered_visible.rank() == 0 || filtered_visible.dim(0) == 0) {
    throw std::invalid_argument("consistency_loss: empty batch");
  }
  double n = static_cast<double>(filtered_visible.dim(0));
  return scale(sum(abs(sub(filtered_visible, filtered_gray))), 1.0 / n);
}

namespace {

void require_probabilities(const Tensor& probs, const char* who) {
  if (probs.rank() != 2 || probs.dim(1) != 2 || probs.dim(0) == 0) {
    throw std::invalid_argument(std::string(who) + ": expected [n,2] probabilities, got " +
                                shape_string(probs.shape()));
  }
  auto p = probs.data();
  for (std::size_t i = 0; i < probs.dim(0); ++i) {
    double a = p[2 * i], b = p[2 * i + 1];
    if (!(a >= 0.0 && b >= 0.0 && std::fabs(a + b - 1.0) < 1e-6)) {
      throw std::invalid_argument(std::string(who) + ": row " + std::to_string(i) +
                                  " is not a probability pair");
    }
  }
}

}  // namespace

Tensor discriminator_loss(const Tensor& probs, std::span<const std::size_t> modality) {
  require_probabilities(probs, "discriminator_loss");
  if (modality.size() != probs.dim(0)) {
    throw std::invalid_argument("discriminator_loss: label count != rows");
  }
  for (auto m : modality)
    if (m > 1) throw std::out_of_range("discriminator_loss: modality label must be 0 or 1");
  return scale(mean(log_clamped(pick(probs, modality), kProbabilityFloor)), -1.0);
}

Tensor confusion_loss(const Tensor& probs) {
  require_probabilities(probs, "confusion_loss");
  return scale(mean(log_clamped(probs, kProbabilityFloor)), -1.0);
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) == 0) {
    throw std::invalid_argument("cross_entropy: expected non-empty [n,k] logits, got " +
                                shape_string(logits.shape()));
  }
  if (labels.size() != logits.dim(0)) throw std::invalid_argument("cross_entropy: label count");
  for (auto y : labels) {
    if (y >= logits.dim(1)) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " >= " +
                              std::to_string(logits.dim(1)) + " classes");
    }
  }
  return scale(mean(pick(log_softmax(logits), labels)), -1.0);
}

Tensor identity_loss(const Tensor& logits_visible, std::span<const std::size_t> labels_visible,
                     const Tensor& logits_infrared,
                     std::span<const std::size_t> labels_infrared) {
  return add(cross_entropy(logits_visible, labels_visible),
             cross_entropy(logits_infrared, labels_infrared));
}

Tensor center_cluster_loss(const Tensor& features, std::span<const std::size_t> labels,
                           double rho) {
  if (features.rank() != 2 || features.dim(0) == 0) {
    throw std::invalid_argument("center_cluster_loss: expected non-empty [n,d], got " +
                                shape_string(features.shape()));
  }
  if (labels.size() != features.dim(0)) {
    throw std::invalid_argument("center_cluster_loss: label count != rows");
  }
  std::map<std::size_t, std::size_t> compact;
  for (auto y : labels) compact.emplace(y, 0);
  std::size_t T = 0;
  for (auto& [label, index] : compact) index = T++;
  std::vector<std::size_t> group(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) group[i] = compact[labels[i]];

  Tensor centers = group_mean(features, group, T);
  Tensor spread = mean(row_norm(sub(features, index_select(centers, group))));
  if (T < 2) return spread;

  std::vector<std::size_t> first, second;
  for (std::size_t k = 0; k < T; ++k)
    for (std::size_t j = k + 1; j < T; ++j) {
      first.push_back(k);
      second.push_back(j);
    }
  Tensor gaps = row_norm(sub(index_select(centers, first), index_select(centers, second)));
  Tensor hinge = sum(relu(add_scalar(scale(gaps, -1.0), rho)));
  double coef = 2.0 / (static_cast<double>(T) * static_cast<double>(T - 1));
  return add(spread, scale(hinge, coef));
}

Tensor total_loss(const LossComponents& parts, const LossWeights& weights) {
  for (const Tensor* t : {&parts.adversarial, &parts.identity, &parts.consistency, &parts.center}) {
    if (t->numel() != 1) throw std::invalid_argument("total_loss: components must be scalars");
  }
  Tensor total = add(parts.adversarial, parts.identity);
  total = add(total, scale(parts.consistency, weights.lambda1));
  return add(total, scale(parts.center, weights.lambda2));
}

}  // namespace fdmnet
