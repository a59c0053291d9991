#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fdmnet/iaf.hpp"
#include "fdmnet/ops.hpp"
#include "fdmnet/params.hpp"
#include "fdmnet/ppnorm.hpp"

namespace fdmnet {

struct ModelConfig {
  std::size_t in_channels = 3;
  // Output channels per backbone stage; every stage but the last halves the
  // spatial size.
  std::vector<std::size_t> channels{8, 16, 32};
  // Must equal the last stage width: the embedding is the pooled map.
  std::size_t embed_dim = 32;
  std::size_t num_identities = 20;
  std::size_t disc_hidden = 32;
  IafConfig iaf;
  PPNormConfig ppnorm;
  bool use_iaf = true;
  bool mal = true;
  bool grayscale_guidance = true;
  // Grayscale copies also pass through the extractor and the identity loss.
  bool gray_identity = false;

  void validate() const;
};

struct ForwardMode {
  bool training = false;
  // Batch-norm running statistics are updated only when set (and training).
  bool update_stats = false;
};

// Plain stage: relu(norm(conv3x3(x)) + conv1x1(x)), then 2x2 pooling.
// The last stage is a residual block without pooling:
//   relu(bn(conv3x3(relu(norm(conv3x3(x))))) + conv1x1(x)).
// PPNorm, when placed on a stage, takes the place of `norm`.
struct ConvStage {
  Tensor kernel;    // [3,3,cin,cout]
  Tensor bias;      // [cout]
  Tensor shortcut;  // [1,1,cin,cout]
  Tensor shortcut_bias;
  bool ppnorm = false;
  // Present when the stage uses batch norm.
  Tensor gamma;
  Tensor beta;
  BatchNormStats stats;
  bool downsample = false;
  // Second convolution of the last stage, always batch-normalized.
  bool block = false;
  Tensor kernel2, bias2, gamma2, beta2;
  BatchNormStats stats2;
};

class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // Filtered images (or the input itself without the filter). [N,H,W,C].
  Tensor filter(const Tensor& images, ForwardMode mode);
  // Pooled embedding [N,d] of already-filtered images.
  Tensor extract(const Tensor& images, ForwardMode mode);
  Tensor embed(const Tensor& images, ForwardMode mode) { return extract(filter(images, mode), mode); }
  Tensor classify(const Tensor& features) const;
  // Modality probabilities [N,2] (visible, infrared).
  Tensor discriminate(const Tensor& features) const;

  NamedTensors theta_a() const;  // filter
  NamedTensors theta_e() const;  // extractor and classifier
  NamedTensors theta_m() const;  // discriminator
  NamedTensors parameters() const;
  NamedTensors buffers() const;
  // Every tensor a checkpoint holds: parameters then buffers.
  NamedTensors state() const;
  std::size_t parameter_count() const;

 private:
  ModelConfig config_;
  IafParams iaf_;
  std::vector<ConvStage> stages_;
  Tensor cls_weight_, cls_bias_;
  Tensor disc_w1_, disc_b1_, disc_w2_, disc_b2_;
};

}  // namespace fdmnet
