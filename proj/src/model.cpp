#include "fdmnet/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fdmnet/random.hpp"

namespace fdmnet {

void ModelConfig::validate() const {
  if (in_channels == 0) throw std::invalid_argument("model: in_channels must be positive");
  if (channels.empty()) throw std::invalid_argument("model.channels: need at least one stage");
  for (auto c : channels)
    if (c == 0) throw std::invalid_argument("model.channels: stage widths must be positive");
  if (embed_dim == 0) throw std::invalid_argument("model.embed_dim must be positive");
  if (embed_dim != channels.back()) {
    throw std::invalid_argument("model.embed_dim (" + std::to_string(embed_dim) +
                                ") must equal the last stage width (" +
                                std::to_string(channels.back()) + ")");
  }
  if (num_identities < 2) throw std::invalid_argument("model: need at least 2 identities");
  if (disc_hidden == 0) throw std::invalid_argument("model.disc_hidden must be positive");
  if (use_iaf && iaf.channels != in_channels) {
    throw std::invalid_argument("model: filter channels must match input channels");
  }
  ppnorm.validate();
  for (auto s : ppnorm.stages) {
    if (ppnorm.enabled && s > channels.size()) {
      throw std::invalid_argument("ppnorm.stages: stage " + std::to_string(s) + " of " +
                                  std::to_string(channels.size()));
    }
  }
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  Rng iaf_rng = rng.fork(1), body_rng = rng.fork(2), head_rng = rng.fork(3);
  iaf_ = IafParams::init(config_.iaf, iaf_rng);

  std::size_t cin = config_.in_channels;
  for (std::size_t i = 0; i < config_.channels.size(); ++i) {
    std::size_t cout = config_.channels[i];
    ConvStage s;
    s.kernel = random_normal(body_rng, {3, 3, cin, cout}, std::sqrt(2.0 / (9.0 * cin)), true);
    s.bias = Tensor::zeros({cout}, true);
    s.shortcut = random_normal(body_rng, {1, 1, cin, cout}, std::sqrt(1.0 / cin), true);
    s.shortcut_bias = Tensor::zeros({cout}, true);
    s.ppnorm = config_.ppnorm.replaces(i + 1);
    if (!s.ppnorm) {
      s.gamma = Tensor::full({cout}, 1.0, true);
      s.beta = Tensor::zeros({cout}, true);
      s.stats = {Tensor::zeros({cout}), Tensor::full({cout}, 1.0)};
    }
    s.downsample = i + 1 < config_.channels.size();
    s.block = !s.downsample;
    if (s.block) {
      s.kernel2 = random_normal(body_rng, {3, 3, cout, cout}, std::sqrt(2.0 / (9.0 * cout)), true);
      s.bias2 = Tensor::zeros({cout}, true);
      s.gamma2 = Tensor::full({cout}, 1.0, true);
      s.beta2 = Tensor::zeros({cout}, true);
      s.stats2 = {Tensor::zeros({cout}), Tensor::full({cout}, 1.0)};
    }
    stages_.push_back(std::move(s));
    cin = cout;
  }

  std::size_t d = config_.embed_dim, n = config_.num_identities, h = config_.disc_hidden;
  cls_weight_ = random_normal(head_rng, {d, n}, std::sqrt(1.0 / d), true);
  cls_bias_ = Tensor::zeros({n}, true);
  disc_w1_ = random_normal(head_rng, {d, h}, std::sqrt(2.0 / d), true);
  disc_b1_ = Tensor::zeros({h}, true);
  disc_w2_ = random_normal(head_rng, {h, 2}, std::sqrt(1.0 / h), true);
  disc_b2_ = Tensor::zeros({2}, true);
}

Tensor Model::filter(const Tensor& images, ForwardMode mode) {
  if (!config_.use_iaf) return images;
  return apply_filter(images, iaf_, mode.training, mode.update_stats).filtered;
}

Tensor Model::extract(const Tensor& images, ForwardMode mode) {
  if (images.rank() != 4 || images.dim(3) != config_.in_channels) {
    throw std::invalid_argument("Model::extract: expected [N,H,W," +
                                std::to_string(config_.in_channels) + "], got " +
                                shape_string(images.shape()));
  }
  Tensor x = images;
  for (auto& s : stages_) {
    bool keep_stats = !mode.training || mode.update_stats;
    Tensor y = conv2d(x, s.kernel, s.bias);
    if (s.ppnorm) {
      y = ppnorm_forward(y, config_.ppnorm.eps);
    } else {
      y = batch_norm(y, s.gamma, s.beta, keep_stats ? &s.stats : nullptr, mode.training);
    }
    if (s.block) {
      y = conv2d(relu(y), s.kernel2, s.bias2);
      y = batch_norm(y, s.gamma2, s.beta2, keep_stats ? &s.stats2 : nullptr, mode.training);
    }
    x = relu(add(y, conv2d(x, s.shortcut, s.shortcut_bias)));
    if (s.downsample) x = avg_pool2x2(x);
  }
  return spatial_global_avg_pool(x);
}

Tensor Model::classify(const Tensor& features) const {
  return linear(features, cls_weight_, cls_bias_);
}

Tensor Model::discriminate(const Tensor& features) const {
  return softmax(linear(relu(linear(features, disc_w1_, disc_b1_)), disc_w2_, disc_b2_));
}

NamedTensors Model::theta_a() const {
  if (!config_.use_iaf) return {};
  return iaf_.parameters("iaf.");
}

NamedTensors Model::theta_e() const {
  NamedTensors out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    std::string p = "stage" + std::to_string(i + 1) + ".";
    const auto& s = stages_[i];
    out.push_back({p + "conv.kernel", s.kernel});
    out.push_back({p + "conv.bias", s.bias});
    if (s.block) {
      out.push_back({p + "conv2.kernel", s.kernel2});
      out.push_back({p + "conv2.bias", s.bias2});
      out.push_back({p + "bn2.gamma", s.gamma2});
      out.push_back({p + "bn2.beta", s.beta2});
    }
    out.push_back({p + "shortcut.kernel", s.shortcut});
    out.push_back({p + "shortcut.bias", s.shortcut_bias});
    if (!s.ppnorm) {
      out.push_back({p + "bn.gamma", s.gamma});
      out.push_back({p + "bn.beta", s.beta});
    }
  }
  out.push_back({"classifier.weight", cls_weight_});
  out.push_back({"classifier.bias", cls_bias_});
  return out;
}

NamedTensors Model::theta_m() const {
  return {{"disc.fc1.weight", disc_w1_},
          {"disc.fc1.bias", disc_b1_},
          {"disc.fc2.weight", disc_w2_},
          {"disc.fc2.bias", disc_b2_}};
}

NamedTensors Model::parameters() const {
  NamedTensors out = theta_a();
  for (auto& t : theta_e()) out.push_back(t);
  for (auto& t : theta_m()) out.push_back(t);
  return out;
}

NamedTensors Model::buffers() const {
  NamedTensors out;
  if (config_.use_iaf) out = iaf_.buffers("iaf.");
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    std::string p = "stage" + std::to_string(i + 1) + ".";
    const auto& s = stages_[i];
    if (!s.ppnorm) {
      out.push_back({p + "bn.running_mean", s.stats.running_mean});
      out.push_back({p + "bn.running_var", s.stats.running_var});
    }
    if (s.block) {
      out.push_back({p + "bn2.running_mean", s.stats2.running_mean});
      out.push_back({p + "bn2.running_var", s.stats2.running_var});
    }
  }
  return out;
}

NamedTensors Model::state() const {
  NamedTensors out = parameters();
  for (auto& t : buffers()) out.push_back(t);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : parameters()) n += t.tensor.numel();
  return n;
}

}  // namespace fdmnet
