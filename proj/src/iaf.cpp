#include "fdmnet/iaf.hpp"

#include <cmath>
#include <stdexcept>

#include "fdmnet/fourier.hpp"

namespace fdmnet {

IafParams IafParams::init(const IafConfig& config, Rng& rng) {
  if (config.channels == 0 || config.hidden == 0) {
    throw std::invalid_argument("iaf: channels and hidden width must be positive");
  }
  IafParams p;
  p.config = config;
  std::size_t C = config.channels, Ch = config.hidden;
  p.proj_kernel = random_normal(rng, {1, 1, C, Ch}, std::sqrt(2.0 / static_cast<double>(C)), true);
  p.proj_bias = Tensor::zeros({Ch}, true);
  p.bn_gamma = Tensor::full({Ch}, 1.0, true);
  p.bn_beta = Tensor::zeros({Ch}, true);
  p.bn_stats = {Tensor::zeros({Ch}), Tensor::full({Ch}, 1.0)};
  p.mask_kernel = random_normal(rng, {3, 3, 2, 1}, std::sqrt(2.0 / 18.0), true);
  p.mask_bias = Tensor::zeros({1}, true);
  return p;
}

NamedTensors IafParams::parameters(const std::string& prefix) const {
  return {{prefix + "proj.kernel", proj_kernel}, {prefix + "proj.bias", proj_bias},
          {prefix + "proj_bn.gamma", bn_gamma},  {prefix + "proj_bn.beta", bn_beta},
          {prefix + "mask.kernel", mask_kernel}, {prefix + "mask.bias", mask_bias}};
}

NamedTensors IafParams::buffers(const std::string& prefix) const {
  return {{prefix + "proj_bn.running_mean", bn_stats.running_mean},
          {prefix + "proj_bn.running_var", bn_stats.running_var}};
}

Tensor compute_mask(const Tensor& amplitude, IafParams& params, bool training,
                    bool update_stats) {
  if (amplitude.rank() != 4) {
    throw std::invalid_argument("compute_mask: expected [N,H,Wh,C], got " +
                                shape_string(amplitude.shape()));
  }
  if (amplitude.dim(3) != params.config.channels) {
    throw std::invalid_argument("compute_mask: amplitude has " + std::to_string(amplitude.dim(3)) +
                                " channels, filter expects " +
                                std::to_string(params.config.channels));
  }
  Tensor a = params.config.log_amplitude ? log1p(amplitude) : amplitude;
  Tensor z = conv2d(a, params.proj_kernel, params.proj_bias);
  z = relu(batch_norm(z, params.bn_gamma, params.bn_beta,
                            training && !update_stats ? nullptr : &params.bn_stats, training));
  Tensor pooled = concat({channel_avg_pool(z), channel_max_pool(z)}, 3);
  return sigmoid(conv2d(pooled, params.mask_kernel, params.mask_bias));
}

Tensor symmetrize_mask(const Tensor& mask, std::size_t width) {
  if (mask.rank() != 4 || mask.dim(3) != 1 || mask.dim(2) != half_width(width)) {
    throw std::invalid_argument("symmetrize_mask: expected [N,H," +
                                std::to_string(half_width(width)) + ",1], got " +
                                shape_string(mask.shape()));
  }
  std::size_t N = mask.dim(0), H = mask.dim(1), Wh = mask.dim(2);
  std::vector<std::size_t> columns{0};
  if (width % 2 == 0 && width / 2 != 0) columns.push_back(width / 2);

  auto x = mask.data();
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t v : columns)
      for (std::size_t u = 0; u < H; ++u) {
        std::size_t a = (n * H + u) * Wh + v, b = (n * H + (H - u) % H) * Wh + v;
        out[a] = 0.5 * (x[a] + x[b]);
      }
  return detail::make_output(mask.shape(), std::move(out), {&mask},
                             [mask, columns, N, H, Wh](std::span<const double> g) {
                               auto gm = detail::grad_sink(mask);
                               if (gm.empty()) return;
                               std::vector<bool> paired(g.size(), false);
                               for (std::size_t n = 0; n < N; ++n)
                                 for (std::size_t v : columns)
                                   for (std::size_t u = 0; u < H; ++u) {
                                     std::size_t a = (n * H + u) * Wh + v;
                                     std::size_t b = (n * H + (H - u) % H) * Wh + v;
                                     gm[a] += 0.5 * g[a];
                                     gm[b] += 0.5 * g[a];
                                     paired[a] = true;
                                   }
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 if (!paired[i]) gm[i] += g[i];
                             });
}

Tensor apply_mask(const Tensor& images, const Tensor& mask) {
  bool single = images.rank() == 3;
  Tensor x = single ? reshape(images, {1, images.dim(0), images.dim(1), images.dim(2)}) : images;
  if (x.rank() != 4) {
    throw std::invalid_argument("apply_mask: expected [H,W,C] or [N,H,W,C], got " +
                                shape_string(images.shape()));
  }
  std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), Wh = half_width(W);
  Tensor m = mask.rank() == 3 ? reshape(mask, {1, mask.dim(0), mask.dim(1), mask.dim(2)}) : mask;
  if (m.shape() != Shape{N, H, Wh, 1}) {
    throw std::invalid_argument("apply_mask: mask " + shape_string(mask.shape()) +
                                " does not fit images " + shape_string(images.shape()));
  }
  auto ap = decompose(dft2d_forward(x));
  ap.amplitude = mul(ap.amplitude, symmetrize_mask(m, W));
  Tensor out = dft2d_inverse(compose(ap));
  return single ? reshape(out, images.shape()) : out;
}

IafOutput apply_filter(const Tensor& images, IafParams& params, bool training,
                       bool update_stats) {
  bool single = images.rank() == 3;
  Tensor x = single ? reshape(images, {1, images.dim(0), images.dim(1), images.dim(2)}) : images;
  if (x.rank() != 4) {
    throw std::invalid_argument("apply_filter: expected [H,W,C] or [N,H,W,C], got " +
                                shape_string(images.shape()));
  }
  std::size_t W = x.dim(2);
  auto ap = decompose(dft2d_forward(x));
  Tensor mask = symmetrize_mask(compute_mask(ap.amplitude, params, training, update_stats), W);
  ap.amplitude = mul(ap.amplitude, mask);
  Tensor out = dft2d_inverse(compose(ap));
  if (single) return {reshape(out, images.shape()), mask};
  return {out, mask};
}

}  // namespace fdmnet
