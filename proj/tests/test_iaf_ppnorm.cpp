#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "dft_oracle.hpp"
#include "fdmnet/fourier.hpp"
#include "fdmnet/gradcheck.hpp"
#include "fdmnet/iaf.hpp"
#include "fdmnet/ppnorm.hpp"
#include "test_support.hpp"

using namespace fdmnet;
using fdmnet::testing::max_abs_diff;
using fdmnet::testing::projection_loss;

namespace {

// Scalar-loop evaluation of the mask network in training mode.
std::vector<double> loop_mask(const Tensor& amp, const IafParams& p) {
  std::size_t N = amp.dim(0), H = amp.dim(1), W = amp.dim(2), C = amp.dim(3);
  std::size_t K = p.config.hidden, P = N * H * W;
  std::vector<double> z(P * K);
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t k = 0; k < K; ++k) {
      double acc = p.proj_bias[k];
      for (std::size_t c = 0; c < C; ++c) {
        double a = amp[i * C + c];
        if (p.config.log_amplitude) a = std::log1p(a);
        acc += a * p.proj_kernel[c * K + k];
      }
      z[i * K + k] = acc;
    }
  for (std::size_t k = 0; k < K; ++k) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < P; ++i) m += z[i * K + k];
    m /= static_cast<double>(P);
    for (std::size_t i = 0; i < P; ++i) v += (z[i * K + k] - m) * (z[i * K + k] - m);
    v /= static_cast<double>(P);
    for (std::size_t i = 0; i < P; ++i) {
      double y = (z[i * K + k] - m) / std::sqrt(v + 1e-5) * p.bn_gamma[k] + p.bn_beta[k];
      z[i * K + k] = std::max(y, 0.0);
    }
  }
  std::vector<double> pooled(P * 2);
  for (std::size_t i = 0; i < P; ++i) {
    double s = 0, mx = -INFINITY;
    for (std::size_t k = 0; k < K; ++k) {
      s += z[i * K + k];
      mx = std::max(mx, z[i * K + k]);
    }
    pooled[i * 2] = s / static_cast<double>(K);
    pooled[i * 2 + 1] = mx;
  }
  std::vector<double> out(P);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) {
        double acc = p.mask_bias[0];
        for (int dh = -1; dh <= 1; ++dh)
          for (int dw = -1; dw <= 1; ++dw) {
            long hh = static_cast<long>(h) + dh, ww = static_cast<long>(w) + dw;
            if (hh < 0 || ww < 0 || hh >= static_cast<long>(H) || ww >= static_cast<long>(W)) continue;
            std::size_t src = (n * H + static_cast<std::size_t>(hh)) * W + static_cast<std::size_t>(ww);
            for (std::size_t c = 0; c < 2; ++c) {
              acc += pooled[src * 2 + c] *
                     p.mask_kernel[((static_cast<std::size_t>(dh + 1) * 3 + static_cast<std::size_t>(dw + 1)) * 2 + c)];
            }
          }
        out[(n * H + h) * W + w] = 1.0 / (1.0 + std::exp(-acc));
      }
  return out;
}

double phase_gap_batch(const Tensor& out, const Tensor& in) {
  double m = 0;
  std::size_t N = in.dim(0);
  Shape one{in.dim(1), in.dim(2), in.dim(3)};
  for (std::size_t n = 0; n < N; ++n) {
    std::vector<std::size_t> idx{n};
    auto a = oracle::brute_dft(reshape(index_select(out, idx), one));
    auto b = oracle::brute_dft(reshape(index_select(in, idx), one));
    m = std::max(m, oracle::max_phase_gap(a, b, 1e-9));
  }
  return m;
}

}  // namespace

TEST_CASE("compute_mask") {
  Rng rng(31);
  SUBCASE("zero mask conv gives 0.5") {
    auto p = IafParams::init({}, rng);
    p.mask_kernel = Tensor::zeros({3, 3, 2, 1}, true);
    auto m = compute_mask(random_uniform(rng, {2, 4, 3, 3}, 0.0, 2.0), p, true);
    for (double v : m.data()) CHECK(v == 0.5);
  }
  SUBCASE("matches a scalar-loop evaluation") {
    for (bool logamp : {true, false}) {
      auto p = IafParams::init({3, 5, logamp}, rng);
      p.bn_gamma = random_uniform(rng, {5}, 0.5, 1.5, true);
      p.bn_beta = random_normal(rng, {5}, 0.3, true);
      p.proj_bias = random_normal(rng, {5}, 0.3, true);
      p.mask_bias = random_normal(rng, {1}, 0.3, true);
      auto amp = random_uniform(rng, {2, 4, 3, 3}, 0.0, 3.0);
      auto m = compute_mask(amp, p, true);
      CHECK(m.shape() == Shape{2, 4, 3, 1});
      CHECK(max_abs_diff(m.data(), loop_mask(amp, p)) < 1e-12);
      for (double v : m.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
      }
    }
  }
  SUBCASE("channel mismatch") {
    auto p = IafParams::init({}, rng);
    CHECK_THROWS_AS(compute_mask(Tensor::zeros({1, 4, 3, 2}), p, true), std::invalid_argument);
  }
  SUBCASE("eval mode is deterministic") {
    auto p = IafParams::init({}, rng);
    auto amp = random_uniform(rng, {3, 6, 4, 3}, 0.0, 2.0);
    compute_mask(amp, p, true);
    auto a = compute_mask(amp, p, false), b = compute_mask(amp, p, false);
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  }
}

TEST_CASE("symmetrize_mask") {
  Rng rng(32);
  for (std::size_t W : {5u, 6u}) {
    auto m = random_uniform(rng, {2, 5, W / 2 + 1, 1}, 0.0, 1.0);
    auto s = symmetrize_mask(m, W);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t u = 0; u < 5; ++u)
        for (std::size_t v = 0; v < W / 2 + 1; ++v) {
          std::size_t a = (n * 5 + u) * (W / 2 + 1) + v, b = (n * 5 + (5 - u) % 5) * (W / 2 + 1) + v;
          bool sc = v == 0 || (W % 2 == 0 && v == W / 2);
          if (sc) {
            CHECK(s[a] == doctest::Approx(0.5 * (m[a] + m[b])));
          } else {
            CHECK(s[a] == m[a]);
          }
        }
    auto mg = random_uniform(rng, {2, 5, W / 2 + 1, 1}, 0.0, 1.0, true);
    auto w = random_normal(rng, {2, 5, W / 2 + 1, 1});
    auto r = check_gradients([&] { return projection_loss(symmetrize_mask(mg, W), w); }, {mg});
    CHECK(r.max_rel_error < 1e-8);
  }
}

TEST_CASE("apply_mask and apply_filter") {
  Rng rng(33);
  auto img = random_uniform(rng, {2, 6, 5, 3}, 0.0, 1.0);
  CHECK(max_abs_diff(apply_mask(img, Tensor::full({2, 6, 3, 1}, 1.0)), img) < 1e-9);
  auto blank = apply_mask(img, Tensor::zeros({2, 6, 3, 1}));
  for (double v : blank.data()) CHECK(std::fabs(v) < 1e-15);
  CHECK_THROWS_AS(apply_mask(img, Tensor::zeros({2, 6, 5, 1})), std::invalid_argument);

  auto single = random_uniform(rng, {8, 4, 3}, 0.0, 1.0);
  CHECK(max_abs_diff(apply_mask(single, Tensor::full({8, 3, 1}, 1.0)), single) < 1e-9);

  auto p = IafParams::init({}, rng);
  auto out = apply_filter(img, p, true);
  CHECK(out.filtered.shape() == img.shape());
  CHECK(out.mask.shape() == Shape{2, 6, 3, 1});
  auto one = apply_filter(single, p, false);
  CHECK(one.filtered.shape() == single.shape());
}

TEST_CASE("IAF preserves phase") {
  Rng rng(34);
  for (int t = 0; t < 100; ++t) {
    // The 3x3 mask conv needs a half-spectrum at least 3 wide and tall.
    std::size_t H = 3 + rng.below(8), W = 4 + rng.below(7);
    auto p = IafParams::init({3, 2 + rng.below(6), rng.bernoulli(0.5)}, rng);
    auto img = random_uniform(rng, {2, H, W, 3}, 0.0, 1.0);
    auto out = apply_filter(img, p, true);
    CHECK(phase_gap_batch(out.filtered, img) < 1e-6);
  }
}

TEST_CASE("IAF gradients") {
  Rng rng(35);
  for (int t = 0; t < 5; ++t) {
    auto p = IafParams::init({3, 4, t % 2 == 0}, rng);
    p.proj_bias = random_normal(rng, {4}, 0.2, true);
    std::size_t H = 3 + rng.below(4), W = 4 + rng.below(3);
    auto img = random_uniform(rng, {2, H, W, 3}, 0.0, 1.0, true);
    auto w = random_normal(rng, {2, H, W, 3});
    auto inputs = tensors_of(p.parameters(""));
    inputs.push_back(img);
    auto r = check_gradients([&] { return projection_loss(apply_filter(img, p, true).filtered, w); },
                             inputs);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("PPNorm") {
  Rng rng(36);
  SUBCASE("normalization fixed point") {
    // Checkerboard of +-1 (and its negation): zero mean, unit variance.
    std::vector<double> v(4 * 4 * 2);
    for (std::size_t i = 0; i < 16; ++i) {
      double s = ((i / 4 + i % 4) % 2 == 0) ? 1.0 : -1.0;
      v[2 * i] = s;
      v[2 * i + 1] = -s;
    }
    auto z = Tensor::from({4, 4, 2}, v);
    auto out = ppnorm_forward(z, 1e-5);
    CHECK(max_abs_diff(out, z) < 1e-5);
  }
  SUBCASE("constant channels map to zero") {
    auto out = ppnorm_forward(Tensor::full({3, 5, 2}, 1.7));
    for (double v : out.data()) CHECK(std::fabs(v) < 1e-9);
  }
  SUBCASE("amplitude of the normalized map, phase of the input") {
    for (int t = 0; t < 20; ++t) {
      auto z = random_normal(rng, {4, 4, 2});
      auto out = ppnorm_forward(z);
      auto out_bins = oracle::brute_dft(out);
      auto norm_bins = oracle::brute_dft(instance_norm(z));
      auto in_bins = oracle::brute_dft(z);
      for (std::size_t i = 0; i < out_bins.size(); ++i) {
        CHECK(std::fabs(std::abs(out_bins[i]) - std::abs(norm_bins[i])) < 1e-9);
      }
      CHECK(oracle::max_phase_gap(out_bins, in_bins, 1e-9) < 1e-6);
    }
  }
  SUBCASE("phase preservation on batched maps") {
    for (int t = 0; t < 100; ++t) {
      std::size_t h = 1 + rng.below(8), w = 1 + rng.below(8);
      auto z = add_scalar(random_normal(rng, {2, h, w, 3}), rng.normal());
      CHECK(phase_gap_batch(ppnorm_forward(z), z) < 1e-6);
    }
  }
  SUBCASE("per-channel spatial transform coincides with instance_norm") {
    // The normalization is a positive affine map per channel, so the only
    // bin whose phase it changes is DC, which it also zeroes.
    auto z = random_normal(rng, {3, 6, 5, 4}, 2.0);
    CHECK(max_abs_diff(ppnorm_forward(z), instance_norm(z)) < 1e-9);
  }
  SUBCASE("gradients") {
    for (int t = 0; t < 5; ++t) {
      std::size_t h = 2 + rng.below(4), w = 2 + rng.below(4);
      auto z = random_normal(rng, {2, h, w, 3}, 1.0, true);
      auto wt = random_normal(rng, {2, h, w, 3});
      auto r = check_gradients([&] { return projection_loss(ppnorm_forward(z), wt); }, {z});
      CHECK(r.max_rel_error < 1e-4);
    }
  }
  SUBCASE("config") {
    PPNormConfig cfg;
    CHECK(cfg.replaces(3));
    CHECK_FALSE(cfg.replaces(2));
    cfg.stages.clear();
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.enabled = false;
    CHECK_NOTHROW(cfg.validate());
    CHECK_FALSE(cfg.replaces(3));
  }
}
