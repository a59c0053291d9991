#include "fdmnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "fdmnet/data_io.hpp"
#include "fdmnet/fourier.hpp"
#include "fdmnet/ops.hpp"
#include "fdmnet/spectral_demos.hpp"

namespace fdmnet {

const char* to_string(Modality m) { return m == Modality::visible ? "visible" : "infrared"; }

void SyntheticDatasetSpec::validate() const {
  if (identities() < 2) throw std::invalid_argument("dataset needs at least 2 identities");
  if (train_identities == 0 || test_identities == 0) {
    throw std::invalid_argument("dataset needs train and test identities");
  }
  if (height < 8 || width < 8) throw std::invalid_argument("dataset images must be at least 8x8");
  if (images_per_modality == 0) throw std::invalid_argument("images_per_modality must be positive");
  if (max_shift < 0 || noise_sigma < 0.0 || ir_gain_decay < 0.0 || ir_gain_contrast <= 0.0 ||
      ir_gain_jitter < 0.0 || ir_gain_jitter >= 1.0) {
    throw std::invalid_argument("dataset: invalid shift, noise or gain parameters");
  }
}

namespace {

void random_color(Rng& rng, double* rgb, double lo = 0.15, double hi = 0.85) {
  for (int c = 0; c < 3; ++c) rgb[c] = rng.uniform(lo, hi);
}

}  // namespace

IdentityLayout make_layout(const SyntheticDatasetSpec& spec, std::size_t identity) {
  Rng rng = Rng(spec.seed).fork(1000 + identity);
  IdentityLayout l{};
  random_color(rng, l.background, 0.2, 0.8);
  random_color(rng, l.head);
  random_color(rng, l.torso);
  random_color(rng, l.torso_alt);
  random_color(rng, l.legs);
  random_color(rng, l.accessory);
  int H = static_cast<int>(spec.height), W = static_cast<int>(spec.width);
  l.torso_top = H / 4 + static_cast<int>(rng.below(3)) - 1;
  l.torso_bottom = H * 9 / 16 + static_cast<int>(rng.below(5)) - 2;
  l.legs_bottom = H - 2 - static_cast<int>(rng.below(3));
  l.pattern = static_cast<int>(rng.below(4));
  l.period = 2 + static_cast<int>(rng.below(3));
  l.legs_gap = static_cast<int>(rng.below(2));
  l.acc_h = 3 + static_cast<int>(rng.below(4));
  l.acc_w = 2 + static_cast<int>(rng.below(3));
  l.acc_row = l.torso_top + static_cast<int>(rng.below(static_cast<std::size_t>(std::max(1, l.torso_bottom - l.torso_top))));
  l.acc_col = rng.bernoulli(0.5) ? 1 : W - 1 - l.acc_w;
  return l;
}

namespace {

// Color of layout pixel (h, w) before translation.
void layout_pixel(const IdentityLayout& l, int H, int W, int h, int w, double* out) {
  const double* c = l.background;
  int cx = W / 2;
  int head_top = std::max(1, l.torso_top - H / 5);
  int head_half = std::max(1, W / 6);
  if (h >= head_top && h < l.torso_top && std::abs(w - cx) <= head_half) c = l.head;
  int torso_half = W * 5 / 16;
  if (h >= l.torso_top && h < l.torso_bottom && std::abs(w - cx) <= torso_half) {
    bool alt = false;
    switch (l.pattern) {
      case 1:
        alt = ((h - l.torso_top) / l.period) % 2 == 1;
        break;
      case 2:
        alt = ((w + W) / l.period) % 2 == 1;
        break;
      case 3:
        alt = (((h - l.torso_top) / l.period) + (w / l.period)) % 2 == 1;
        break;
      default:
        break;
    }
    c = alt ? l.torso_alt : l.torso;
  }
  int legs_half = W / 4;
  if (h >= l.torso_bottom && h < l.legs_bottom && std::abs(w - cx) <= legs_half &&
      !(l.legs_gap && (w == cx || w == cx - 1))) {
    c = l.legs;
  }
  if (h >= l.acc_row && h < l.acc_row + l.acc_h && w >= l.acc_col && w < l.acc_col + l.acc_w) {
    c = l.accessory;
  }
  std::copy(c, c + 3, out);
}

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

}  // namespace

Tensor render_visible(const IdentityLayout& layout, const SyntheticDatasetSpec& spec, int dy, int dx) {
  int H = static_cast<int>(spec.height), W = static_cast<int>(spec.width);
  std::vector<double> v(static_cast<std::size_t>(H * W * 3));
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w) {
      int sh = std::clamp(h - dy, 0, H - 1), sw = std::clamp(w - dx, 0, W - 1);
      layout_pixel(layout, H, W, sh, sw, &v[static_cast<std::size_t>((h * W + w) * 3)]);
    }
  return Tensor::from({spec.height, spec.width, 3}, std::move(v));
}

double infrared_gain(double radius, double decay, double contrast) {
  if (radius == 0.0) return 1.0;
  return contrast * std::exp(-decay * radius * radius);
}

Tensor render_infrared(const IdentityLayout& layout, const SyntheticDatasetSpec& spec, int dy,
                       int dx, double decay, double contrast) {
  std::size_t H = spec.height, W = spec.width, Wh = half_width(W);
  auto color = render_visible(layout, spec, dy, dx);
  std::vector<double> y(H * W);
  for (std::size_t i = 0; i < H * W; ++i) y[i] = luma(color[3 * i], color[3 * i + 1], color[3 * i + 2]);
  auto spectrum = dft2d_forward(Tensor::from({H, W, 1}, std::move(y)));
  std::vector<double> gain(H * Wh * 2);
  for (std::size_t u = 0; u < H; ++u)
    for (std::size_t v = 0; v < Wh; ++v) {
      double g = infrared_gain(radial_fraction(u, v, H, W), decay, contrast);
      gain[(u * Wh + v) * 2] = gain[(u * Wh + v) * 2 + 1] = g;
    }
  spectrum.values = mul(spectrum.values, Tensor::from(spectrum.values.shape(), std::move(gain)));
  auto ir = dft2d_inverse(spectrum);
  std::vector<double> out(H * W * 3);
  for (std::size_t i = 0; i < H * W; ++i) out[3 * i] = out[3 * i + 1] = out[3 * i + 2] = ir[i];
  return Tensor::from({H, W, 3}, std::move(out));
}

namespace {

Tensor add_noise(const Tensor& image, double sigma, Rng& rng) {
  std::vector<double> v(image.data().begin(), image.data().end());
  for (auto& x : v) x = std::clamp(x + sigma * rng.normal(), 0.0, 1.0);
  return Tensor::from(image.shape(), std::move(v));
}

}  // namespace

Dataset generate_dataset(const SyntheticDatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  for (std::size_t id = 0; id < spec.identities(); ++id) {
    auto layout = make_layout(spec, id);
    Rng rng = Rng(spec.seed).fork(5000 + id);
    auto& split = id < spec.train_identities ? ds.train : ds.test;
    auto shift = [&] {
      return static_cast<int>(rng.below(static_cast<std::size_t>(2 * spec.max_shift + 1))) - spec.max_shift;
    };
    for (std::size_t k = 0; k < spec.images_per_modality; ++k) {
      int dy = shift(), dx = shift();
      split.push_back({add_noise(render_visible(layout, spec, dy, dx), spec.noise_sigma, rng), id,
                       Modality::visible});
    }
    for (std::size_t k = 0; k < spec.images_per_modality; ++k) {
      int dy = shift(), dx = shift();
      double decay = spec.ir_gain_decay * (1.0 + spec.ir_gain_jitter * rng.uniform(-1.0, 1.0));
      double contrast = spec.ir_gain_contrast * (1.0 + spec.ir_gain_jitter * rng.uniform(-1.0, 1.0));
      auto ir = render_infrared(layout, spec, dy, dx, decay, contrast);
      split.push_back({add_noise(ir, spec.noise_sigma, rng), id, Modality::infrared});
    }
  }
  return ds;
}

Tensor to_grayscale(const Tensor& image) {
  if (image.rank() < 1 || image.shape().back() != 3) {
    throw std::invalid_argument("to_grayscale: expected 3 channels, got " + shape_string(image.shape()));
  }
  auto x = image.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); i += 3) {
    out[i] = out[i + 1] = out[i + 2] = luma(x[i], x[i + 1], x[i + 2]);
  }
  return Tensor::from(image.shape(), std::move(out));
}

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  std::filesystem::create_directories(dir / "images");
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.csv").string());
  manifest << "path,identity,modality,split\n";
  auto emit = [&](const std::vector<Sample>& samples, const char* split) {
    std::size_t index = 0;
    for (const auto& s : samples) {
      char name[96];
      std::snprintf(name, sizeof name, "images/%s_id%03zu_%s_%03zu.png", split, s.identity,
                    to_string(s.modality), index++);
      write_png(dir / name, s.image);
      manifest << name << ',' << s.identity << ',' << to_string(s.modality) << ',' << split << '\n';
    }
  };
  emit(dataset.train, "train");
  emit(dataset.test, "test");
}

}  // namespace fdmnet
