#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "fdmnet/losses.hpp"
#include "fdmnet/random.hpp"
#include "fdmnet/tensor.hpp"

namespace fdmnet {

const char* to_string(Modality m);

/// Procedural two-modality identity data. Visible samples are colored
/// renders; infrared samples are luma renders whose non-DC amplitude is
/// scaled by contrast * exp(-decay * r^2), r the normalized spectral radius.
struct SyntheticDatasetSpec {
  std::size_t train_identities = 20;
  std::size_t test_identities = 10;
  std::size_t images_per_modality = 8;
  std::size_t height = 32;
  std::size_t width = 16;
  int max_shift = 2;
  double noise_sigma = 0.03;
  double ir_gain_decay = 8.0;
  double ir_gain_contrast = 0.25;
  // Relative per-sample spread of decay and contrast.
  double ir_gain_jitter = 0.9;
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t identities() const { return train_identities + test_identities; }
};

struct Sample {
  Tensor image;  // [H,W,3] in [0,1]
  std::size_t identity = 0;
  Modality modality = Modality::visible;
};

struct Dataset {
  SyntheticDatasetSpec spec;
  // Train identities are 0..train_identities-1, test identities follow.
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// Identity appearance: colored regions and a torso texture.
struct IdentityLayout {
  double background[3];
  double head[3];
  double torso[3];
  double torso_alt[3];
  double legs[3];
  double accessory[3];
  int torso_top, torso_bottom, legs_bottom;
  int pattern;  // 0 solid, 1 horizontal stripes, 2 vertical stripes, 3 checker
  int period;
  int legs_gap;
  int acc_row, acc_col, acc_h, acc_w;
};

IdentityLayout make_layout(const SyntheticDatasetSpec& spec, std::size_t identity);
// Noise-free color render translated by (dy, dx) with edge replication.
Tensor render_visible(const IdentityLayout& layout, const SyntheticDatasetSpec& spec, int dy, int dx);
// Amplitude gain applied to the luma of a render, before noise.
double infrared_gain(double radius, double decay, double contrast);
// Noise-free infrared render: luma, amplitude gain, 3 identical channels.
Tensor render_infrared(const IdentityLayout& layout, const SyntheticDatasetSpec& spec, int dy,
                       int dx, double decay, double contrast);

Dataset generate_dataset(const SyntheticDatasetSpec& spec);

// Luma 0.299 R + 0.587 G + 0.114 B replicated to 3 channels. [..., 3].
Tensor to_grayscale(const Tensor& image);

// Writes PNG images and manifest.csv (path, identity, modality, split).
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);

}  // namespace fdmnet
