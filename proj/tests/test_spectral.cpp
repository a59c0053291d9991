#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dft_oracle.hpp"
#include "fdmnet/fourier.hpp"
#include "fdmnet/random.hpp"
#include "fdmnet/spectral_demos.hpp"
#include "test_support.hpp"

using namespace fdmnet;
using fdmnet::testing::max_abs_diff;

namespace {

std::vector<double> amplitudes(const Tensor& img) {
  std::vector<double> out;
  for (auto z : oracle::brute_dft(img)) out.push_back(std::abs(z));
  return out;
}

double energy(const Tensor& img) {
  auto s = dft2d_forward(img);
  return full_plane_energy(s);
}

}  // namespace

TEST_CASE("amplitude_only") {
  Rng rng(21);
  for (int t = 0; t < 5; ++t) {
    auto img = random_uniform(rng, {6 + rng.below(4), 5 + rng.below(4), 3}, 0.0, 1.0);
    auto out = amplitude_only(img);
    CHECK(max_abs_diff(amplitudes(out), amplitudes(img)) < 1e-8);

    auto half = oracle::brute_dft(img);
    for (auto& z : half) z = std::abs(z);
    auto ref = oracle::brute_inverse(half, img.dim(0), img.dim(1), 3);
    CHECK(max_abs_diff(out.data(), ref) < 1e-10);
  }
  auto flat = amplitude_only(Tensor::full({4, 4, 1}, 0.3));
  for (double v : flat.data()) CHECK(v == doctest::Approx(0.3));
}

TEST_CASE("phase_only") {
  Rng rng(22);
  auto img = random_uniform(rng, {7, 6, 2}, 0.0, 1.0);
  auto out = phase_only(img);
  for (double a : amplitudes(out)) CHECK(a == doctest::Approx(1.0));

  auto half = oracle::brute_dft(img);
  for (auto& z : half) z = std::abs(z) > 0.0 ? z / std::abs(z) : std::complex<double>(1.0, 0.0);
  CHECK(max_abs_diff(out.data(), oracle::brute_inverse(half, 7, 6, 2)) < 1e-10);

  std::vector<double> imp(5 * 4, 0.0);
  imp[0] = 1.0;
  auto po = phase_only(Tensor::from({5, 4, 1}, imp));
  auto expected = Tensor::from({5, 4, 1}, imp);
  CHECK(max_abs_diff(display_rescale(po), expected) < 1e-12);
  CHECK(po[0] == doctest::Approx(std::sqrt(20.0)));
}

TEST_CASE("radial bands") {
  CHECK(radial_fraction(0, 0, 8, 8) == 0.0);
  CHECK(radial_fraction(4, 4, 8, 8) == doctest::Approx(1.0));
  CHECK(radial_fraction(1, 0, 8, 8) == radial_fraction(7, 0, 8, 8));
  CHECK(radial_fraction(0, 0, 1, 1) == 0.0);

  CHECK_THROWS_AS((RadialBand{BandKind::mid, 0.5, 0.2}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((RadialBand{BandKind::low, 0.1, 0.2}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((RadialBand{BandKind::high, 0.1, 0.9}.validate()), std::invalid_argument);
  CHECK_THROWS_AS(partition_bands(0.5, 0.4), std::invalid_argument);

  Rng rng(23);
  auto img = random_uniform(rng, {9, 8, 3}, 0.0, 1.0);
  CHECK(max_abs_diff(band_filter(img, {BandKind::low, 0.0, 1.0}), img) < 1e-9);
  CHECK(max_abs_diff(band_filter(img, {BandKind::mid, 0.0, 1.0}), img) < 1e-9);

  auto flat = Tensor::full({6, 6, 2}, 0.4);
  CHECK(max_abs_diff(band_filter(flat, {BandKind::low, 0.0, 0.01}), flat) < 1e-12);
  CHECK(max_abs_diff(band_filter(flat, {BandKind::low, 0.0, 0.0}), flat) < 1e-12);
}

TEST_CASE("band partition bookkeeping") {
  Rng rng(24);
  for (int t = 0; t < 10; ++t) {
    std::size_t H = 4 + rng.below(12), W = 4 + rng.below(12);
    auto img = random_uniform(rng, {H, W, 3}, 0.0, 1.0);
    double a = rng.uniform(0.05, 0.45), b = rng.uniform(0.5, 0.95);
    auto bands = partition_bands(a, b);

    double parts = 0.0;
    auto sumimg = Tensor::zeros(img.shape());
    for (const auto& band : bands) {
      auto out = band_filter(img, band);
      parts += energy(out);
      sumimg = add(sumimg, out);
      CHECK(max_abs_diff(band_filter(out, band), out) < 1e-9);

      auto in_bins = oracle::brute_dft(img), out_bins = oracle::brute_dft(out);
      CHECK(oracle::max_phase_gap(out_bins, in_bins, 1e-9) < 1e-6);
    }
    CHECK(std::fabs(parts - energy(img)) < 1e-9 * std::max(1.0, energy(img)));
    // Disjoint masks partition the spectrum, so the pieces add back up.
    CHECK(max_abs_diff(sumimg, img) < 1e-9);
    // Disjoint bands commute.
    auto ab = band_filter(band_filter(img, bands[0]), bands[1]);
    auto ba = band_filter(band_filter(img, bands[1]), bands[0]);
    CHECK(max_abs_diff(ab, ba) < 1e-12);
    for (double v : ab.data()) CHECK(std::fabs(v) < 1e-9);
  }
}

TEST_CASE("display_rescale") {
  auto r = display_rescale(Tensor::from({1, 3, 1}, {-2.0, 0.0, 2.0}));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.5);
  CHECK(r[2] == 1.0);
  auto c = display_rescale(Tensor::full({2, 2, 1}, 7.0));
  for (double v : c.data()) CHECK(v == 0.0);
}
