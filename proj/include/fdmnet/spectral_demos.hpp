#pragma once

#include <string>
#include <vector>

#include "fdmnet/tensor.hpp"

namespace fdmnet {

enum class BandKind { low, mid, high };

std::string to_string(BandKind kind);

/// Annulus of the centered spectrum in units of the largest corner radius.
/// A bin with radius r is kept when r0 <= r < r1; r1 = 1 also keeps r = 1.
struct RadialBand {
  BandKind kind = BandKind::low;
  double r0 = 0.0;
  double r1 = 1.0;

  // Throws std::invalid_argument unless 0 <= r0 <= r1 <= 1, low starts at 0
  // and high ends at 1.
  void validate() const;
  bool keeps(double radius) const;
};

// Low/mid/high partition split at `a` and `b` (0 < a < b < 1).
std::vector<RadialBand> partition_bands(double a, double b);

// Normalized centered radius of half-spectrum bin (u, v) of an H x W raster.
double radial_fraction(std::size_t u, std::size_t v, std::size_t height, std::size_t width);

// Reconstruction from the amplitude with every phase set to 0 ([H,W,C]).
Tensor amplitude_only(const Tensor& image);
// Reconstruction from the phase with every amplitude set to 1.
Tensor phase_only(const Tensor& image);
// Zeroes the amplitude outside the band and keeps the phase.
Tensor band_filter(const Tensor& image, const RadialBand& band);

// Per-image affine map of min to 0 and max to 1; a constant image maps to 0.
Tensor display_rescale(const Tensor& image);

}  // namespace fdmnet
