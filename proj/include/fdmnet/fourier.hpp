#pragma once

#include <cstddef>

#include "fdmnet/tensor.hpp"

namespace fdmnet {

/// Largest imaginary residue tolerated when inverting a half-spectrum. A
/// larger residue means the implied full spectrum is not Hermitian.
inline constexpr double kHermitianResidueLimit = 1e-6;

inline std::size_t half_width(std::size_t width) { return width / 2 + 1; }

// Number of full-plane bins a half-spectrum column stands for (1 for the
// self-conjugate columns, 2 otherwise).
inline double column_multiplicity(std::size_t column, std::size_t width) {
  bool self_conjugate = column == 0 || (width % 2 == 0 && column == width / 2);
  return self_conjugate ? 1.0 : 2.0;
}

/// Non-redundant half of the unitary 2D spectrum of a real raster.
/// `values` has shape [H, W/2+1, C, 2] or [N, H, W/2+1, C, 2], with the
/// trailing axis holding (real, imaginary).
struct HalfSpectrum {
  Tensor values;
  std::size_t width = 0;

  std::size_t height() const;
  std::size_t channels() const;
  std::size_t batch() const;
  bool batched() const { return values.rank() == 5; }
};

/// Polar view of a half-spectrum: amplitude >= 0 and phase in (-pi, pi].
struct AmplitudePhase {
  Tensor amplitude;
  Tensor phase;
  std::size_t width = 0;
};

// Per-channel 2D DFT scaled by 1/sqrt(HW); input [H,W,C] or [N,H,W,C].
HalfSpectrum dft2d_forward(const Tensor& image);
// Real raster from a half-spectrum; throws std::domain_error when the implied
// spectrum is not Hermitian (imaginary residue >= kHermitianResidueLimit).
Tensor dft2d_inverse(const HalfSpectrum& spectrum);

AmplitudePhase decompose(const HalfSpectrum& spectrum);
HalfSpectrum compose(const AmplitudePhase& polar);

// Elementwise polar ops on a trailing (real, imag) axis; differentiable.
// Zero-magnitude bins have phase 0 and zero gradient.
Tensor spectrum_amplitude(const Tensor& values);
Tensor spectrum_phase(const Tensor& values);
Tensor spectrum_from_polar(const Tensor& amplitude, const Tensor& phase);

// Sum of squared amplitudes over the implied full plane.
double full_plane_energy(const HalfSpectrum& spectrum);

}  // namespace fdmnet
