#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace fdmnet {

using Complex = std::complex<double>;

/// Unnormalized 1D complex FFT of a fixed length. Lengths factor into radices
/// up to 16 handled by Cooley-Tukey butterflies; a length with a larger prime
/// factor is evaluated with Bluestein's chirp-z algorithm over a power of two.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);
  ~FftPlan();
  FftPlan(FftPlan&&) noexcept;
  FftPlan& operator=(FftPlan&&) noexcept;

  std::size_t size() const { return n_; }

  // X[k] = sum_j x[j] exp(-2 pi i jk/n), in place.
  void forward(std::span<Complex> data) const;
  // x[j] = sum_k X[k] exp(+2 pi i jk/n), in place (no 1/n factor).
  void inverse(std::span<Complex> data) const;

 private:
  struct Bluestein;

  void transform(std::span<Complex> data, bool inverse) const;
  void work(Complex* out, const Complex* in, std::size_t stride, std::size_t factor_index,
            Complex* scratch) const;

  std::size_t n_ = 0;
  std::vector<std::size_t> factors_;  // radix, remaining length pairs
  std::vector<Complex> twiddles_;     // exp(-2 pi i k / n)
  std::unique_ptr<Bluestein> bluestein_;
};

/// Shared plan for a length; plans are built once and cached process-wide.
const FftPlan& fft_plan(std::size_t n);

}  // namespace fdmnet
