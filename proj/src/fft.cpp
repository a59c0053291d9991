#include "fdmnet/fft.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace fdmnet {

namespace {

constexpr std::size_t kMaxRadix = 16;

// Radix/remainder pairs, or empty when a prime factor exceeds kMaxRadix.
std::vector<std::size_t> factorize(std::size_t n) {
  std::vector<std::size_t> out;
  std::size_t rest = n;
  auto take = [&](std::size_t p) {
    while (rest % p == 0 && rest > 1) {
      rest /= p;
      out.push_back(p);
      out.push_back(rest);
    }
  };
  take(4);
  take(2);
  for (std::size_t p = 3; p * p <= rest || p <= kMaxRadix; p += 2) {
    if (rest == 1) break;
    if (p > kMaxRadix) return {};
    take(p);
  }
  if (rest > 1) {
    if (rest > kMaxRadix) return {};
    out.push_back(rest);
    out.push_back(1);
  }
  return out;
}

}  // namespace

struct FftPlan::Bluestein {
  std::size_t padded = 0;
  std::vector<Complex> chirp;         // exp(-i pi k^2 / n)
  std::vector<Complex> kernel_fft;    // FFT of the conjugate chirp, wrapped
  std::unique_ptr<FftPlan> inner;
};

FftPlan::FftPlan(std::size_t n) : n_(n) {
  if (n == 0) throw std::invalid_argument("FftPlan: length must be positive");
  twiddles_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddles_[k] = {std::cos(angle), std::sin(angle)};
  }
  if (n == 1) return;
  factors_ = factorize(n);
  if (!factors_.empty()) return;

  auto b = std::make_unique<Bluestein>();
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  b->padded = m;
  b->inner = std::make_unique<FftPlan>(m);
  b->chirp.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small.
    std::size_t k2 = (k * k) % (2 * n);
    double angle = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    b->chirp[k] = {std::cos(angle), std::sin(angle)};
  }
  b->kernel_fft.assign(m, Complex{});
  b->kernel_fft[0] = std::conj(b->chirp[0]);
  for (std::size_t k = 1; k < n; ++k) {
    b->kernel_fft[k] = std::conj(b->chirp[k]);
    b->kernel_fft[m - k] = std::conj(b->chirp[k]);
  }
  b->inner->forward(b->kernel_fft);
  bluestein_ = std::move(b);
}

FftPlan::~FftPlan() = default;
FftPlan::FftPlan(FftPlan&&) noexcept = default;
FftPlan& FftPlan::operator=(FftPlan&&) noexcept = default;

void FftPlan::forward(std::span<Complex> data) const { transform(data, false); }
void FftPlan::inverse(std::span<Complex> data) const { transform(data, true); }

void FftPlan::transform(std::span<Complex> data, bool inverse) const {
  if (data.size() != n_) {
    throw std::invalid_argument("FftPlan: buffer of length " + std::to_string(data.size()) +
                                " given to a plan of length " + std::to_string(n_));
  }
  if (n_ == 1) return;
  // The inverse is conj(F(conj(x))).
  if (inverse) {
    for (auto& v : data) v = std::conj(v);
  }
  if (bluestein_) {
    const auto& b = *bluestein_;
    std::vector<Complex> a(b.padded, Complex{});
    for (std::size_t k = 0; k < n_; ++k) a[k] = data[k] * b.chirp[k];
    b.inner->forward(a);
    for (std::size_t k = 0; k < b.padded; ++k) a[k] *= b.kernel_fft[k];
    b.inner->inverse(a);
    double inv = 1.0 / static_cast<double>(b.padded);
    for (std::size_t k = 0; k < n_; ++k) data[k] = a[k] * inv * b.chirp[k];
  } else {
    std::vector<Complex> in(data.begin(), data.end());
    std::vector<Complex> scratch(kMaxRadix);
    work(data.data(), in.data(), 1, 0, scratch.data());
  }
  if (inverse) {
    for (auto& v : data) v = std::conj(v);
  }
}

void FftPlan::work(Complex* out, const Complex* in, std::size_t stride, std::size_t fi,
                   Complex* scratch) const {
  const std::size_t p = factors_[2 * fi];
  const std::size_t m = factors_[2 * fi + 1];
  if (m == 1) {
    for (std::size_t k = 0; k < p; ++k) out[k] = in[k * stride];
  } else {
    for (std::size_t k = 0; k < p; ++k) work(out + k * m, in + k * stride, stride * p, fi + 1, scratch);
  }

  if (p == 2) {
    for (std::size_t u = 0; u < m; ++u) {
      Complex t = out[u + m] * twiddles_[u * stride];
      out[u + m] = out[u] - t;
      out[u] += t;
    }
    return;
  }
  for (std::size_t u = 0; u < m; ++u) {
    for (std::size_t q = 0, k = u; q < p; ++q, k += m) scratch[q] = out[k];
    for (std::size_t q1 = 0, k = u; q1 < p; ++q1, k += m) {
      std::size_t tw = 0;
      Complex acc = scratch[0];
      for (std::size_t q = 1; q < p; ++q) {
        tw += stride * k;
        tw %= n_;
        acc += scratch[q] * twiddles_[tw];
      }
      out[k] = acc;
    }
  }
}

const FftPlan& fft_plan(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, std::unique_ptr<FftPlan>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<FftPlan>(n);
  return *slot;
}

}  // namespace fdmnet
