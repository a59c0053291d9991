#include "fdmnet/spectral_demos.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fdmnet/fourier.hpp"
#include "fdmnet/ops.hpp"

namespace fdmnet {

std::string to_string(BandKind kind) {
  switch (kind) {
    case BandKind::low:
      return "low";
    case BandKind::mid:
      return "mid";
    case BandKind::high:
      return "high";
  }
  return "?";
}

void RadialBand::validate() const {
  if (!(r0 >= 0.0 && r1 <= 1.0 && r0 <= r1)) {
    throw std::invalid_argument("band " + to_string(kind) + ": need 0 <= r0 <= r1 <= 1, got [" +
                                std::to_string(r0) + ", " + std::to_string(r1) + "]");
  }
  if (kind == BandKind::low && r0 != 0.0) throw std::invalid_argument("low band must start at 0");
  if (kind == BandKind::high && r1 != 1.0) throw std::invalid_argument("high band must end at 1");
}

bool RadialBand::keeps(double radius) const {
  if (kind == BandKind::low && radius == 0.0) return true;
  return radius >= r0 && (radius < r1 || r1 >= 1.0);
}

std::vector<RadialBand> partition_bands(double a, double b) {
  if (!(a > 0.0 && a < b && b < 1.0)) {
    throw std::invalid_argument("band cutoffs must satisfy 0 < a < b < 1");
  }
  return {{BandKind::low, 0.0, a}, {BandKind::mid, a, b}, {BandKind::high, b, 1.0}};
}

double radial_fraction(std::size_t u, std::size_t v, std::size_t height, std::size_t width) {
  double H = static_cast<double>(height), W = static_cast<double>(width);
  double fu = u <= height / 2 ? static_cast<double>(u) : static_cast<double>(u) - H;
  double fv = static_cast<double>(v);
  double ru = static_cast<double>(height / 2) / H, rv = static_cast<double>(width / 2) / W;
  double rmax = std::sqrt(ru * ru + rv * rv);
  if (rmax == 0.0) return 0.0;
  return std::sqrt((fu / H) * (fu / H) + (fv / W) * (fv / W)) / rmax;
}

namespace {

void require_image(const Tensor& image, const char* who) {
  if (image.rank() != 3) {
    throw std::invalid_argument(std::string(who) + ": expected [H,W,C], got " +
                                shape_string(image.shape()));
  }
}

}  // namespace

Tensor amplitude_only(const Tensor& image) {
  require_image(image, "amplitude_only");
  auto ap = decompose(dft2d_forward(image));
  ap.phase = Tensor::zeros(ap.phase.shape());
  return dft2d_inverse(compose(ap));
}

Tensor phase_only(const Tensor& image) {
  require_image(image, "phase_only");
  auto ap = decompose(dft2d_forward(image));
  ap.amplitude = Tensor::full(ap.amplitude.shape(), 1.0);
  return dft2d_inverse(compose(ap));
}

Tensor band_filter(const Tensor& image, const RadialBand& band) {
  require_image(image, "band_filter");
  band.validate();
  auto ap = decompose(dft2d_forward(image));
  std::size_t H = image.dim(0), W = image.dim(1), C = image.dim(2), Wh = half_width(W);
  std::vector<double> keep(H * Wh * C);
  for (std::size_t u = 0; u < H; ++u)
    for (std::size_t v = 0; v < Wh; ++v) {
      double k = band.keeps(radial_fraction(u, v, H, W)) ? 1.0 : 0.0;
      std::fill_n(keep.begin() + static_cast<std::ptrdiff_t>((u * Wh + v) * C), C, k);
    }
  ap.amplitude = mul(ap.amplitude, Tensor::from(ap.amplitude.shape(), std::move(keep)));
  return dft2d_inverse(compose(ap));
}

Tensor display_rescale(const Tensor& image) {
  auto x = image.data();
  if (x.empty()) return image.detach();
  auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  double span = *hi - *lo;
  std::vector<double> out(x.size(), 0.0);
  if (span > 0.0) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - *lo) / span;
  }
  return Tensor::from(image.shape(), std::move(out));
}

}  // namespace fdmnet
