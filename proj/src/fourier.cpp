#include "fdmnet/fourier.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "fdmnet/fft.hpp"

namespace fdmnet {

using detail::grad_sink;
using detail::make_output;

namespace {

struct Dims {
  std::size_t n, h, w, c;
  std::size_t wh() const { return half_width(w); }
  double scale() const { return 1.0 / std::sqrt(static_cast<double>(h * w)); }
};

Dims image_dims(const Tensor& image) {
  const auto& s = image.shape();
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  throw std::invalid_argument("dft2d: expected [H,W,C] or [N,H,W,C], got " + shape_string(s));
}

// Half-spectrum offsets: ((n*H + u)*Wh + v)*C + c, times 2 for (re, im).
inline std::size_t spec_at(const Dims& d, std::size_t n, std::size_t u, std::size_t v,
                           std::size_t c) {
  return (((n * d.h + u) * d.wh() + v) * d.c + c) * 2;
}

inline std::size_t pix_at(const Dims& d, std::size_t n, std::size_t y, std::size_t x,
                          std::size_t c) {
  return ((n * d.h + y) * d.w + x) * d.c + c;
}

// S = scale * DFT_H(first Wh columns of DFT_W(x)).
std::vector<double> forward_raw(const Dims& d, std::span<const double> x) {
  const auto& plan_w = fft_plan(d.w);
  const auto& plan_h = fft_plan(d.h);
  std::size_t wh = d.wh();
  std::vector<double> out(d.n * d.h * wh * d.c * 2);
  std::vector<Complex> row(d.w), col(d.h), tmp(d.h * wh);
  double s = d.scale();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      for (std::size_t y = 0; y < d.h; ++y) {
        for (std::size_t xx = 0; xx < d.w; ++xx) row[xx] = x[pix_at(d, n, y, xx, c)];
        plan_w.forward(row);
        for (std::size_t v = 0; v < wh; ++v) tmp[y * wh + v] = row[v];
      }
      for (std::size_t v = 0; v < wh; ++v) {
        for (std::size_t y = 0; y < d.h; ++y) col[y] = tmp[y * wh + v];
        plan_h.forward(col);
        for (std::size_t u = 0; u < d.h; ++u) {
          auto at = spec_at(d, n, u, v, c);
          out[at] = col[u].real() * s;
          out[at + 1] = col[u].imag() * s;
        }
      }
    }
  }
  return out;
}

// x = scale * Re(IDFT_W(hermitian_extend(IDFT_H(S)))); reports the largest
// discarded imaginary part.
std::vector<double> inverse_raw(const Dims& d, std::span<const double> spec, double* residue) {
  const auto& plan_w = fft_plan(d.w);
  const auto& plan_h = fft_plan(d.h);
  std::size_t wh = d.wh();
  std::vector<double> out(d.n * d.h * d.w * d.c);
  std::vector<Complex> row(d.w), col(d.h), tmp(d.h * wh);
  double s = d.scale();
  double worst = 0.0;
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      for (std::size_t v = 0; v < wh; ++v) {
        for (std::size_t u = 0; u < d.h; ++u) {
          auto at = spec_at(d, n, u, v, c);
          col[u] = {spec[at], spec[at + 1]};
        }
        plan_h.inverse(col);
        for (std::size_t y = 0; y < d.h; ++y) tmp[y * wh + v] = col[y];
      }
      for (std::size_t y = 0; y < d.h; ++y) {
        for (std::size_t v = 0; v < wh; ++v) row[v] = tmp[y * wh + v];
        for (std::size_t v = wh; v < d.w; ++v) row[v] = std::conj(tmp[y * wh + (d.w - v)]);
        plan_w.inverse(row);
        for (std::size_t xx = 0; xx < d.w; ++xx) {
          out[pix_at(d, n, y, xx, c)] = row[xx].real() * s;
          worst = std::max(worst, std::fabs(row[xx].imag() * s));
        }
      }
    }
  }
  if (residue) *residue = worst;
  return out;
}

// Adjoint of forward_raw: scale * Re(IDFT_W(zero_pad(IDFT_H(G)))).
std::vector<double> forward_adjoint(const Dims& d, std::span<const double> g) {
  const auto& plan_w = fft_plan(d.w);
  const auto& plan_h = fft_plan(d.h);
  std::size_t wh = d.wh();
  std::vector<double> out(d.n * d.h * d.w * d.c);
  std::vector<Complex> row(d.w), col(d.h), tmp(d.h * wh);
  double s = d.scale();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      for (std::size_t v = 0; v < wh; ++v) {
        for (std::size_t u = 0; u < d.h; ++u) {
          auto at = spec_at(d, n, u, v, c);
          col[u] = {g[at], g[at + 1]};
        }
        plan_h.inverse(col);
        for (std::size_t y = 0; y < d.h; ++y) tmp[y * wh + v] = col[y];
      }
      for (std::size_t y = 0; y < d.h; ++y) {
        for (std::size_t v = 0; v < d.w; ++v) row[v] = v < wh ? tmp[y * wh + v] : Complex{};
        plan_w.inverse(row);
        for (std::size_t xx = 0; xx < d.w; ++xx) out[pix_at(d, n, y, xx, c)] = row[xx].real() * s;
      }
    }
  }
  return out;
}

// Adjoint of inverse_raw: scale * DFT_H(extend_adjoint(DFT_W(g))).
std::vector<double> inverse_adjoint(const Dims& d, std::span<const double> g) {
  const auto& plan_w = fft_plan(d.w);
  const auto& plan_h = fft_plan(d.h);
  std::size_t wh = d.wh();
  std::vector<double> out(d.n * d.h * wh * d.c * 2);
  std::vector<Complex> row(d.w), col(d.h), tmp(d.h * wh);
  double s = d.scale();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      for (std::size_t y = 0; y < d.h; ++y) {
        for (std::size_t xx = 0; xx < d.w; ++xx) row[xx] = g[pix_at(d, n, y, xx, c)];
        plan_w.forward(row);
        for (std::size_t v = 0; v < wh; ++v) {
          Complex acc = row[v];
          // Columns mirrored into the upper half during the inverse.
          if (v >= 1 && v <= d.w - wh) acc += std::conj(row[d.w - v]);
          tmp[y * wh + v] = acc;
        }
      }
      for (std::size_t v = 0; v < wh; ++v) {
        for (std::size_t y = 0; y < d.h; ++y) col[y] = tmp[y * wh + v];
        plan_h.forward(col);
        for (std::size_t u = 0; u < d.h; ++u) {
          auto at = spec_at(d, n, u, v, c);
          out[at] = col[u].real() * s;
          out[at + 1] = col[u].imag() * s;
        }
      }
    }
  }
  return out;
}

Dims spectrum_dims(const HalfSpectrum& spectrum) {
  const auto& s = spectrum.values.shape();
  if ((s.size() != 4 && s.size() != 5) || s.back() != 2) {
    throw std::invalid_argument("HalfSpectrum: expected [H,Wh,C,2] or [N,H,Wh,C,2], got " +
                                shape_string(s));
  }
  std::size_t off = s.size() == 5 ? 1 : 0;
  Dims d{off ? s[0] : 1, s[off], spectrum.width, s[off + 2]};
  if (d.w == 0 || s[off + 1] != half_width(d.w)) {
    throw std::invalid_argument("HalfSpectrum: " + std::to_string(s[off + 1]) +
                                " columns do not describe a width-" + std::to_string(d.w) +
                                " raster");
  }
  return d;
}

double wrap_phase(double p) {
  // atan2 yields -pi for a negative real axis with a negative-zero imaginary part.
  return p <= -std::numbers::pi ? std::numbers::pi : p;
}

}  // namespace

std::size_t HalfSpectrum::height() const { return spectrum_dims(*this).h; }
std::size_t HalfSpectrum::channels() const { return spectrum_dims(*this).c; }
std::size_t HalfSpectrum::batch() const { return spectrum_dims(*this).n; }

HalfSpectrum dft2d_forward(const Tensor& image) {
  Dims d = image_dims(image);
  if (d.h == 0 || d.w == 0) throw std::invalid_argument("dft2d_forward: empty raster");
  Shape shape = image.shape();
  shape[shape.size() - 2] = d.wh();
  shape.push_back(2);
  auto values = forward_raw(d, image.data());
  Tensor out = make_output(std::move(shape), std::move(values), {&image},
                           [image, d](std::span<const double> g) {
                             auto gx = grad_sink(image);
                             if (gx.empty()) return;
                             auto adj = forward_adjoint(d, g);
                             for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += adj[i];
                           });
  return {out, d.w};
}

Tensor dft2d_inverse(const HalfSpectrum& spectrum) {
  Dims d = spectrum_dims(spectrum);
  double residue = 0.0;
  auto values = inverse_raw(d, spectrum.values.data(), &residue);
  if (!(residue < kHermitianResidueLimit)) {
    std::ostringstream os;
    os << "dft2d_inverse: imaginary residue " << residue
       << " exceeds tolerance; the half-spectrum is not Hermitian-consistent";
    throw std::domain_error(os.str());
  }
  Shape shape = spectrum.values.shape();
  shape.pop_back();
  shape[shape.size() - 2] = d.w;
  const Tensor& in = spectrum.values;
  return make_output(std::move(shape), std::move(values), {&in},
                     [in, d](std::span<const double> g) {
                       auto gs = grad_sink(in);
                       if (gs.empty()) return;
                       auto adj = inverse_adjoint(d, g);
                       for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += adj[i];
                     });
}

Tensor spectrum_amplitude(const Tensor& values) {
  if (values.rank() == 0 || values.shape().back() != 2) {
    throw std::invalid_argument("spectrum_amplitude: trailing axis must hold (re, im)");
  }
  auto x = values.data();
  std::size_t bins = x.size() / 2;
  std::vector<double> out(bins);
  for (std::size_t i = 0; i < bins; ++i) out[i] = std::hypot(x[2 * i], x[2 * i + 1]);
  Shape shape = values.shape();
  shape.pop_back();
  std::vector<double> amp = out;
  return make_output(std::move(shape), std::move(out), {&values},
                     [values, amp](std::span<const double> g) {
                       auto gv = grad_sink(values);
                       if (gv.empty()) return;
                       auto x = values.data();
                       for (std::size_t i = 0; i < amp.size(); ++i) {
                         if (amp[i] == 0.0) continue;
                         gv[2 * i] += g[i] * x[2 * i] / amp[i];
                         gv[2 * i + 1] += g[i] * x[2 * i + 1] / amp[i];
                       }
                     });
}

Tensor spectrum_phase(const Tensor& values) {
  if (values.rank() == 0 || values.shape().back() != 2) {
    throw std::invalid_argument("spectrum_phase: trailing axis must hold (re, im)");
  }
  auto x = values.data();
  std::size_t bins = x.size() / 2;
  std::vector<double> out(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    double re = x[2 * i], im = x[2 * i + 1];
    out[i] = (re == 0.0 && im == 0.0) ? 0.0 : wrap_phase(std::atan2(im, re));
  }
  Shape shape = values.shape();
  shape.pop_back();
  return make_output(std::move(shape), std::move(out), {&values},
                     [values](std::span<const double> g) {
                       auto gv = grad_sink(values);
                       if (gv.empty()) return;
                       auto x = values.data();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         double re = x[2 * i], im = x[2 * i + 1];
                         double a2 = re * re + im * im;
                         if (a2 == 0.0) continue;
                         gv[2 * i] += -g[i] * im / a2;
                         gv[2 * i + 1] += g[i] * re / a2;
                       }
                     });
}

Tensor spectrum_from_polar(const Tensor& amplitude, const Tensor& phase) {
  if (amplitude.shape() != phase.shape()) {
    throw std::invalid_argument("spectrum_from_polar: amplitude " +
                                shape_string(amplitude.shape()) + " vs phase " +
                                shape_string(phase.shape()));
  }
  auto a = amplitude.data();
  auto p = phase.data();
  std::vector<double> out(a.size() * 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[2 * i] = a[i] * std::cos(p[i]);
    out[2 * i + 1] = a[i] * std::sin(p[i]);
  }
  Shape shape = amplitude.shape();
  shape.push_back(2);
  return make_output(std::move(shape), std::move(out), {&amplitude, &phase},
                     [amplitude, phase](std::span<const double> g) {
                       auto ga = grad_sink(amplitude);
                       auto gp = grad_sink(phase);
                       auto a = amplitude.data();
                       auto p = phase.data();
                       for (std::size_t i = 0; i < a.size(); ++i) {
                         double cs = std::cos(p[i]), sn = std::sin(p[i]);
                         double gr = g[2 * i], gi = g[2 * i + 1];
                         if (!ga.empty()) ga[i] += gr * cs + gi * sn;
                         if (!gp.empty()) gp[i] += a[i] * (gi * cs - gr * sn);
                       }
                     });
}

AmplitudePhase decompose(const HalfSpectrum& spectrum) {
  spectrum_dims(spectrum);
  return {spectrum_amplitude(spectrum.values), spectrum_phase(spectrum.values), spectrum.width};
}

HalfSpectrum compose(const AmplitudePhase& polar) {
  return {spectrum_from_polar(polar.amplitude, polar.phase), polar.width};
}

double full_plane_energy(const HalfSpectrum& spectrum) {
  Dims d = spectrum_dims(spectrum);
  auto x = spectrum.values.data();
  double total = 0.0;
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t u = 0; u < d.h; ++u) {
      for (std::size_t v = 0; v < d.wh(); ++v) {
        double m = column_multiplicity(v, d.w);
        for (std::size_t c = 0; c < d.c; ++c) {
          auto at = spec_at(d, n, u, v, c);
          total += m * (x[at] * x[at] + x[at + 1] * x[at + 1]);
        }
      }
    }
  }
  return total;
}

}  // namespace fdmnet
