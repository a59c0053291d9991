#include "fdmnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fdmnet {

using detail::grad_sink;
using detail::make_output;

namespace {

enum class Broadcast { same, scalar, last_axis };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa == sb) return Broadcast::same;
  if (b.numel() == 1) return Broadcast::scalar;
  if (sa.size() == sb.size() && !sb.empty() && sb.back() == 1 &&
      std::equal(sa.begin(), sa.end() - 1, sb.begin())) {
    return Broadcast::last_axis;
  }
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_string(sa) +
                              " and " + shape_string(sb));
}

std::size_t b_index(Broadcast kind, std::size_t i, std::size_t last) {
  switch (kind) {
    case Broadcast::same: return i;
    case Broadcast::scalar: return 0;
    case Broadcast::last_axis: return i / last;
  }
  return 0;
}

template <typename Fwd, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, DA da, DB db) {
  auto kind = broadcast_kind(a, b, name);
  std::size_t last = a.rank() ? a.shape().back() : 1;
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i], y[b_index(kind, i, last)]);
  return make_output(a.shape(), std::move(out), {&a, &b},
                     [a, b, kind, last, da, db](std::span<const double> g) {
                       auto x = a.data();
                       auto y = b.data();
                       auto ga = grad_sink(a);
                       auto gb = grad_sink(b);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         std::size_t j = b_index(kind, i, last);
                         if (!ga.empty()) ga[i] += g[i] * da(x[i], y[j]);
                         if (!gb.empty()) gb[j] += g[i] * db(x[i], y[j]);
                       }
                     });
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return make_output(a.shape(), std::move(out), {&a}, [a, deriv](std::span<const double> g) {
    auto ga = grad_sink(a);
    if (ga.empty()) return;
    auto x = a.data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(x[i]);
  });
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                ", got shape " + shape_string(t.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return x * factor; }, [factor](double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      a, [value](double x) { return x + value; }, [](double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  auto sig = [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
  };
  return unary(a, sig, [sig](double x) {
    double s = sig(x);
    return s * (1.0 - s);
  });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](double x) { return std::fabs(x); },
      [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor log1p(const Tensor& a) {
  return unary(
      a, [](double x) { return std::log1p(x); }, [](double x) { return 1.0 / (1.0 + x); });
}

Tensor log_clamped(const Tensor& a, double floor) {
  return unary(
      a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x) { return x > floor ? 1.0 / x : 0.0; });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_output({}, {total}, {&a}, [a](std::span<const double> g) {
    auto ga = grad_sink(a);
    for (auto& v : ga) v += g[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw std::invalid_argument("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_string(a.shape()) + " as " +
                                shape_string(shape));
  }
  std::vector<double> values(a.data().begin(), a.data().end());
  return make_output(std::move(shape), std::move(values), {&a}, [a](std::span<const double> g) {
    auto ga = grad_sink(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const auto& ref = parts.front().shape();
  if (axis >= ref.size()) {
    throw std::out_of_range("concat: axis " + std::to_string(axis) + " out of range for rank " +
                            std::to_string(ref.size()));
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  std::size_t trailing = 1;
  for (std::size_t i = axis + 1; i < ref.size(); ++i) trailing *= ref[i];

  Shape out_shape = ref;
  out_shape[axis] = 0;
  std::vector<std::size_t> chunk;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == ref[i];
    if (!ok) {
      throw std::invalid_argument("concat: shape " + shape_string(s) + " incompatible with " +
                                  shape_string(ref) + " on axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
    chunk.push_back(s[axis] * trailing);
  }
  std::size_t row = out_shape[axis] * trailing;
  std::vector<double> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto src = parts[k].data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + o * chunk[k], chunk[k], out.begin() + o * row + offset);
    }
    offset += chunk[k];
  }

  bool record = false;
  for (const auto& p : parts) record = record || p.requires_grad();
  Tensor result = make_output(out_shape, std::move(out), {}, {});
  if (record && !NoGradGuard::enabled()) {
    auto node = result.node();
    node->requires_grad = true;
    node->is_leaf = false;
    Tape::current().record(result, [parts, chunk, outer, row](std::span<const double> g) {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < parts.size(); ++k) {
        auto gp = grad_sink(parts[k]);
        if (!gp.empty()) {
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < chunk[k]; ++i) gp[o * chunk[k] + i] += g[o * row + offset + i];
          }
        }
        offset += chunk[k];
      }
    });
  }
  return result;
}

Tensor index_select(const Tensor& a, std::span<const std::size_t> rows) {
  if (a.rank() == 0) throw std::invalid_argument("index_select: scalar input");
  std::size_t n = a.dim(0);
  std::size_t stride = a.numel() / std::max<std::size_t>(n, 1);
  Shape shape = a.shape();
  shape[0] = rows.size();
  std::vector<double> out(rows.size() * stride);
  auto x = a.data();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) {
      throw std::out_of_range("index_select: row " + std::to_string(rows[r]) + " >= " +
                              std::to_string(n));
    }
    std::copy_n(x.begin() + rows[r] * stride, stride, out.begin() + r * stride);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_output(std::move(shape), std::move(out), {&a},
                     [a, idx, stride](std::span<const double> g) {
                       auto ga = grad_sink(a);
                       if (ga.empty()) return;
                       for (std::size_t r = 0; r < idx.size(); ++r) {
                         for (std::size_t i = 0; i < stride; ++i) ga[idx[r] * stride + i] += g[r * stride + i];
                       }
                     });
}

Tensor group_mean(const Tensor& a, std::span<const std::size_t> group, std::size_t groups) {
  require_rank(a, 2, "group_mean");
  std::size_t n = a.dim(0), d = a.dim(1);
  if (group.size() != n) throw std::invalid_argument("group_mean: label count != rows");
  std::vector<double> count(groups, 0.0);
  for (auto gi : group) {
    if (gi >= groups) throw std::out_of_range("group_mean: group index out of range");
    count[gi] += 1.0;
  }
  std::vector<double> out(groups * d, 0.0);
  auto x = a.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[group[i] * d + j] += x[i * d + j];
  }
  for (std::size_t k = 0; k < groups; ++k) {
    if (count[k] == 0.0) continue;
    for (std::size_t j = 0; j < d; ++j) out[k * d + j] /= count[k];
  }
  std::vector<std::size_t> labels(group.begin(), group.end());
  return make_output({groups, d}, std::move(out), {&a},
                     [a, labels, count, d](std::span<const double> g) {
                       auto ga = grad_sink(a);
                       if (ga.empty()) return;
                       for (std::size_t i = 0; i < labels.size(); ++i) {
                         double w = 1.0 / count[labels[i]];
                         for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += g[labels[i] * d + j] * w;
                       }
                     });
}

Tensor pick(const Tensor& a, std::span<const std::size_t> index) {
  require_rank(a, 2, "pick");
  std::size_t n = a.dim(0), k = a.dim(1);
  if (index.size() != n) throw std::invalid_argument("pick: index count != rows");
  std::vector<double> out(n);
  auto x = a.data();
  for (std::size_t i = 0; i < n; ++i) {
    if (index[i] >= k) {
      throw std::out_of_range("pick: index " + std::to_string(index[i]) + " >= " +
                              std::to_string(k));
    }
    out[i] = x[i * k + index[i]];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_output({n}, std::move(out), {&a}, [a, idx, k](std::span<const double> g) {
    auto ga = grad_sink(a);
    if (ga.empty()) return;
    for (std::size_t i = 0; i < idx.size(); ++i) ga[i * k + idx[i]] += g[i];
  });
}

Tensor row_norm(const Tensor& a) {
  require_rank(a, 2, "row_norm");
  std::size_t n = a.dim(0), d = a.dim(1);
  auto x = a.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x[i * d + j] * x[i * d + j];
    out[i] = std::sqrt(s);
  }
  Tensor result = make_output({n}, out, {&a}, [a, out, d](std::span<const double> g) {
    auto ga = grad_sink(a);
    if (ga.empty()) return;
    auto x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i] == 0.0) continue;
      double w = g[i] / out[i];
      for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += w * x[i * d + j];
    }
  });
  return result;
}

Tensor l2_normalize(const Tensor& a, double eps) {
  require_rank(a, 2, "l2_normalize");
  std::size_t n = a.dim(0), d = a.dim(1);
  auto x = a.data();
  std::vector<double> norms(n), out(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x[i * d + j] * x[i * d + j];
    norms[i] = std::max(std::sqrt(s), eps);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x[i * d + j] / norms[i];
  }
  std::vector<double> y = out;
  return make_output(a.shape(), std::move(out), {&a}, [a, y, norms, d](std::span<const double> g) {
    auto ga = grad_sink(a);
    if (ga.empty()) return;
    for (std::size_t i = 0; i < norms.size(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += g[i * d + j] * y[i * d + j];
      for (std::size_t j = 0; j < d; ++j) {
        ga[i * d + j] += (g[i * d + j] - y[i * d + j] * dot) / norms[i];
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  std::size_t n = x.dim(0), in = x.dim(1), out_dim = weight.dim(1);
  if (weight.dim(0) != in) {
    throw std::invalid_argument("linear: input width " + std::to_string(in) +
                                " does not match weight " + shape_string(weight.shape()));
  }
  if (bias.numel() != out_dim) throw std::invalid_argument("linear: bias size mismatch");
  auto xv = x.data();
  auto w = weight.data();
  auto b = bias.data();
  std::vector<double> out(n * out_dim);
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data() + i * out_dim;
    std::copy(b.begin(), b.end(), o);
    for (std::size_t k = 0; k < in; ++k) {
      double v = xv[i * in + k];
      const double* wr = w.data() + k * out_dim;
      for (std::size_t j = 0; j < out_dim; ++j) o[j] += v * wr[j];
    }
  }
  return make_output({n, out_dim}, std::move(out), {&x, &weight, &bias},
                     [x, weight, bias, n, in, out_dim](std::span<const double> g) {
                       auto gx = grad_sink(x);
                       auto gw = grad_sink(weight);
                       auto gb = grad_sink(bias);
                       auto xv = x.data();
                       auto w = weight.data();
                       for (std::size_t i = 0; i < n; ++i) {
                         const double* gi = g.data() + i * out_dim;
                         if (!gb.empty()) {
                           for (std::size_t j = 0; j < out_dim; ++j) gb[j] += gi[j];
                         }
                         for (std::size_t k = 0; k < in; ++k) {
                           const double* wr = w.data() + k * out_dim;
                           if (!gx.empty()) {
                             double s = 0.0;
                             for (std::size_t j = 0; j < out_dim; ++j) s += gi[j] * wr[j];
                             gx[i * in + k] += s;
                           }
                           if (!gw.empty()) {
                             double v = xv[i * in + k];
                             double* gwr = gw.data() + k * out_dim;
                             for (std::size_t j = 0; j < out_dim; ++j) gwr[j] += v * gi[j];
                           }
                         }
                       }
                     });
}

Tensor log_softmax(const Tensor& logits) {
  if (logits.rank() == 0) throw std::invalid_argument("log_softmax: scalar input");
  std::size_t k = logits.shape().back();
  std::size_t rows = logits.numel() / k;
  auto x = logits.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * k;
    double m = *std::max_element(xr, xr + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(xr[j] - m);
    double lse = m + std::log(s);
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] = xr[j] - lse;
  }
  std::vector<double> y = out;
  return make_output(logits.shape(), std::move(out), {&logits},
                     [logits, y, k, rows](std::span<const double> g) {
                       auto gx = grad_sink(logits);
                       if (gx.empty()) return;
                       for (std::size_t r = 0; r < rows; ++r) {
                         double gs = 0.0;
                         for (std::size_t j = 0; j < k; ++j) gs += g[r * k + j];
                         for (std::size_t j = 0; j < k; ++j) {
                           gx[r * k + j] += g[r * k + j] - std::exp(y[r * k + j]) * gs;
                         }
                       }
                     });
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() == 0) throw std::invalid_argument("softmax: scalar input");
  std::size_t k = logits.shape().back();
  std::size_t rows = logits.numel() / k;
  auto x = logits.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * k;
    double m = *std::max_element(xr, xr + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += (out[r * k + j] = std::exp(xr[j] - m));
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] /= s;
  }
  std::vector<double> y = out;
  return make_output(logits.shape(), std::move(out), {&logits},
                     [logits, y, k, rows](std::span<const double> g) {
                       auto gx = grad_sink(logits);
                       if (gx.empty()) return;
                       for (std::size_t r = 0; r < rows; ++r) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < k; ++j) dot += g[r * k + j] * y[r * k + j];
                         for (std::size_t j = 0; j < k; ++j) {
                           gx[r * k + j] += y[r * k + j] * (g[r * k + j] - dot);
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Convolution and pooling

namespace {

struct ImageDims {
  std::size_t n, h, w, c;
};

ImageDims image_dims(const Tensor& t, const char* op) {
  const auto& s = t.shape();
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  throw std::invalid_argument(std::string(op) + ": expected [h,w,c] or [n,h,w,c], got " +
                              shape_string(s));
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  auto d = image_dims(input, "conv2d");
  require_rank(kernel, 4, "conv2d");
  std::size_t k = kernel.dim(0);
  if ((k != 1 && k != 3) || kernel.dim(1) != k) {
    throw std::invalid_argument("conv2d: kernel must be 1x1 or 3x3, got " +
                                shape_string(kernel.shape()));
  }
  if (kernel.dim(2) != d.c) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(d.c) +
                                " channels but kernel expects " + std::to_string(kernel.dim(2)));
  }
  if (d.h < k || d.w < k) throw std::invalid_argument("conv2d: spatial size smaller than kernel");
  std::size_t cout = kernel.dim(3);
  if (bias.numel() != cout) throw std::invalid_argument("conv2d: bias size mismatch");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);

  Shape out_shape = input.shape();
  out_shape.back() = cout;
  auto x = input.data();
  auto w = kernel.data();
  auto b = bias.data();
  std::vector<double> out(d.n * d.h * d.w * cout);

  const auto H = static_cast<std::ptrdiff_t>(d.h);
  const auto W = static_cast<std::ptrdiff_t>(d.w);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::ptrdiff_t y = 0; y < H; ++y) {
      for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
        double* o = out.data() + ((n * d.h + y) * d.w + xx) * cout;
        std::copy(b.begin(), b.end(), o);
        for (std::size_t ky = 0; ky < k; ++ky) {
          std::ptrdiff_t iy = y + static_cast<std::ptrdiff_t>(ky) - pad;
          if (iy < 0 || iy >= H) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            std::ptrdiff_t ix = xx + static_cast<std::ptrdiff_t>(kx) - pad;
            if (ix < 0 || ix >= W) continue;
            const double* in = x.data() + ((n * d.h + iy) * d.w + ix) * d.c;
            const double* wk = w.data() + (ky * k + kx) * d.c * cout;
            for (std::size_t ci = 0; ci < d.c; ++ci) {
              double v = in[ci];
              const double* wr = wk + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) o[co] += v * wr[co];
            }
          }
        }
      }
    }
  }

  return make_output(
      std::move(out_shape), std::move(out), {&input, &kernel, &bias},
      [input, kernel, bias, d, k, cout, pad](std::span<const double> g) {
        auto gx = grad_sink(input);
        auto gw = grad_sink(kernel);
        auto gb = grad_sink(bias);
        auto x = input.data();
        auto w = kernel.data();
        const auto H = static_cast<std::ptrdiff_t>(d.h);
        const auto W = static_cast<std::ptrdiff_t>(d.w);
        for (std::size_t n = 0; n < d.n; ++n) {
          for (std::ptrdiff_t y = 0; y < H; ++y) {
            for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
              const double* go = g.data() + ((n * d.h + y) * d.w + xx) * cout;
              if (!gb.empty()) {
                for (std::size_t co = 0; co < cout; ++co) gb[co] += go[co];
              }
              for (std::size_t ky = 0; ky < k; ++ky) {
                std::ptrdiff_t iy = y + static_cast<std::ptrdiff_t>(ky) - pad;
                if (iy < 0 || iy >= H) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                  std::ptrdiff_t ix = xx + static_cast<std::ptrdiff_t>(kx) - pad;
                  if (ix < 0 || ix >= W) continue;
                  std::size_t in_off = ((n * d.h + iy) * d.w + ix) * d.c;
                  std::size_t w_off = (ky * k + kx) * d.c * cout;
                  for (std::size_t ci = 0; ci < d.c; ++ci) {
                    const double* wr = w.data() + w_off + ci * cout;
                    if (!gx.empty()) {
                      double s = 0.0;
                      for (std::size_t co = 0; co < cout; ++co) s += go[co] * wr[co];
                      gx[in_off + ci] += s;
                    }
                    if (!gw.empty()) {
                      double v = x[in_off + ci];
                      double* gwr = gw.data() + w_off + ci * cout;
                      for (std::size_t co = 0; co < cout; ++co) gwr[co] += v * go[co];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

Tensor avg_pool2x2(const Tensor& input) {
  auto d = image_dims(input, "avg_pool2x2");
  std::size_t oh = d.h / 2, ow = d.w / 2;
  if (oh == 0 || ow == 0) throw std::invalid_argument("avg_pool2x2: spatial size below 2");
  Shape out_shape = input.shape();
  out_shape[out_shape.size() - 3] = oh;
  out_shape[out_shape.size() - 2] = ow;
  auto x = input.data();
  std::vector<double> out(d.n * oh * ow * d.c, 0.0);
  auto in_at = [d](std::size_t n, std::size_t y, std::size_t xx) {
    return ((n * d.h + y) * d.w + xx) * d.c;
  };
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        double* o = out.data() + ((n * oh + y) * ow + xx) * d.c;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const double* in = x.data() + in_at(n, 2 * y + dy, 2 * xx + dx);
            for (std::size_t c = 0; c < d.c; ++c) o[c] += 0.25 * in[c];
          }
        }
      }
    }
  }
  return make_output(std::move(out_shape), std::move(out), {&input},
                     [input, d, oh, ow, in_at](std::span<const double> g) {
                       auto gx = grad_sink(input);
                       if (gx.empty()) return;
                       for (std::size_t n = 0; n < d.n; ++n) {
                         for (std::size_t y = 0; y < oh; ++y) {
                           for (std::size_t xx = 0; xx < ow; ++xx) {
                             const double* go = g.data() + ((n * oh + y) * ow + xx) * d.c;
                             for (std::size_t dy = 0; dy < 2; ++dy) {
                               for (std::size_t dx = 0; dx < 2; ++dx) {
                                 double* gi = gx.data() + in_at(n, 2 * y + dy, 2 * xx + dx);
                                 for (std::size_t c = 0; c < d.c; ++c) gi[c] += 0.25 * go[c];
                               }
                             }
                           }
                         }
                       }
                     });
}

Tensor channel_avg_pool(const Tensor& input) {
  if (input.rank() == 0) throw std::invalid_argument("channel_avg_pool: scalar input");
  std::size_t c = input.shape().back();
  std::size_t pixels = input.numel() / c;
  auto x = input.data();
  std::vector<double> out(pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += x[p * c + j];
    out[p] = s / static_cast<double>(c);
  }
  Shape shape = input.shape();
  shape.back() = 1;
  return make_output(std::move(shape), std::move(out), {&input},
                     [input, c, pixels](std::span<const double> g) {
                       auto gx = grad_sink(input);
                       if (gx.empty()) return;
                       double inv = 1.0 / static_cast<double>(c);
                       for (std::size_t p = 0; p < pixels; ++p) {
                         for (std::size_t j = 0; j < c; ++j) gx[p * c + j] += g[p] * inv;
                       }
                     });
}

Tensor channel_max_pool(const Tensor& input) {
  if (input.rank() == 0) throw std::invalid_argument("channel_max_pool: scalar input");
  std::size_t c = input.shape().back();
  std::size_t pixels = input.numel() / c;
  auto x = input.data();
  std::vector<double> out(pixels);
  std::vector<std::size_t> arg(pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (x[p * c + j] > x[p * c + best]) best = j;
    }
    arg[p] = best;
    out[p] = x[p * c + best];
  }
  Shape shape = input.shape();
  shape.back() = 1;
  return make_output(std::move(shape), std::move(out), {&input},
                     [input, c, arg](std::span<const double> g) {
                       auto gx = grad_sink(input);
                       if (gx.empty()) return;
                       for (std::size_t p = 0; p < arg.size(); ++p) gx[p * c + arg[p]] += g[p];
                     });
}

Tensor spatial_global_avg_pool(const Tensor& input) {
  auto d = image_dims(input, "spatial_global_avg_pool");
  std::size_t hw = d.h * d.w;
  auto x = input.data();
  std::vector<double> out(d.n * d.c, 0.0);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t c = 0; c < d.c; ++c) out[n * d.c + c] += x[(n * hw + p) * d.c + c];
    }
    for (std::size_t c = 0; c < d.c; ++c) out[n * d.c + c] /= static_cast<double>(hw);
  }
  Shape shape = input.rank() == 3 ? Shape{d.c} : Shape{d.n, d.c};
  return make_output(std::move(shape), std::move(out), {&input},
                     [input, d, hw](std::span<const double> g) {
                       auto gx = grad_sink(input);
                       if (gx.empty()) return;
                       double inv = 1.0 / static_cast<double>(hw);
                       for (std::size_t n = 0; n < d.n; ++n) {
                         for (std::size_t p = 0; p < hw; ++p) {
                           for (std::size_t c = 0; c < d.c; ++c) {
                             gx[(n * hw + p) * d.c + c] += g[n * d.c + c] * inv;
                           }
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Normalization

namespace {

// Normalizes `groups` independent sets of `count` values per channel. Element
// (g, i, c) lives at ((g * count) + i) * channels + c.
struct NormResult {
  std::vector<double> xhat;
  std::vector<double> inv_std;  // per (group, channel)
};

NormResult normalize_groups(std::span<const double> x, std::size_t groups, std::size_t count,
                            std::size_t channels, double eps, std::vector<double>* means,
                            std::vector<double>* vars) {
  NormResult r;
  r.xhat.resize(x.size());
  r.inv_std.resize(groups * channels);
  if (means) means->assign(groups * channels, 0.0);
  if (vars) vars->assign(groups * channels, 0.0);
  std::vector<double> mu(channels), var(channels);
  for (std::size_t g = 0; g < groups; ++g) {
    std::fill(mu.begin(), mu.end(), 0.0);
    std::fill(var.begin(), var.end(), 0.0);
    const double* base = x.data() + g * count * channels;
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t c = 0; c < channels; ++c) mu[c] += base[i * channels + c];
    }
    for (auto& m : mu) m /= static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t c = 0; c < channels; ++c) {
        double dlt = base[i * channels + c] - mu[c];
        var[c] += dlt * dlt;
      }
    }
    for (auto& v : var) v /= static_cast<double>(count);
    for (std::size_t c = 0; c < channels; ++c) {
      double is = 1.0 / std::sqrt(var[c] + eps);
      r.inv_std[g * channels + c] = is;
      if (means) (*means)[g * channels + c] = mu[c];
      if (vars) (*vars)[g * channels + c] = var[c];
      for (std::size_t i = 0; i < count; ++i) {
        std::size_t at = (g * count + i) * channels + c;
        r.xhat[at] = (x[at] - mu[c]) * is;
      }
    }
  }
  return r;
}

// dx for y = xhat * scale[c] with batch statistics.
void normalize_backward(std::span<const double> g, std::span<const double> xhat,
                        std::span<const double> inv_std, std::span<const double> scale,
                        std::size_t groups, std::size_t count, std::size_t channels,
                        std::span<double> gx) {
  std::vector<double> sum_g(channels), sum_gx(channels);
  auto m = static_cast<double>(count);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    std::fill(sum_g.begin(), sum_g.end(), 0.0);
    std::fill(sum_gx.begin(), sum_gx.end(), 0.0);
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t c = 0; c < channels; ++c) {
        std::size_t at = (gi * count + i) * channels + c;
        sum_g[c] += g[at];
        sum_gx[c] += g[at] * xhat[at];
      }
    }
    for (std::size_t c = 0; c < channels; ++c) {
      double coef = scale[c] * inv_std[gi * channels + c] / m;
      for (std::size_t i = 0; i < count; ++i) {
        std::size_t at = (gi * count + i) * channels + c;
        gx[at] += coef * (m * g[at] - sum_g[c] - xhat[at] * sum_gx[c]);
      }
    }
  }
}

}  // namespace

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats* stats, bool training, double eps) {
  if (input.rank() < 2) throw std::invalid_argument("batch_norm: expected a batch axis");
  if (input.dim(0) == 0 || input.numel() == 0) throw std::invalid_argument("batch_norm: empty batch");
  if (eps <= 0.0) throw std::invalid_argument("batch_norm: eps must be positive");
  std::size_t c = input.shape().back();
  if (gamma.numel() != c || beta.numel() != c) {
    throw std::invalid_argument("batch_norm: affine parameters must have " + std::to_string(c) +
                                " entries");
  }
  std::size_t count = input.numel() / c;
  auto x = input.data();
  auto gm = gamma.data();
  auto bt = beta.data();
  std::vector<double> out(x.size());

  if (!training) {
    if (!stats) throw std::invalid_argument("batch_norm: eval mode needs running statistics");
    auto rm = stats->running_mean.data();
    auto rv = stats->running_var.data();
    std::vector<double> inv(c), xhat(x.size());
    for (std::size_t j = 0; j < c; ++j) inv[j] = 1.0 / std::sqrt(rv[j] + eps);
    for (std::size_t i = 0; i < x.size(); ++i) {
      std::size_t j = i % c;
      xhat[i] = (x[i] - rm[j]) * inv[j];
      out[i] = gm[j] * xhat[i] + bt[j];
    }
    return make_output(input.shape(), std::move(out), {&input, &gamma, &beta},
                       [input, gamma, beta, xhat, inv, c](std::span<const double> g) {
                         auto gx = grad_sink(input);
                         auto gg = grad_sink(gamma);
                         auto gb = grad_sink(beta);
                         auto gm = gamma.data();
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           std::size_t j = i % c;
                           if (!gx.empty()) gx[i] += g[i] * gm[j] * inv[j];
                           if (!gg.empty()) gg[j] += g[i] * xhat[i];
                           if (!gb.empty()) gb[j] += g[i];
                         }
                       });
  }

  std::vector<double> means, vars;
  auto norm = normalize_groups(x, 1, count, c, eps, &means, &vars);
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t j = i % c;
    out[i] = gm[j] * norm.xhat[i] + bt[j];
  }
  if (stats) {
    auto rm = stats->running_mean.mutable_data();
    auto rv = stats->running_var.mutable_data();
    double unbias = count > 1 ? static_cast<double>(count) / static_cast<double>(count - 1) : 1.0;
    for (std::size_t j = 0; j < c; ++j) {
      rm[j] = (1.0 - stats->momentum) * rm[j] + stats->momentum * means[j];
      rv[j] = (1.0 - stats->momentum) * rv[j] + stats->momentum * vars[j] * unbias;
    }
  }
  return make_output(input.shape(), std::move(out), {&input, &gamma, &beta},
                     [input, gamma, beta, norm = std::move(norm), c, count](std::span<const double> g) {
                       auto gx = grad_sink(input);
                       auto gg = grad_sink(gamma);
                       auto gb = grad_sink(beta);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         std::size_t j = i % c;
                         if (!gg.empty()) gg[j] += g[i] * norm.xhat[i];
                         if (!gb.empty()) gb[j] += g[i];
                       }
                       if (!gx.empty()) {
                         normalize_backward(g, norm.xhat, norm.inv_std, gamma.data(), 1, count, c, gx);
                       }
                     });
}

Tensor instance_norm(const Tensor& input, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("instance_norm: eps must be positive");
  auto d = image_dims(input, "instance_norm");
  std::size_t count = d.h * d.w;
  auto norm = normalize_groups(input.data(), d.n, count, d.c, eps, nullptr, nullptr);
  std::vector<double> out = norm.xhat;
  return make_output(input.shape(), std::move(out), {&input},
                     [input, norm = std::move(norm), d, count](std::span<const double> g) {
                       auto gx = grad_sink(input);
                       if (gx.empty()) return;
                       std::vector<double> ones(d.c, 1.0);
                       normalize_backward(g, norm.xhat, norm.inv_std, ones, d.n, count, d.c, gx);
                     });
}

}  // namespace fdmnet
