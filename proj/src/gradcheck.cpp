#include "fdmnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fdmnet/fourier.hpp"
#include "fdmnet/iaf.hpp"
#include "fdmnet/losses.hpp"
#include "fdmnet/ops.hpp"
#include "fdmnet/ppnorm.hpp"
#include "fdmnet/random.hpp"

namespace fdmnet {

GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn,
                                std::vector<Tensor> inputs, double step) {
  for (auto& t : inputs) {
    if (!t.is_leaf() || !t.requires_grad()) {
      throw std::invalid_argument("check_gradients: inputs must be leaves requiring grad");
    }
    t.zero_grad();
  }
  auto& tape = Tape::current();
  tape.clear();
  Tensor loss = loss_fn();
  backward(loss);
  tape.clear();

  GradCheckResult result;
  double scale = 1e-6;
  double worst = 0.0;
  for (auto& t : inputs) {
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      double plus, minus;
      {
        NoGradGuard guard;
        values[i] = saved + step;
        plus = loss_fn().item();
        values[i] = saved - step;
        minus = loss_fn().item();
      }
      values[i] = saved;
      double numeric = (plus - minus) / (2.0 * step);
      double err = std::fabs(numeric - analytic[i]);
      worst = std::max(worst, err);
      scale = std::max({scale, std::fabs(numeric), std::fabs(analytic[i])});
      ++result.entries;
      if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
        worst = std::numeric_limits<double>::infinity();
      }
    }
    t.zero_grad();
  }
  result.max_abs_error = worst;
  result.max_rel_error = worst / scale;
  return result;
}

namespace {

using Case = std::function<GradCheckResult(Rng&)>;

Tensor leaf(Rng& rng, Shape shape, double stddev = 1.0) {
  return random_normal(rng, std::move(shape), stddev, true);
}

Tensor positive_leaf(Rng& rng, Shape shape, double lo = 0.2, double hi = 2.0) {
  return random_uniform(rng, std::move(shape), lo, hi, true);
}

// Fixed random weights turn any tensor into a scalar with a generic gradient.
struct Projector {
  Tensor weights;
  Tensor operator()(const Tensor& out) const { return sum(mul(out, weights)); }
};

Projector projector_for(const Tensor& sample, Rng& rng) {
  return {random_normal(rng, sample.shape())};
}

std::vector<std::size_t> random_labels(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> out(n);
  for (auto& v : out) v = rng.below(k);
  return out;
}

// Probability rows bounded away from the clamp floor.
Tensor probability_leaf(Rng& rng, std::size_t n) {
  std::vector<double> v(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    double p = rng.uniform(0.05, 0.95);
    v[2 * i] = p;
    v[2 * i + 1] = 1.0 - p;
  }
  return Tensor::from({n, 2}, std::move(v), true);
}

// Generic check: build random leaves, derive the projection once from a
// probe evaluation, then compare gradients of the projected output.
GradCheckResult projected(Rng& rng, std::vector<Tensor> inputs,
                          const std::function<Tensor()>& f) {
  Tensor probe;
  {
    NoGradGuard guard;
    probe = f();
  }
  Projector proj = projector_for(probe, rng);
  return check_gradients([&] { return proj(f()); }, std::move(inputs));
}

std::vector<std::pair<std::string, Case>> cases() {
  std::vector<std::pair<std::string, Case>> out;
  auto unary = [&](std::string name, std::function<Tensor(const Tensor&)> op, bool positive) {
    out.push_back({std::move(name), [op, positive](Rng& rng) {
                     Tensor a = positive ? positive_leaf(rng, {3, 4}) : leaf(rng, {3, 4});
                     return projected(rng, {a}, [&] { return op(a); });
                   }});
  };
  auto binary = [&](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> op) {
    out.push_back({std::move(name), [op](Rng& rng) {
                     Tensor a = leaf(rng, {2, 3, 4});
                     // Cycle through the three broadcast forms.
                     std::size_t form = rng.below(3);
                     Shape bs = form == 0 ? Shape{2, 3, 4} : form == 1 ? Shape{1} : Shape{2, 3, 1};
                     Tensor b = leaf(rng, bs);
                     return projected(rng, {a, b}, [&] { return op(a, b); });
                   }});
  };

  binary("add", [](const Tensor& a, const Tensor& b) { return add(a, b); });
  binary("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); });
  binary("mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); });
  unary("scale", [](const Tensor& a) { return scale(a, -1.7); }, false);
  unary("add_scalar", [](const Tensor& a) { return add_scalar(a, 0.3); }, false);
  unary("relu", [](const Tensor& a) { return relu(a); }, false);
  unary("sigmoid", [](const Tensor& a) { return sigmoid(a); }, false);
  unary("abs", [](const Tensor& a) { return abs(a); }, false);
  unary("log1p", [](const Tensor& a) { return log1p(a); }, true);
  unary("log_clamped", [](const Tensor& a) { return log_clamped(a); }, true);
  unary("sum", [](const Tensor& a) { return sum(a); }, false);
  unary("mean", [](const Tensor& a) { return mean(a); }, false);
  unary("reshape", [](const Tensor& a) { return reshape(a, {4, 3}); }, false);
  unary("row_norm", [](const Tensor& a) { return row_norm(a); }, false);
  unary("l2_normalize", [](const Tensor& a) { return l2_normalize(a); }, false);
  unary("log_softmax", [](const Tensor& a) { return log_softmax(a); }, false);
  unary("softmax", [](const Tensor& a) { return softmax(a); }, false);

  out.push_back({"concat", [](Rng& rng) {
                   std::size_t axis = rng.below(2);
                   Tensor a = leaf(rng, {2, 3});
                   Tensor b = leaf(rng, axis == 0 ? Shape{1, 3} : Shape{2, 2});
                   return projected(rng, {a, b}, [&] { return concat({a, b}, axis); });
                 }});
  out.push_back({"index_select", [](Rng& rng) {
                   Tensor a = leaf(rng, {4, 3});
                   auto rows = random_labels(rng, 6, 4);
                   return projected(rng, {a}, [&] { return index_select(a, rows); });
                 }});
  out.push_back({"group_mean", [](Rng& rng) {
                   Tensor a = leaf(rng, {6, 3});
                   std::vector<std::size_t> g{0, 1, 2, 0, 1, 2};
                   rng.shuffle(g);
                   return projected(rng, {a}, [&] { return group_mean(a, g, 3); });
                 }});
  out.push_back({"pick", [](Rng& rng) {
                   Tensor a = leaf(rng, {5, 3});
                   auto idx = random_labels(rng, 5, 3);
                   return projected(rng, {a}, [&] { return pick(a, idx); });
                 }});
  out.push_back({"linear", [](Rng& rng) {
                   Tensor x = leaf(rng, {3, 4}), w = leaf(rng, {4, 2}), b = leaf(rng, {2});
                   return projected(rng, {x, w, b}, [&] { return linear(x, w, b); });
                 }});
  out.push_back({"conv2d", [](Rng& rng) {
                   std::size_t k = rng.bernoulli(0.5) ? 3 : 1;
                   Tensor x = leaf(rng, {2, 4, 3, 2}), w = leaf(rng, {k, k, 2, 3}), b = leaf(rng, {3});
                   return projected(rng, {x, w, b}, [&] { return conv2d(x, w, b); });
                 }});
  out.push_back({"avg_pool2x2", [](Rng& rng) {
                   Tensor x = leaf(rng, {2, 4, 5, 2});
                   return projected(rng, {x}, [&] { return avg_pool2x2(x); });
                 }});
  out.push_back({"channel_avg_pool", [](Rng& rng) {
                   Tensor x = leaf(rng, {2, 3, 3, 4});
                   return projected(rng, {x}, [&] { return channel_avg_pool(x); });
                 }});
  out.push_back({"channel_max_pool", [](Rng& rng) {
                   Tensor x = leaf(rng, {2, 3, 3, 4});
                   return projected(rng, {x}, [&] { return channel_max_pool(x); });
                 }});
  out.push_back({"spatial_global_avg_pool", [](Rng& rng) {
                   Tensor x = leaf(rng, {2, 3, 3, 4});
                   return projected(rng, {x}, [&] { return spatial_global_avg_pool(x); });
                 }});
  out.push_back({"batch_norm", [](Rng& rng) {
                   Tensor x = leaf(rng, {3, 2, 2, 3}), g = positive_leaf(rng, {3}), b = leaf(rng, {3});
                   return projected(rng, {x, g, b},
                                    [&] { return batch_norm(x, g, b, nullptr, true); });
                 }});
  out.push_back({"instance_norm", [](Rng& rng) {
                   Tensor x = leaf(rng, {2, 3, 3, 2});
                   return projected(rng, {x}, [&] { return instance_norm(x); });
                 }});

  out.push_back({"dft2d_forward", [](Rng& rng) {
                   Tensor x = leaf(rng, {1 + rng.below(5), 1 + rng.below(5), 2});
                   return projected(rng, {x}, [&] { return dft2d_forward(x).values; });
                 }});
  out.push_back({"dft2d_inverse", [](Rng& rng) {
                   // Perturbing a half-spectrum freely breaks Hermitian symmetry,
                   // so the leaf is the image and the spectrum is rebuilt from it
                   // with a projection applied in the frequency domain.
                   std::size_t h = 2 + rng.below(4), w = 2 + rng.below(4);
                   Tensor x = leaf(rng, {h, w, 2});
                   Tensor gain = positive_leaf(rng, {1, h, w / 2 + 1, 1});
                   return projected(rng, {x, gain}, [&] { return apply_mask(x, gain); });
                 }});
  out.push_back({"decompose", [](Rng& rng) {
                   Tensor x = leaf(rng, {2 + rng.below(4), 2 + rng.below(4), 2});
                   return projected(rng, {x}, [&] {
                     auto p = decompose(dft2d_forward(x));
                     return concat({p.amplitude, p.phase}, 0);
                   });
                 }});
  out.push_back({"compose", [](Rng& rng) {
                   Tensor a = positive_leaf(rng, {3, 2, 2});
                   Tensor ph = random_uniform(rng, {3, 2, 2}, -3.0, 3.0, true);
                   return projected(rng, {a, ph}, [&] {
                     return compose(AmplitudePhase{a, ph, 2}).values;
                   });
                 }});
  out.push_back({"spectrum_polar", [](Rng& rng) {
                   Tensor v = leaf(rng, {3, 2, 2});
                   return projected(rng, {v}, [&] {
                     return spectrum_from_polar(spectrum_amplitude(v), scale(spectrum_phase(v), 0.5));
                   });
                 }});

  out.push_back({"iaf_forward", [](Rng& rng) {
                   IafConfig cfg;
                   cfg.channels = 2;
                   cfg.hidden = 3;
                   cfg.log_amplitude = rng.bernoulli(0.5);
                   Rng init = rng.fork(1);
                   auto params = IafParams::init(cfg, init);
                   Tensor x = positive_leaf(rng, {2, 3 + rng.below(2), 4 + rng.below(2), 2}, 0.0, 1.0);
                   std::vector<Tensor> inputs{x};
                   for (auto& t : tensors_of(params.parameters(""))) inputs.push_back(t);
                   return projected(rng, inputs,
                                    [&] { return apply_filter(x, params, true, false).filtered; });
                 }});
  out.push_back({"ppnorm", [](Rng& rng) {
                   Tensor z = leaf(rng, {2, 2 + rng.below(3), 2 + rng.below(3), 2});
                   return projected(rng, {z}, [&] { return ppnorm_forward(z); });
                 }});

  out.push_back({"consistency_loss", [](Rng& rng) {
                   Tensor a = leaf(rng, {3, 2, 2, 2}), b = leaf(rng, {3, 2, 2, 2});
                   return check_gradients([&] { return consistency_loss(a, b); }, {a, b});
                 }});
  out.push_back({"discriminator_loss", [](Rng& rng) {
                   Tensor p = probability_leaf(rng, 6);
                   auto t = random_labels(rng, 6, 2);
                   // The step stays inside the loss's row-sum tolerance.
                   return check_gradients([&] { return discriminator_loss(p, t); }, {p}, 1e-7);
                 }});
  out.push_back({"confusion_loss", [](Rng& rng) {
                   Tensor p = probability_leaf(rng, 6);
                   return check_gradients([&] { return confusion_loss(p); }, {p}, 1e-7);
                 }});
  out.push_back({"cross_entropy", [](Rng& rng) {
                   Tensor l = leaf(rng, {5, 4});
                   auto y = random_labels(rng, 5, 4);
                   return check_gradients([&] { return cross_entropy(l, y); }, {l});
                 }});
  out.push_back({"identity_loss", [](Rng& rng) {
                   Tensor lv = leaf(rng, {4, 5}), li = leaf(rng, {3, 5});
                   auto yv = random_labels(rng, 4, 5), yi = random_labels(rng, 3, 5);
                   return check_gradients([&] { return identity_loss(lv, yv, li, yi); }, {lv, li});
                 }});
  out.push_back({"center_cluster_loss", [](Rng& rng) {
                   Tensor f = leaf(rng, {8, 3});
                   std::vector<std::size_t> y{4, 4, 9, 9, 1, 1, 4, 9};
                   rng.shuffle(y);
                   double rho = rng.uniform(0.5, 3.0);
                   return check_gradients([&] { return center_cluster_loss(f, y, rho); }, {f});
                 }});
  return out;
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck_suite(std::uint64_t seed, std::size_t instances,
                                              double tolerance) {
  std::vector<GradCheckRow> rows;
  Rng root(seed);
  for (auto& [name, run] : cases()) {
    GradCheckRow row{name, 0, 0.0, true};
    Rng rng = root.fork(rows.size());
    for (std::size_t i = 0; i < instances; ++i) {
      auto r = run(rng);
      row.max_rel_error = std::max(row.max_rel_error, r.max_rel_error);
      ++row.instances;
    }
    row.passed = row.instances >= instances && row.max_rel_error < tolerance;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace fdmnet
