#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "fdmnet/gradcheck.hpp"
#include "fdmnet/losses.hpp"
#include "fdmnet/ops.hpp"
#include "fdmnet/random.hpp"

using namespace fdmnet;

namespace {

Tensor pairs(std::vector<double> v) {
  std::size_t rows = v.size() / 2;
  return Tensor::from({rows, 2}, std::move(v));
}

}  // namespace

TEST_CASE("consistency_loss") {
  Rng rng(41);
  auto a = random_normal(rng, {3, 4, 4, 3});
  CHECK(consistency_loss(a, a).item() == 0.0);
  auto x = Tensor::full({1, 2, 2, 1}, 0.75), y = Tensor::full({1, 2, 2, 1}, 0.25);
  CHECK(consistency_loss(x, y).item() == doctest::Approx(2.0).epsilon(1e-15));
  auto b = random_normal(rng, {3, 4, 4, 3});
  CHECK(consistency_loss(a, b).item() == consistency_loss(b, a).item());
  CHECK_THROWS_AS(consistency_loss(a, Tensor::zeros({3, 4, 4, 1})), std::invalid_argument);
}

TEST_CASE("discriminator_loss") {
  std::vector<std::size_t> vis{0}, both{0, 1};
  CHECK(discriminator_loss(pairs({1.0 - 1e-12, 1e-12}), vis).item() < 1e-11);
  CHECK(discriminator_loss(pairs({1.0, 0.0}), vis).item() == 0.0);
  CHECK(std::fabs(discriminator_loss(pairs({0.5, 0.5}), vis).item() - std::log(2.0)) < 1e-12);
  double expect = -(std::log(0.9) + std::log(0.8)) / 2.0;
  CHECK(discriminator_loss(pairs({0.9, 0.1, 0.2, 0.8}), both).item() == doctest::Approx(expect));
  CHECK(expect == doctest::Approx(0.1643).epsilon(1e-3));
  CHECK_THROWS_AS(discriminator_loss(pairs({0.7, 0.7}), vis), std::invalid_argument);
  std::vector<std::size_t> bad{2};
  CHECK_THROWS_AS(discriminator_loss(pairs({0.5, 0.5}), bad), std::out_of_range);
}

TEST_CASE("confusion_loss") {
  CHECK(std::fabs(confusion_loss(pairs({0.5, 0.5})).item() - std::log(2.0)) < 1e-12);
  double v = confusion_loss(pairs({0.9, 0.1})).item();
  CHECK(v == doctest::Approx(-0.5 * (std::log(0.9) + std::log(0.1))));
  CHECK(v == doctest::Approx(1.2040).epsilon(1e-4));
  CHECK(confusion_loss(pairs({0.1, 0.9})).item() == v);
  // Grid over the simplex: the minimum sits at the uniform prediction.
  double best = INFINITY, arg = -1;
  for (int k = 1; k < 100; ++k) {
    double p = k / 100.0;
    double l = confusion_loss(pairs({p, 1.0 - p})).item();
    CHECK(l >= std::log(2.0) - 1e-12);
    if (l < best) best = l, arg = p;
  }
  CHECK(arg == 0.5);
}

TEST_CASE("identity_loss") {
  std::vector<std::size_t> zero{0};
  auto lv = Tensor::from({1, 2}, {2.0, 0.0}), li = Tensor::from({1, 2}, {0.0, 1.0});
  double v = identity_loss(lv, zero, li, zero).item();
  double expect = std::log1p(std::exp(-2.0)) + std::log1p(std::exp(1.0));
  CHECK(v == doctest::Approx(expect).epsilon(1e-14));
  CHECK(v == doctest::Approx(1.4402).epsilon(1e-4));

  std::vector<std::size_t> labels{0, 1, 2, 3, 1};
  auto u = Tensor::zeros({5, 4});
  CHECK(identity_loss(u, labels, u, labels).item() == doctest::Approx(2.0 * std::log(4.0)));

  auto sharp = Tensor::from({2, 3}, {40.0, 0.0, 0.0, 0.0, 0.0, 40.0});
  std::vector<std::size_t> hits{0, 2};
  CHECK(identity_loss(sharp, hits, sharp, hits).item() < 1e-15);

  std::vector<std::size_t> oob{4};
  CHECK_THROWS_AS(cross_entropy(Tensor::zeros({1, 4}), oob), std::out_of_range);
}

TEST_CASE("center_cluster_loss") {
  SUBCASE("features at centers, separated centers") {
    auto f = Tensor::from({4, 2}, {0, 0, 0, 0, 3, 0, 3, 0});
    std::vector<std::size_t> y{7, 7, 2, 2};
    CHECK(center_cluster_loss(f, y, 1.0).item() == 0.0);
  }
  SUBCASE("two identities closer than the margin") {
    double d = 0.3, rho = 1.0;
    auto f = Tensor::from({2, 2}, {0, 0, d, 0});
    std::vector<std::size_t> y{0, 1};
    CHECK(center_cluster_loss(f, y, rho).item() == rho - d);
  }
  SUBCASE("single identity") {
    auto f = Tensor::from({2, 3}, {1, 1, 0, 1, -1, 0});
    std::vector<std::size_t> y{5, 5};
    CHECK(center_cluster_loss(f, y, 3.0).item() == 1.0);
  }
  SUBCASE("three identities, hand evaluation") {
    // centers (0,0), (0.5,0), (0,2); pair gaps 0.5, 2, sqrt(4.25)
    auto f = Tensor::from({4, 2}, {-1, 0, 1, 0, 0.5, 0, 0, 2});
    std::vector<std::size_t> y{0, 0, 1, 2};
    double term1 = 2.0 / 4.0;
    double term2 = (2.0 / 6.0) * (1.0 - 0.5);
    CHECK(center_cluster_loss(f, y, 1.0).item() == doctest::Approx(term1 + term2).epsilon(1e-15));
  }
  SUBCASE("permutation invariance") {
    Rng rng(42);
    auto f = random_normal(rng, {8, 3});
    std::vector<std::size_t> y{0, 1, 2, 0, 1, 2, 3, 3};
    double base = center_cluster_loss(f, y, 1.5).item();
    std::vector<std::size_t> perm{7, 2, 5, 0, 3, 1, 6, 4};
    std::vector<std::size_t> py;
    for (auto i : perm) py.push_back(y[i]);
    CHECK(center_cluster_loss(index_select(f, perm), py, 1.5).item() == doctest::Approx(base).epsilon(1e-14));
    std::vector<std::size_t> relabeled{9, 4, 1, 9, 4, 1, 0, 0};
    CHECK(center_cluster_loss(f, relabeled, 1.5).item() == doctest::Approx(base).epsilon(1e-14));
  }
  CHECK_THROWS_AS(center_cluster_loss(Tensor::zeros({0, 2}), {}, 1.0), std::invalid_argument);
}

TEST_CASE("total_loss") {
  LossComponents c{Tensor::scalar(0.7), Tensor::scalar(1.4), Tensor::scalar(2.0), Tensor::scalar(1.0)};
  CHECK(total_loss(c, {0.5, 0.25, 1.0}).item() == doctest::Approx(3.35).epsilon(1e-15));
  CHECK(total_loss(c, {0.0, 0.0, 1.0}).item() == doctest::Approx(2.1));
  LossComponents z{Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(0)};
  CHECK(total_loss(z, {}).item() == 0.0);
}

TEST_CASE("loss gradients") {
  Rng rng(43);
  for (int t = 0; t < 5; ++t) {
    auto a = random_normal(rng, {2, 3, 3, 2}, 1.0, true), b = random_normal(rng, {2, 3, 3, 2}, 1.0, true);
    CHECK(check_gradients([&] { return consistency_loss(a, b); }, {a, b}).max_rel_error < 1e-4);

    auto logits = random_normal(rng, {6, 2}, 1.0, true);
    std::vector<std::size_t> m{0, 1, 1, 0, 1, 0};
    CHECK(check_gradients([&] { return discriminator_loss(softmax(logits), m); }, {logits}).max_rel_error < 1e-4);
    CHECK(check_gradients([&] { return confusion_loss(softmax(logits)); }, {logits}).max_rel_error < 1e-4);

    auto lv = random_normal(rng, {4, 5}, 1.0, true), li = random_normal(rng, {3, 5}, 1.0, true);
    std::vector<std::size_t> yv{0, 4, 2, 2}, yi{1, 3, 0};
    CHECK(check_gradients([&] { return identity_loss(lv, yv, li, yi); }, {lv, li}).max_rel_error < 1e-4);

    // Centers spread around the margin so some hinges are active and some
    // are not; random draws keep every gap away from the kink.
    auto f = random_normal(rng, {8, 3}, 0.6, true);
    std::vector<std::size_t> y{0, 0, 1, 1, 2, 2, 3, 3};
    CHECK(check_gradients([&] { return center_cluster_loss(f, y, 1.0); }, {f}).max_rel_error < 1e-4);
  }
}
