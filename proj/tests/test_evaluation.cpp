#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fdmnet/evaluation.hpp"
#include "fdmnet/random.hpp"
#include "metric_oracle.hpp"

using namespace fdmnet;

namespace {

Ranking ranking_of(std::vector<bool> relevant) {
  Ranking r;
  for (std::size_t i = 0; i < relevant.size(); ++i) {
    r.order.push_back(i);
    r.scores.push_back(1.0 - 0.01 * static_cast<double>(i));
  }
  r.relevant = std::move(relevant);
  return r;
}

std::vector<Sample> fake_samples(std::size_t ids, std::size_t per_modality) {
  std::vector<Sample> out;
  for (std::size_t id = 0; id < ids; ++id)
    for (auto m : {Modality::visible, Modality::infrared})
      for (std::size_t k = 0; k < per_modality; ++k) out.push_back({Tensor(), 100 + id, m});
  return out;
}

}  // namespace

TEST_CASE("cosine similarity") {
  std::vector<double> a{1, 2}, b{2, 1}, c{-2, 1}, z{0, 0};
  CHECK(cosine_similarity(a, b) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(a, c) == 0.0);
  CHECK_THROWS_AS(cosine_similarity(a, z), std::invalid_argument);
  std::vector<double> three{1, 2, 3};
  CHECK_THROWS(cosine_similarity(a, three));
}

TEST_CASE("cmc and average precision on hand cases") {
  std::vector<Ranking> two{ranking_of({true, false, false}), ranking_of({false, false, true})};
  std::vector<std::size_t> ks{1, 2, 3};
  auto c = cmc(two, ks);
  CHECK(c[0] == 0.5);
  CHECK(c[1] == 0.5);
  CHECK(c[2] == 1.0);

  std::vector<Ranking> one{ranking_of({true, false, true, false})};
  CHECK(mean_average_precision(one) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-15));
  CHECK(mean_average_precision({ranking_of({true, true, false})}) == 1.0);

  std::vector<Ranking> none{ranking_of({false, false})};
  CHECK_THROWS(cmc(none, ks));
  CHECK_THROWS(mean_average_precision(none));
}

TEST_CASE("metrics match exhaustive enumeration on micro-galleries") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = oracle::random_micro_gallery(rng);
    auto rankings = rank_gallery(g.queries, g.query_labels, g.gallery, g.gallery_labels);
    auto expected = oracle::enumerate_metrics(g);
    std::vector<std::size_t> ks;
    for (std::size_t k = 1; k <= g.gallery.dim(0); ++k) ks.push_back(k);
    CHECK(cmc(rankings, ks) == expected.cmc);
    CHECK(mean_average_precision(rankings) == expected.map);
    for (std::size_t q = 0; q < rankings.size(); ++q) CHECK(rankings[q].order == expected.orders[q]);
  }
}

TEST_CASE("ties resolve by gallery index") {
  auto q = Tensor::from({1, 2}, {1.0, 0.0});
  auto g = Tensor::from({3, 2}, {0.0, 1.0, 2.0, 0.0, 1.0, 0.0});
  std::vector<std::size_t> ql{0}, gl{1, 0, 0};
  auto r = rank_gallery(q, ql, g, gl);
  CHECK(r[0].order == std::vector<std::size_t>{1, 2, 0});
  for (std::size_t i = 1; i < r[0].scores.size(); ++i) CHECK(r[0].scores[i - 1] >= r[0].scores[i]);
}

TEST_CASE("scaling embeddings leaves every metric unchanged") {
  // Continuous coordinates: scaling may move a score by an ulp, which only
  // matters for exact ties.
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = oracle::random_micro_gallery(rng, false);
    auto base = rank_gallery(g.queries, g.query_labels, g.gallery, g.gallery_labels);
    for (double s : {0.37, 3.0, 1e3}) {
      std::vector<double> qs(g.queries.data().begin(), g.queries.data().end());
      std::vector<double> gs(g.gallery.data().begin(), g.gallery.data().end());
      for (auto& v : qs) v *= s;
      for (auto& v : gs) v *= s;
      auto scaled = rank_gallery(Tensor::from(g.queries.shape(), qs), g.query_labels,
                                 Tensor::from(g.gallery.shape(), gs), g.gallery_labels);
      for (std::size_t i = 0; i < base.size(); ++i) CHECK(scaled[i].order == base[i].order);
      CHECK(mean_average_precision(scaled) == mean_average_precision(base));
    }
  }
}

TEST_CASE("one-hot identity embeddings score perfectly") {
  auto samples = fake_samples(5, 3);
  std::vector<double> e(samples.size() * 5, 0.0);
  for (std::size_t i = 0; i < samples.size(); ++i) e[i * 5 + samples[i].identity - 100] = 1.0;
  EvalOptions opt;
  opt.splits = 1;
  auto rep = evaluate_embeddings(Tensor::from({samples.size(), 5}, e), samples, opt);
  CHECK(rep.rank1.mean == 1.0);
  CHECK(rep.map.mean == 1.0);
  CHECK(rep.splits == 1);
}

TEST_CASE("noise embeddings sit at chance level") {
  const std::size_t ids = 10;
  auto samples = fake_samples(ids, 8);
  Rng rng(12);
  auto e = random_normal(rng, {samples.size(), 16});
  EvalOptions opt;
  opt.splits = 20;
  opt.seed = 3;
  auto rep = evaluate_embeddings(e, samples, opt);
  double p = 1.0 / ids;
  double trials = static_cast<double>(ids * 8 * opt.splits);
  double sigma = std::sqrt(p * (1.0 - p) / trials);
  CHECK(std::fabs(rep.rank1.mean - p) < 3.0 * sigma);
  CHECK(rep.rank10.mean == 1.0);

  auto again = evaluate_embeddings(e, samples, opt);
  CHECK(again.rank1.mean == rep.rank1.mean);
  CHECK(again.map.stddev == rep.map.stddev);

  CHECK_THROWS(evaluate_embeddings(Tensor::zeros({samples.size(), 16}), samples, opt));
}

TEST_CASE("an identity without gallery images cannot be split") {
  auto samples = fake_samples(3, 2);
  std::erase_if(samples, [](const Sample& s) {
    return s.identity == 101 && s.modality == Modality::visible;
  });
  Rng rng(1);
  auto e = random_normal(rng, {samples.size(), 4});
  CHECK_THROWS_AS(evaluate_embeddings(e, samples, EvalOptions{}), std::runtime_error);
}

TEST_CASE("report formats") {
  EvalReport r;
  r.rank1 = {0.5, 0.01};
  r.rank10 = {0.9, 0.0};
  r.rank20 = {1.0, 0.0};
  r.map = {0.6, 0.02};
  std::vector<ReportRow> rows{{"baseline", r}};
  auto csv = report_csv(rows);
  CHECK(csv.starts_with("label,R-1,R-10,R-20,mAP,R-1_std,mAP_std\n"));
  CHECK(csv.find("baseline,50.0000,90.0000,100.0000,60.0000,1.0000,2.0000") != std::string::npos);
  auto table = report_table(rows);
  CHECK(table.find("R-1") != std::string::npos);
  CHECK(table.find("baseline") != std::string::npos);
}
