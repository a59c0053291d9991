#include "fdmnet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fdmnet/ops.hpp"

namespace fdmnet {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_similarity: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<Ranking> rank_gallery(const Tensor& queries, std::span<const std::size_t> query_labels,
                                  const Tensor& gallery, std::span<const std::size_t> gallery_labels) {
  if (queries.rank() != 2 || gallery.rank() != 2 || queries.dim(1) != gallery.dim(1)) {
    throw std::invalid_argument("rank_gallery: expected [q,d] and [g,d], got " +
                                shape_string(queries.shape()) + " and " + shape_string(gallery.shape()));
  }
  std::size_t q = queries.dim(0), g = gallery.dim(0), d = queries.dim(1);
  if (query_labels.size() != q || gallery_labels.size() != g) {
    throw std::invalid_argument("rank_gallery: label counts do not match rows");
  }
  std::vector<Ranking> out(q);
  auto Q = queries.data(), G = gallery.data();
  for (std::size_t i = 0; i < q; ++i) {
    std::vector<double> s(g);
    for (std::size_t j = 0; j < g; ++j) s[j] = cosine_similarity(Q.subspan(i * d, d), G.subspan(j * d, d));
    auto& r = out[i];
    r.order.resize(g);
    std::iota(r.order.begin(), r.order.end(), 0);
    std::sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) {
      return s[a] != s[b] ? s[a] > s[b] : a < b;
    });
    for (auto j : r.order) {
      r.scores.push_back(s[j]);
      r.relevant.push_back(gallery_labels[j] == query_labels[i]);
    }
  }
  return out;
}

namespace {

std::size_t first_hit(const Ranking& r, std::size_t query) {
  for (std::size_t i = 0; i < r.relevant.size(); ++i)
    if (r.relevant[i]) return i + 1;
  throw std::invalid_argument("query " + std::to_string(query) + " has no relevant gallery item");
}

}  // namespace

std::vector<double> cmc(const std::vector<Ranking>& rankings, std::span<const std::size_t> ks) {
  if (rankings.empty()) throw std::invalid_argument("cmc: no queries");
  std::vector<std::size_t> hits;
  for (std::size_t i = 0; i < rankings.size(); ++i) hits.push_back(first_hit(rankings[i], i));
  std::vector<double> out;
  for (auto k : ks) {
    auto n = std::count_if(hits.begin(), hits.end(), [k](std::size_t h) { return h <= k; });
    out.push_back(static_cast<double>(n) / static_cast<double>(rankings.size()));
  }
  return out;
}

double mean_average_precision(const std::vector<Ranking>& rankings) {
  if (rankings.empty()) throw std::invalid_argument("mean_average_precision: no queries");
  double total = 0.0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const auto& r = rankings[q];
    first_hit(r, q);
    double found = 0.0, ap = 0.0;
    for (std::size_t i = 0; i < r.relevant.size(); ++i) {
      if (!r.relevant[i]) continue;
      found += 1.0;
      ap += found / static_cast<double>(i + 1);
    }
    total += ap / found;
  }
  return total / static_cast<double>(rankings.size());
}

namespace {

MetricSummary summarize(const std::vector<double>& v) {
  MetricSummary s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

constexpr std::size_t kMaxSplitAttempts = 100;

}  // namespace

EvalReport evaluate_embeddings(const Tensor& embeddings, const std::vector<Sample>& samples,
                               const EvalOptions& options) {
  if (embeddings.rank() != 2 || embeddings.dim(0) != samples.size()) {
    throw std::invalid_argument("evaluate: need one embedding row per sample");
  }
  if (options.splits == 0 || options.gallery_per_id == 0) {
    throw std::invalid_argument("evaluate: splits and gallery_per_id must be positive");
  }
  std::vector<std::size_t> probes, probe_labels;
  std::map<std::size_t, std::vector<std::size_t>> pool;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].modality == options.probe) {
      probes.push_back(i);
      probe_labels.push_back(samples[i].identity);
    } else {
      pool[samples[i].identity].push_back(i);
    }
  }
  if (probes.empty()) throw std::invalid_argument("evaluate: no probe images");
  std::set<std::size_t> probe_ids(probe_labels.begin(), probe_labels.end());
  Tensor query = index_select(embeddings, probes);

  std::vector<double> r1, r10, r20, maps;
  const std::size_t ks[] = {1, 10, 20};
  for (std::size_t split = 0; split < options.splits; ++split) {
    Rng rng = Rng(options.seed).fork(split);
    std::vector<std::size_t> gallery;
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt == kMaxSplitAttempts) {
        throw std::runtime_error("evaluate: no split gives every probe identity a gallery image after " +
                                 std::to_string(kMaxSplitAttempts) + " attempts");
      }
      gallery.clear();
      for (const auto& [id, items] : pool) {
        for (auto j : rng.sample_without_replacement(items.size(), options.gallery_per_id)) {
          gallery.push_back(items[j]);
        }
      }
      std::set<std::size_t> covered;
      for (auto g : gallery) covered.insert(samples[g].identity);
      if (std::includes(covered.begin(), covered.end(), probe_ids.begin(), probe_ids.end())) break;
    }
    std::vector<std::size_t> gallery_labels;
    for (auto g : gallery) gallery_labels.push_back(samples[g].identity);
    auto rankings = rank_gallery(query, probe_labels, index_select(embeddings, gallery), gallery_labels);
    auto c = cmc(rankings, ks);
    r1.push_back(c[0]);
    r10.push_back(c[1]);
    r20.push_back(c[2]);
    maps.push_back(mean_average_precision(rankings));
  }
  EvalReport rep;
  rep.rank1 = summarize(r1);
  rep.rank10 = summarize(r10);
  rep.rank20 = summarize(r20);
  rep.map = summarize(maps);
  rep.splits = options.splits;
  return rep;
}

Tensor embed_samples(Model& model, const std::vector<Sample>& samples, std::size_t batch) {
  NoGradGuard guard;
  std::vector<double> rows;
  std::size_t d = 0;
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    std::size_t end = std::min(samples.size(), start + batch);
    Shape s = samples[start].image.shape();
    std::vector<double> v;
    for (std::size_t i = start; i < end; ++i) {
      v.insert(v.end(), samples[i].image.data().begin(), samples[i].image.data().end());
    }
    s.insert(s.begin(), end - start);
    Tensor f = model.embed(Tensor::from(std::move(s), std::move(v)), {false, false});
    d = f.dim(1);
    rows.insert(rows.end(), f.data().begin(), f.data().end());
  }
  return Tensor::from({samples.size(), d}, std::move(rows));
}

EvalReport evaluate(Model& model, const std::vector<Sample>& samples, const EvalOptions& options) {
  return evaluate_embeddings(embed_samples(model, samples), samples, options);
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "label,R-1,R-10,R-20,mAP,R-1_std,mAP_std\n" << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    const auto& e = r.report;
    out << r.label << ',' << 100 * e.rank1.mean << ',' << 100 * e.rank10.mean << ','
        << 100 * e.rank20.mean << ',' << 100 * e.map.mean << ',' << 100 * e.rank1.stddev << ','
        << 100 * e.map.stddev << '\n';
  }
  return out.str();
}

std::string report_table(const std::vector<ReportRow>& rows) {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "model" << std::right;
  for (const char* h : {"R-1", "R-10", "R-20", "mAP"}) out << std::setw(9) << h;
  out << '\n' << std::fixed << std::setprecision(2);
  for (const auto& r : rows) {
    const auto& e = r.report;
    out << std::left << std::setw(static_cast<int>(width)) << r.label << std::right;
    for (double v : {e.rank1.mean, e.rank10.mean, e.rank20.mean, e.map.mean}) {
      out << std::setw(9) << 100 * v;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace fdmnet
