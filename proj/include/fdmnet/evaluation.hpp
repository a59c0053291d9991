#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fdmnet/dataset.hpp"
#include "fdmnet/model.hpp"

namespace fdmnet {

// a.b / (|a| |b|); throws std::invalid_argument for a zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// One query's gallery ordering: scores non-increasing, ties by gallery index.
struct Ranking {
  std::vector<std::size_t> order;
  std::vector<double> scores;
  std::vector<bool> relevant;  // relevance of order[i]
};

// Queries [q,d] against gallery [g,d]; relevant means equal labels.
std::vector<Ranking> rank_gallery(const Tensor& queries, std::span<const std::size_t> query_labels,
                                  const Tensor& gallery, std::span<const std::size_t> gallery_labels);

// Fraction of queries whose first relevant item is within the top k, per k.
std::vector<double> cmc(const std::vector<Ranking>& rankings, std::span<const std::size_t> ks);
double mean_average_precision(const std::vector<Ranking>& rankings);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation over splits
};

struct EvalReport {
  MetricSummary rank1, rank10, rank20, map;
  std::size_t splits = 0;
};

struct EvalOptions {
  std::size_t splits = 10;
  std::size_t gallery_per_id = 1;
  Modality probe = Modality::infrared;
  std::uint64_t seed = 1;
};

// Probes: every probe-modality image. Gallery: `gallery_per_id` random
// images of the other modality per identity, redrawn for every split.
EvalReport evaluate_embeddings(const Tensor& embeddings, const std::vector<Sample>& samples,
                               const EvalOptions& options);

// Eval-mode embeddings of every sample, [n,d].
Tensor embed_samples(Model& model, const std::vector<Sample>& samples, std::size_t batch = 64);

EvalReport evaluate(Model& model, const std::vector<Sample>& samples, const EvalOptions& options);

struct ReportRow {
  std::string label;
  EvalReport report;
};

// Percentages; CSV columns label,R-1,R-10,R-20,mAP,R-1_std,mAP_std.
std::string report_csv(const std::vector<ReportRow>& rows);
std::string report_table(const std::vector<ReportRow>& rows);

}  // namespace fdmnet
