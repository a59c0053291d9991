#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fdmnet/config.hpp"

namespace fdmnet {

/// Component toggles of one ablation row.
struct Variant {
  std::string label;
  bool iaf = false;
  bool consistency = false;  // grayscale guidance; needs the filter
  bool ppnorm = false;
  bool mal = false;
};

// The six rows: baseline, +IAF, +IAF+L_con, +PPNorm, +IAF+L_con+PPNorm, full.
std::vector<Variant> ablation_variants();
RunConfig apply_variant(RunConfig config, const Variant& variant);

struct SeedRun {
  std::uint64_t seed = 0;
  EvalReport report;
  // Held-out modality accuracy of the model's own discriminator (MAL only).
  double disc_accuracy = -1.0;
  // Held-out accuracy of a discriminator trained afterwards on frozen
  // training embeddings.
  double probe_accuracy = 0.0;
  double seconds = 0.0;
};

struct VariantResult {
  Variant variant;
  std::vector<SeedRun> runs;
  double mean_rank1() const;
  double mean_map() const;
  ReportRow row() const;
};

// Trains and evaluates `seeds` models (seeds config.seed, config.seed+1, ...)
// on the dataset described by `config.data`.
VariantResult run_variant(const RunConfig& config, const Variant& variant, std::size_t seeds,
                          const Dataset& dataset,
                          const std::function<void(const SeedRun&)>& on_run = {});

// Fraction of samples whose argmax modality probability is correct.
double modality_accuracy(const Tensor& probs, const std::vector<Sample>& samples);

/// Fits a fresh MLP discriminator (d -> hidden -> 2) on frozen training
/// embeddings and returns its accuracy on the test embeddings.
double probe_modality_accuracy(const Tensor& train_embeddings, const std::vector<Sample>& train,
                               const Tensor& test_embeddings, const std::vector<Sample>& test,
                               std::size_t hidden, std::uint64_t seed, std::size_t steps = 300);

}  // namespace fdmnet
