#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdmnet/dataset.hpp"
#include "fdmnet/losses.hpp"
#include "fdmnet/model.hpp"
#include "fdmnet/optim.hpp"

namespace fdmnet {

struct TrainSchedule {
  std::size_t epochs = 60;
  double base_lr = 0.05;
  // Fractions of `epochs`; the rate drops by 10x after each.
  std::vector<double> milestones{0.2, 0.5};
  std::size_t P = 8;
  std::size_t K = 4;
  // 0 picks ceil(train images / batch size).
  std::size_t steps_per_epoch = 0;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool flip = true;

  void validate() const;
  // Rate for a 1-based epoch.
  double lr_at(std::size_t epoch) const;
};

/// Per-identity sample indices of one split; labels are dense 0..N-1 in
/// ascending identity order.
class IdentityIndex {
 public:
  explicit IdentityIndex(const std::vector<Sample>& samples);

  std::size_t size() const { return identities_.size(); }
  std::size_t identity(std::size_t label) const { return identities_[label]; }
  const std::vector<std::size_t>& visible(std::size_t label) const { return visible_[label]; }
  const std::vector<std::size_t>& infrared(std::size_t label) const { return infrared_[label]; }

 private:
  std::vector<std::size_t> identities_;
  std::vector<std::vector<std::size_t>> visible_, infrared_;
};

struct Batch {
  Tensor visible;   // [P*K,H,W,3]
  Tensor infrared;  // [P*K,H,W,3]
  std::vector<std::size_t> labels_visible;
  std::vector<std::size_t> labels_infrared;
};

Batch sample_batch(const std::vector<Sample>& samples, const IdentityIndex& index, std::size_t P,
                   std::size_t K, Rng& rng, bool flip = false);

Tensor flip_horizontal(const Tensor& image);

struct StepMetrics {
  double identity = 0.0;
  double center = 0.0;
  double consistency = 0.0;
  double adversarial = 0.0;    // confusion term seen by the extractor
  double discriminator = 0.0;  // discriminator loss of the first phase
  double disc_accuracy = 0.0;
  double total = 0.0;
};

/// Non-finite loss. `offending` holds the loss terms and every parameter or
/// gradient containing a non-finite value.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, NamedTensors offending)
      : std::runtime_error(what), offending_(std::move(offending)) {}
  const NamedTensors& offending() const { return offending_; }

 private:
  NamedTensors offending_;
};

class Trainer {
 public:
  Trainer(Model& model, const TrainSchedule& schedule, const LossWeights& weights);

  // First phase: discriminator on detached embeddings (only with MAL).
  // Second phase: filter, extractor and classifier on the total loss.
  StepMetrics step(const Batch& batch, double lr);

 private:
  Model& model_;
  LossWeights weights_;
  Sgd disc_opt_;
  Sgd main_opt_;
};

struct EpochLog {
  std::size_t epoch = 0;
  StepMetrics mean;
  double lr = 0.0;
};

struct FitOptions {
  // Empty: no files are written.
  std::filesystem::path out_dir;
  // Stored as model.cfg next to every checkpoint.
  std::string config_text;
  std::function<void(const EpochLog&)> on_epoch;
};

std::vector<EpochLog> fit(Model& model, const Dataset& dataset, const TrainSchedule& schedule,
                          const LossWeights& weights, std::uint64_t seed,
                          const FitOptions& options = {});

void save_checkpoint(const std::filesystem::path& dir, const Model& model,
                     const std::string& config_text);
void load_checkpoint(const std::filesystem::path& dir, Model& model);

}  // namespace fdmnet
