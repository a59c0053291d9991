#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdmnet/dataset.hpp"
#include "fdmnet/evaluation.hpp"
#include "fdmnet/losses.hpp"
#include "fdmnet/model.hpp"
#include "fdmnet/trainer.hpp"

namespace fdmnet {

struct RunConfig {
  std::uint64_t seed = 1;
  SyntheticDatasetSpec data;
  ModelConfig model;
  TrainSchedule train;
  LossWeights loss;
  EvalOptions eval;
  // Radial cutoffs splitting the spectrum into low / mid / high bands.
  double band_low = 1.0 / 3.0;
  double band_high = 2.0 / 3.0;

  // Cross-field checks; also copies derived fields (classifier size).
  void finalize();
};

// Where a default comes from.
enum class Origin {
  reference,  // the published training setup of the method
  local,      // chosen for this toy-scale implementation
};

struct ConfigKey {
  std::string key;
  std::string help;
  Origin origin;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::vector<ConfigKey>& config_keys();

// Throws ConfigError for unknown keys or unparsable values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
// "key=value" lines; '#' starts a comment. `source` names the input in errors.
void apply_config_text(RunConfig& config, const std::string& text, const std::string& source);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);
// Every key with its current value, one per line, parseable by apply_config_text.
std::string config_text(const RunConfig& config);
// Key listing with defaults and origins for --help.
std::string config_help();

}  // namespace fdmnet
