#include "fdmnet/config.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <cmath>
#include <sstream>

namespace fdmnet {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& v, Parse parse) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<T>(parse(key, item)));
  }
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

#define FDM_UINT(KEY, FIELD, ORIGIN, HELP)                                              \
  ConfigKey {                                                                           \
    KEY, HELP, Origin::ORIGIN, [](const RunConfig& c) { return std::to_string(c.FIELD); }, \
        [](RunConfig& c, const std::string& v) {                                         \
          c.FIELD = static_cast<decltype(c.FIELD)>(parse_uint(KEY, v));                  \
        }                                                                                \
  }
#define FDM_DOUBLE(KEY, FIELD, ORIGIN, HELP)                                   \
  ConfigKey {                                                                  \
    KEY, HELP, Origin::ORIGIN, [](const RunConfig& c) { return fmt(c.FIELD); }, \
        [](RunConfig& c, const std::string& v) { c.FIELD = parse_double(KEY, v); } \
  }
#define FDM_BOOL(KEY, FIELD, ORIGIN, HELP)                                            \
  ConfigKey {                                                                         \
    KEY, HELP, Origin::ORIGIN, [](const RunConfig& c) { return fmt_bool(c.FIELD); },   \
        [](RunConfig& c, const std::string& v) { c.FIELD = parse_bool(KEY, v); }      \
  }

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k{
      FDM_UINT("seed", seed, local, "master seed for initialization, sampling and splits"),

      FDM_UINT("data.train_identities", data.train_identities, local, "training identities"),
      FDM_UINT("data.test_identities", data.test_identities, local, "held-out identities"),
      FDM_UINT("data.images_per_modality", data.images_per_modality, local,
               "images per identity and modality"),
      FDM_UINT("data.height", data.height, local, "image height"),
      FDM_UINT("data.width", data.width, local, "image width"),
      ConfigKey{"data.max_shift", "random translation range in pixels", Origin::local,
                [](const RunConfig& c) { return std::to_string(c.data.max_shift); },
                [](RunConfig& c, const std::string& v) {
                  c.data.max_shift = static_cast<int>(parse_uint("data.max_shift", v));
                }},
      FDM_DOUBLE("data.noise_sigma", data.noise_sigma, local, "Gaussian pixel noise"),
      FDM_DOUBLE("data.ir_decay", data.ir_gain_decay, local,
                 "infrared amplitude gain: exp(-decay * r^2) falloff"),
      FDM_DOUBLE("data.ir_contrast", data.ir_gain_contrast, local,
                 "infrared amplitude gain on non-DC bins"),
      FDM_DOUBLE("data.ir_jitter", data.ir_gain_jitter, local,
                 "relative per-image spread of decay and contrast"),
      FDM_UINT("data.seed", data.seed, local, "dataset generator seed"),

      ConfigKey{"model.channels", "backbone stage widths", Origin::local,
                [](const RunConfig& c) { return fmt_list(c.model.channels); },
                [](RunConfig& c, const std::string& v) {
                  c.model.channels = parse_list<std::size_t>("model.channels", v, parse_uint);
                }},
      FDM_UINT("model.embed_dim", model.embed_dim, local, "embedding size (= last stage width)"),
      FDM_UINT("model.disc_hidden", model.disc_hidden, local, "discriminator hidden width"),
      FDM_BOOL("model.iaf", model.use_iaf, reference, "instance-adaptive amplitude filter"),
      FDM_UINT("model.iaf.hidden", model.iaf.hidden, local, "filter projection width"),
      FDM_BOOL("model.iaf.log_amplitude", model.iaf.log_amplitude, local,
               "feed log(1 + A) to the mask network"),
      FDM_BOOL("model.mal", model.mal, reference, "modality adversarial learning"),
      FDM_BOOL("model.grayscale_guidance", model.grayscale_guidance, reference,
               "consistency loss between filtered visible and grayscale images"),
      FDM_BOOL("model.gray_identity", model.gray_identity, local,
               "also train the identity loss on grayscale copies"),

      FDM_BOOL("ppnorm.enabled", model.ppnorm.enabled, reference, "phase-preserving normalization"),
      ConfigKey{"ppnorm.stages", "1-based stages whose first normalization is replaced",
                Origin::reference,
                [](const RunConfig& c) { return fmt_list(c.model.ppnorm.stages); },
                [](RunConfig& c, const std::string& v) {
                  c.model.ppnorm.stages = parse_list<std::size_t>("ppnorm.stages", v, parse_uint);
                }},
      FDM_DOUBLE("ppnorm.eps", model.ppnorm.eps, local, "instance-norm epsilon"),

      FDM_DOUBLE("loss.lambda1", loss.lambda1, local, "consistency loss weight"),
      FDM_DOUBLE("loss.lambda2", loss.lambda2, local, "center-cluster loss weight"),
      FDM_DOUBLE("loss.rho", loss.rho, local, "center margin"),

      FDM_UINT("train.epochs", train.epochs, local, "training epochs"),
      FDM_DOUBLE("train.lr", train.base_lr, local, "initial SGD learning rate"),
      ConfigKey{"train.milestones", "fractions of the run after which lr drops 10x",
                Origin::reference,
                [](const RunConfig& c) { return fmt_list(c.train.milestones); },
                [](RunConfig& c, const std::string& v) {
                  c.train.milestones = parse_list<double>("train.milestones", v, parse_double);
                }},
      FDM_UINT("train.P", train.P, reference, "identities per batch"),
      FDM_UINT("train.K", train.K, reference, "images per identity and modality in a batch"),
      FDM_UINT("train.steps_per_epoch", train.steps_per_epoch, local,
               "steps per epoch (0: one pass over the training images)"),
      FDM_DOUBLE("train.momentum", train.momentum, local, "SGD momentum"),
      FDM_DOUBLE("train.weight_decay", train.weight_decay, local, "SGD weight decay"),
      FDM_BOOL("train.flip", train.flip, reference, "random horizontal flips"),

      FDM_UINT("eval.splits", eval.splits, reference, "repeated random gallery splits"),
      FDM_UINT("eval.gallery_per_id", eval.gallery_per_id, local,
               "gallery images per identity and split"),

      FDM_DOUBLE("demo.band_low", band_low, local, "radius separating low and mid bands"),
      FDM_DOUBLE("demo.band_high", band_high, local, "radius separating mid and high bands"),
  };
  return k;
}

#undef FDM_UINT
#undef FDM_DOUBLE
#undef FDM_BOOL

}  // namespace

void RunConfig::finalize() {
  data.validate();
  model.num_identities = data.train_identities;
  model.validate();
  train.validate();
  loss.validate();
  eval.seed = seed;
  if (eval.splits == 0 || eval.gallery_per_id == 0) {
    throw ConfigError("eval.splits and eval.gallery_per_id must be positive");
  }
  if (eval.gallery_per_id > data.images_per_modality) {
    throw ConfigError("eval.gallery_per_id exceeds data.images_per_modality");
  }
  if (!(0.0 < band_low && band_low < band_high && band_high < 1.0)) {
    throw ConfigError("demo bands need 0 < demo.band_low < demo.band_high < 1");
  }
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.key == key) {
      k.set(config, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value");
    }
    try {
      set_config_value(config, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(config, ss.str(), path.string());
}

std::string config_text(const RunConfig& config) {
  std::string out;
  for (const auto& k : config_keys()) out += k.key + "=" + k.get(config) + "\n";
  return out;
}

std::string config_help() {
  RunConfig defaults;
  std::size_t w = 0;
  for (const auto& k : config_keys()) w = std::max(w, k.key.size() + k.get(defaults).size() + 3);
  std::ostringstream out;
  out << "Config keys (key = default  [origin]  description)\n"
      << "  origin 'reference': from the method's published training setup\n"
      << "  origin 'local':     chosen for this toy-scale implementation\n\n";
  for (const auto& k : config_keys()) {
    std::string head = k.key + " = " + k.get(defaults);
    out << "  " << std::left << std::setw(static_cast<int>(w)) << head << "  "
        << std::setw(11) << (k.origin == Origin::reference ? "[reference]" : "[local]") << "  "
        << k.help << '\n';
  }
  return out.str();
}

}  // namespace fdmnet
