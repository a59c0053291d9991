#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "fdmnet/ablation.hpp"
#include "fdmnet/config.hpp"
#include "fdmnet/data_io.hpp"
#include "fdmnet/fourier.hpp"
#include "fdmnet/gradcheck.hpp"
#include "fdmnet/spectral_demos.hpp"

#ifndef FDMNET_SAMPLE_IMAGE
#define FDMNET_SAMPLE_IMAGE "data/sample.png"
#endif

using namespace fdmnet;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 1, kVerify = 2, kRuntime = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "key=value config file");
  app->add_option("--set", c.sets, "override a config key (key=value), repeatable");
  app->add_option("--seed", c.seed, "master seed (same as --set seed=N)");
  app->add_option("--out-dir", c.out_dir, "directory for every output file")->capture_default_str();
}

// Layers the config file, --set entries and --seed onto `cfg`.
RunConfig apply_overrides(RunConfig cfg, const Common& c) {
  try {
    if (!c.config_path.empty()) {
      if (!fs::exists(c.config_path)) throw UsageError("config file not found: " + c.config_path);
      apply_config_file(cfg, c.config_path);
    }
    for (const auto& s : c.sets) apply_config_text(cfg, s, "--set");
    if (c.seed) cfg.seed = *c.seed;
    cfg.finalize();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

RunConfig load_config(const Common& c) { return apply_overrides(RunConfig{}, c); }

fs::path prepare_out(const Common& c) {
  fs::path out(c.out_dir);
  fs::create_directories(out);
  return out;
}

Tensor load_rgb(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("image not found: " + path);
  return read_image(path);
}

double max_amplitude_gap(const Tensor& a, const Tensor& b) {
  auto pa = decompose(dft2d_forward(a)), pb = decompose(dft2d_forward(b));
  double worst = 0.0;
  for (std::size_t i = 0; i < pa.amplitude.numel(); ++i) {
    worst = std::max(worst, std::fabs(pa.amplitude[i] - pb.amplitude[i]));
  }
  return worst;
}

int demo_fig1(const Common& c, const std::string& image) {
  load_config(c);
  auto out = prepare_out(c);
  Tensor img = load_rgb(image);
  Tensor amp = amplitude_only(img), phase = phase_only(img);
  write_image(out / "amp_only.png", display_rescale(amp));
  write_image(out / "phase_only.png", display_rescale(phase));
  std::printf("amplitude-only: max amplitude deviation from input %.3e\n", max_amplitude_gap(img, amp));
  std::printf("wrote %s and %s\n", (out / "amp_only.png").c_str(), (out / "phase_only.png").c_str());
  return kOk;
}

int demo_fig2(const Common& c, const std::string& image, const std::vector<double>& cutoffs) {
  auto cfg = load_config(c);
  double a = cfg.band_low, b = cfg.band_high;
  if (!cutoffs.empty()) {
    if (cutoffs.size() != 2) throw UsageError("--bands takes two cutoffs: LOW,HIGH");
    a = cutoffs[0];
    b = cutoffs[1];
  }
  auto out = prepare_out(c);
  Tensor img = load_rgb(image);
  std::vector<RadialBand> bands;
  try {
    bands = partition_bands(a, b);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  for (const auto& band : bands) {
    Tensor filtered = band_filter(img, band);
    auto path = out / (to_string(band.kind) + ".png");
    write_image(path, band.kind == BandKind::low ? filtered : display_rescale(filtered));
    std::printf("%-4s r in [%.3f, %.3f) -> %s\n", to_string(band.kind).c_str(), band.r0, band.r1,
                path.c_str());
  }
  double worst = 0.0;
  Tensor all = band_filter(img, RadialBand{BandKind::low, 0.0, 1.0});
  for (std::size_t i = 0; i < img.numel(); ++i) worst = std::max(worst, std::fabs(all[i] - img[i]));
  std::printf("all-pass reconstruction error %.3e\n", worst);
  return kOk;
}

int data_generate(const Common& c) {
  auto cfg = load_config(c);
  auto out = prepare_out(c);
  auto ds = generate_dataset(cfg.data);
  write_dataset(out, ds);
  std::ofstream(out / "config.cfg") << config_text(cfg);
  std::printf("wrote %zu train and %zu test images to %s\n", ds.train.size(), ds.test.size(),
              out.c_str());
  return kOk;
}

int train(const Common& c) {
  auto cfg = load_config(c);
  auto out = prepare_out(c);
  auto ds = generate_dataset(cfg.data);
  Model model(cfg.model, cfg.seed);
  FitOptions opt;
  opt.out_dir = out;
  opt.config_text = config_text(cfg);
  opt.on_epoch = [](const EpochLog& e) {
    std::printf("epoch %3zu  lr %.4g  L_id %.4f  L_cc %.4f  L_con %.4f  L_e %.4f  L_m %.4f  acc %.3f\n",
                e.epoch, e.lr, e.mean.identity, e.mean.center, e.mean.consistency, e.mean.adversarial,
                e.mean.discriminator, e.mean.disc_accuracy);
    std::fflush(stdout);
  };
  std::ofstream(out / "config.cfg") << opt.config_text;
  fit(model, ds, cfg.train, cfg.loss, cfg.seed, opt);
  auto report = evaluate(model, ds.test, cfg.eval);
  std::vector<ReportRow> rows{{"trained", report}};
  std::ofstream(out / "report.csv") << report_csv(rows);
  std::cout << report_table(rows);
  std::printf("checkpoint: %s\n", (out / "checkpoint").c_str());
  return kOk;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int eval(const Common& c, const std::string& checkpoint) {
  fs::path ckpt(checkpoint);
  if (!fs::exists(ckpt / "model.cfg")) throw UsageError("not a checkpoint directory: " + checkpoint);
  // The checkpoint's own config first, then the caller's overrides.
  RunConfig saved;
  apply_config_text(saved, read_text(ckpt / "model.cfg"), (ckpt / "model.cfg").string());
  auto cfg = apply_overrides(saved, c);
  auto out = prepare_out(c);
  Model model(cfg.model, cfg.seed);
  load_checkpoint(ckpt, model);
  auto ds = generate_dataset(cfg.data);
  auto report = evaluate(model, ds.test, cfg.eval);
  std::vector<ReportRow> rows{{"checkpoint", report}};
  std::ofstream(out / "report.csv") << report_csv(rows);
  std::cout << report_table(rows);
  return kOk;
}

int gradcheck(const Common& c) {
  auto cfg = load_config(c);
  auto rows = run_gradcheck_suite(cfg.seed);
  bool ok = true;
  std::printf("%-26s %9s %12s  %s\n", "operation", "instances", "max rel err", "status");
  for (const auto& r : rows) {
    std::printf("%-26s %9zu %12.3e  %s\n", r.name.c_str(), r.instances, r.max_rel_error,
                r.passed ? "ok" : "FAIL");
    ok = ok && r.passed;
  }
  return ok ? kOk : kVerify;
}

int ablate(const Common& c, std::size_t seeds) {
  auto cfg = load_config(c);
  auto out = prepare_out(c);
  auto ds = generate_dataset(cfg.data);
  std::vector<ReportRow> rows;
  for (const auto& v : ablation_variants()) {
    auto result = run_variant(cfg, v, seeds, ds, [&](const SeedRun& r) {
      std::printf("%-20s seed %llu  R-1 %6.2f  mAP %6.2f  (%.1fs)\n", v.label.c_str(),
                  static_cast<unsigned long long>(r.seed), 100 * r.report.rank1.mean,
                  100 * r.report.map.mean, r.seconds);
      std::fflush(stdout);
    });
    rows.push_back(result.row());
  }
  std::ofstream(out / "ablation.csv") << report_csv(rows);
  std::cout << '\n' << report_table(rows);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-domain modality-invariant re-identification toolkit"};
  app.footer("\n" + config_help());
  app.require_subcommand(1);
  Common common;

  auto* demo = app.add_subcommand("demo", "spectrum demonstrations");
  demo->require_subcommand(1);
  std::string image = FDMNET_SAMPLE_IMAGE;
  std::vector<double> cutoffs;
  auto* fig1 = demo->add_subcommand("fig1", "amplitude-only and phase-only reconstructions");
  add_common(fig1, common);
  fig1->add_option("--input,--image", image, "input image (PNG or PNM)")->capture_default_str();
  auto* fig2 = demo->add_subcommand("fig2", "low / mid / high radial band reconstructions");
  add_common(fig2, common);
  fig2->add_option("--input,--image", image, "input image (PNG or PNM)")->capture_default_str();
  fig2->add_option("--bands", cutoffs, "band cutoffs LOW,HIGH (default from config)")->delimiter(',');

  auto* data = app.add_subcommand("data", "dataset tools");
  data->require_subcommand(1);
  auto* gen = data->add_subcommand("generate", "write the synthetic dataset as PNG + manifest.csv");
  add_common(gen, common);

  auto* tr = app.add_subcommand("train", "train a model and save its checkpoint");
  add_common(tr, common);

  std::string checkpoint;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  add_common(gc, common);

  std::size_t seeds = 3;
  auto* ab = app.add_subcommand("ablate", "train and compare the six component combinations");
  add_common(ab, common);
  ab->add_option("--seeds", seeds, "seeds per row")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*fig1) return demo_fig1(common, image);
    if (*fig2) return demo_fig2(common, image, cutoffs);
    if (*gen) return data_generate(common);
    if (*tr) return train(common);
    if (*ev) return eval(common, checkpoint);
    if (*gc) return gradcheck(common);
    if (*ab) return ablate(common, seeds);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return kRuntime;
  }
  return kUsage;
}
