#include "fdmnet/ablation.hpp"

#include <chrono>
#include <cmath>

#include "fdmnet/ops.hpp"
#include "fdmnet/optim.hpp"

namespace fdmnet {

std::vector<Variant> ablation_variants() {
  return {
      {"baseline", false, false, false, false},
      {"+IAF", true, false, false, false},
      {"+IAF+L_con", true, true, false, false},
      {"+PPNorm", false, false, true, false},
      {"+IAF+L_con+PPNorm", true, true, true, false},
      {"full", true, true, true, true},
  };
}

RunConfig apply_variant(RunConfig config, const Variant& variant) {
  config.model.use_iaf = variant.iaf;
  config.model.grayscale_guidance = variant.consistency;
  config.model.ppnorm.enabled = variant.ppnorm;
  config.model.mal = variant.mal;
  return config;
}

double VariantResult::mean_rank1() const {
  double s = 0.0;
  for (const auto& r : runs) s += r.report.rank1.mean;
  return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
}

double VariantResult::mean_map() const {
  double s = 0.0;
  for (const auto& r : runs) s += r.report.map.mean;
  return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
}

// Per-seed means combined; the spread is across seeds.
ReportRow VariantResult::row() const {
  ReportRow row{variant.label, {}};
  auto combine = [&](auto field) {
    MetricSummary out;
    for (const auto& r : runs) out.mean += field(r.report).mean;
    out.mean /= static_cast<double>(runs.size());
    if (runs.size() > 1) {
      double ss = 0.0;
      for (const auto& r : runs) ss += std::pow(field(r.report).mean - out.mean, 2);
      out.stddev = std::sqrt(ss / static_cast<double>(runs.size() - 1));
    }
    return out;
  };
  row.report.rank1 = combine([](const EvalReport& e) { return e.rank1; });
  row.report.rank10 = combine([](const EvalReport& e) { return e.rank10; });
  row.report.rank20 = combine([](const EvalReport& e) { return e.rank20; });
  row.report.map = combine([](const EvalReport& e) { return e.map; });
  row.report.splits = runs.empty() ? 0 : runs.front().report.splits;
  return row;
}

double modality_accuracy(const Tensor& probs, const std::vector<Sample>& samples) {
  if (probs.rank() != 2 || probs.dim(1) != 2 || probs.dim(0) != samples.size()) {
    throw std::invalid_argument("modality_accuracy: expected [n,2] probabilities for n samples");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::size_t guess = probs[2 * i + 1] > probs[2 * i] ? 1 : 0;
    correct += guess == static_cast<std::size_t>(samples[i].modality);
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

double probe_modality_accuracy(const Tensor& train_embeddings, const std::vector<Sample>& train,
                               const Tensor& test_embeddings, const std::vector<Sample>& test,
                               std::size_t hidden, std::uint64_t seed, std::size_t steps) {
  std::size_t d = train_embeddings.dim(1);
  Rng rng(seed);
  Tensor w1 = random_normal(rng, {d, hidden}, std::sqrt(2.0 / d), true);
  Tensor b1 = Tensor::zeros({hidden}, true);
  Tensor w2 = random_normal(rng, {hidden, 2}, std::sqrt(1.0 / hidden), true);
  Tensor b2 = Tensor::zeros({2}, true);
  std::vector<Tensor> params{w1, b1, w2, b2};
  auto forward = [&](const Tensor& x) { return softmax(linear(relu(linear(x, w1, b1)), w2, b2)); };

  Tensor x_train, x_test;
  {
    NoGradGuard guard;
    x_train = l2_normalize(train_embeddings);
    x_test = l2_normalize(test_embeddings);
  }
  std::vector<std::size_t> labels;
  for (const auto& s : train) labels.push_back(static_cast<std::size_t>(s.modality));

  Sgd opt({0.9, 0.0});
  auto& tape = Tape::current();
  for (std::size_t i = 0; i < steps; ++i) {
    tape.clear();
    for (auto& p : params) p.zero_grad();
    backward(discriminator_loss(forward(x_train), labels));
    tape.clear();
    opt.step(params, 0.1);
  }
  NoGradGuard guard;
  return modality_accuracy(forward(x_test), test);
}

VariantResult run_variant(const RunConfig& config, const Variant& variant, std::size_t seeds,
                          const Dataset& dataset,
                          const std::function<void(const SeedRun&)>& on_run) {
  RunConfig cfg = apply_variant(config, variant);
  cfg.finalize();
  VariantResult result{variant, {}};
  for (std::size_t s = 0; s < seeds; ++s) {
    auto t0 = std::chrono::steady_clock::now();
    SeedRun run;
    run.seed = cfg.seed + s;
    Model model(cfg.model, run.seed);
    fit(model, dataset, cfg.train, cfg.loss, run.seed);
    EvalOptions eo = cfg.eval;
    eo.seed = run.seed;
    Tensor test_emb = embed_samples(model, dataset.test);
    run.report = evaluate_embeddings(test_emb, dataset.test, eo);
    Tensor train_emb = embed_samples(model, dataset.train);
    if (cfg.model.mal) {
      NoGradGuard guard;
      run.disc_accuracy = modality_accuracy(model.discriminate(test_emb), dataset.test);
    }
    run.probe_accuracy = probe_modality_accuracy(train_emb, dataset.train, test_emb, dataset.test,
                                                 cfg.model.disc_hidden, run.seed);
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_run) on_run(run);
    result.runs.push_back(run);
  }
  return result;
}

}  // namespace fdmnet
