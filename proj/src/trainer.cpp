#include "fdmnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "fdmnet/data_io.hpp"
#include "fdmnet/ops.hpp"

namespace fdmnet {

void TrainSchedule::validate() const {
  if (epochs == 0) throw std::invalid_argument("train.epochs must be positive");
  if (!(base_lr >= 0.0)) throw std::invalid_argument("train.base_lr must be non-negative");
  double prev = 0.0;
  for (double m : milestones) {
    if (!(m > prev && m < 1.0)) {
      throw std::invalid_argument("train.milestones must increase strictly within (0,1)");
    }
    prev = m;
  }
  if (P * K < 2 || P == 0 || K == 0) throw std::invalid_argument("train: need P*K >= 2");
  if (momentum < 0.0 || weight_decay < 0.0) {
    throw std::invalid_argument("train: momentum and weight decay must be non-negative");
  }
}

double TrainSchedule::lr_at(std::size_t epoch) const {
  double lr = base_lr;
  for (double m : milestones) {
    if (static_cast<double>(epoch) > std::round(m * static_cast<double>(epochs))) lr *= 0.1;
  }
  return lr;
}

IdentityIndex::IdentityIndex(const std::vector<Sample>& samples) {
  std::map<std::size_t, std::size_t> label;
  for (const auto& s : samples) label.emplace(s.identity, 0);
  for (auto& [id, l] : label) {
    l = identities_.size();
    identities_.push_back(id);
  }
  visible_.resize(identities_.size());
  infrared_.resize(identities_.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto l = label[samples[i].identity];
    (samples[i].modality == Modality::visible ? visible_ : infrared_)[l].push_back(i);
  }
}

Tensor flip_horizontal(const Tensor& image) {
  if (image.rank() != 3) throw std::invalid_argument("flip_horizontal: expected [H,W,C]");
  std::size_t H = image.dim(0), W = image.dim(1), C = image.dim(2);
  auto x = image.data();
  std::vector<double> out(x.size());
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w)
      for (std::size_t c = 0; c < C; ++c) out[(h * W + w) * C + c] = x[(h * W + (W - 1 - w)) * C + c];
  return Tensor::from(image.shape(), std::move(out));
}

Batch sample_batch(const std::vector<Sample>& samples, const IdentityIndex& index, std::size_t P,
                   std::size_t K, Rng& rng, bool flip) {
  if (P > index.size()) {
    throw std::invalid_argument("sample_batch: P = " + std::to_string(P) + " but only " +
                                std::to_string(index.size()) + " identities");
  }
  Batch b;
  std::vector<Tensor> vis, ir;
  auto take = [&](const std::vector<std::size_t>& pool, std::size_t label, std::vector<Tensor>& out,
                  std::vector<std::size_t>& labels, const char* what) {
    if (pool.size() < K) {
      throw std::invalid_argument("sample_batch: identity " + std::to_string(index.identity(label)) +
                                  " has " + std::to_string(pool.size()) + " " + what +
                                  " images, need K = " + std::to_string(K));
    }
    for (auto j : rng.sample_without_replacement(pool.size(), K)) {
      const auto& img = samples[pool[j]].image;
      out.push_back(flip && rng.bernoulli(0.5) ? flip_horizontal(img) : img);
      labels.push_back(label);
    }
  };
  for (auto label : rng.sample_without_replacement(index.size(), P)) {
    take(index.visible(label), label, vis, b.labels_visible, "visible");
    take(index.infrared(label), label, ir, b.labels_infrared, "infrared");
  }
  auto stack = [](const std::vector<Tensor>& images) {
    Shape s = images.front().shape();
    std::vector<double> v;
    v.reserve(images.size() * images.front().numel());
    for (const auto& t : images) v.insert(v.end(), t.data().begin(), t.data().end());
    s.insert(s.begin(), images.size());
    return Tensor::from(std::move(s), std::move(v));
  };
  b.visible = stack(vis);
  b.infrared = stack(ir);
  return b;
}

namespace {

void zero_grads(const NamedTensors& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    auto g = t.mutable_grad();
    std::fill(g.begin(), g.end(), 0.0);
  }
}

bool finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

std::vector<std::size_t> range(std::size_t from, std::size_t to) {
  std::vector<std::size_t> out;
  for (std::size_t i = from; i < to; ++i) out.push_back(i);
  return out;
}

double accuracy(const Tensor& probs, const std::vector<std::size_t>& labels) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t pred = probs[2 * i + 1] > probs[2 * i] ? 1 : 0;
    hits += pred == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

void require_finite(const NamedTensors& terms, const NamedTensors& params) {
  bool ok = std::all_of(terms.begin(), terms.end(),
                        [](const NamedTensor& t) { return finite(t.tensor.data()); });
  if (ok) return;
  NamedTensors offending = terms;
  std::ostringstream msg;
  msg << "non-finite loss:";
  for (const auto& t : terms) msg << ' ' << t.name << '=' << t.tensor.item();
  for (const auto& p : params) {
    if (!finite(p.tensor.data())) {
      offending.push_back(p);
      msg << "; parameter " << p.name << " is non-finite";
    }
    if (p.tensor.has_grad() && !finite(p.tensor.grad())) {
      offending.push_back({p.name + ".grad", Tensor::from(p.tensor.shape(),
                                                          {p.tensor.grad().begin(), p.tensor.grad().end()})});
      msg << "; gradient of " << p.name << " is non-finite";
    }
  }
  throw NumericalError(msg.str(), std::move(offending));
}

}  // namespace

Trainer::Trainer(Model& model, const TrainSchedule& schedule, const LossWeights& weights)
    : model_(model),
      weights_(weights),
      disc_opt_({schedule.momentum, schedule.weight_decay}),
      main_opt_({schedule.momentum, schedule.weight_decay}) {
  schedule.validate();
  weights.validate();
}

StepMetrics Trainer::step(const Batch& batch, double lr) {
  const auto& cfg = model_.config();
  auto& tape = Tape::current();
  std::size_t n = batch.visible.dim(0), m = batch.infrared.dim(0);
  std::vector<std::size_t> modality(n, 0);
  modality.resize(n + m, 1);
  std::vector<std::size_t> labels = batch.labels_visible;
  labels.insert(labels.end(), batch.labels_infrared.begin(), batch.labels_infrared.end());
  Tensor both = concat({batch.visible, batch.infrared}, 0);
  NamedTensors all = model_.parameters();
  StepMetrics out;
  tape.clear();

  if (cfg.mal) {
    auto theta_m = model_.theta_m();
    Tensor features;
    {
      NoGradGuard guard;
      features = model_.embed(both, {true, false});
    }
    zero_grads(all);
    Tensor probs = model_.discriminate(features);
    Tensor loss = discriminator_loss(probs, modality);
    require_finite({{"L_m", loss}}, all);
    backward(loss);
    tape.clear();
    auto params = tensors_of(theta_m);
    disc_opt_.step(params, lr);
    out.discriminator = loss.item();
    out.disc_accuracy = accuracy(probs, modality);
  }

  zero_grads(all);
  bool guidance = cfg.use_iaf && cfg.grayscale_guidance;
  bool with_gray = guidance || cfg.gray_identity;
  Tensor input = with_gray ? concat({both, to_grayscale(batch.visible)}, 0) : both;
  Tensor filtered = model_.filter(input, {true, true});
  Tensor to_extract =
      with_gray && !cfg.gray_identity ? index_select(filtered, range(0, n + m)) : filtered;
  Tensor all_features = model_.extract(to_extract, {true, true});
  Tensor features = cfg.gray_identity ? index_select(all_features, range(0, n + m)) : all_features;
  Tensor logits = model_.classify(all_features);

  Tensor id = identity_loss(index_select(logits, range(0, n)), batch.labels_visible,
                            index_select(logits, range(n, n + m)), batch.labels_infrared);
  if (cfg.gray_identity) {
    id = add(id, cross_entropy(index_select(logits, range(n + m, n + m + n)), batch.labels_visible));
  }
  Tensor cc = center_cluster_loss(features, labels, weights_.rho);
  Tensor con = guidance ? consistency_loss(index_select(filtered, range(0, n)),
                                           index_select(filtered, range(n + m, n + m + n)))
                        : Tensor::scalar(0.0);
  Tensor adv = cfg.mal ? confusion_loss(model_.discriminate(features)) : Tensor::scalar(0.0);
  Tensor total = total_loss({adv, id, con, cc}, weights_);
  require_finite({{"L_id", id}, {"L_cc", cc}, {"L_con", con}, {"L_e", adv}, {"L", total}}, all);
  backward(total);
  tape.clear();
  auto params = tensors_of(model_.theta_a());
  for (auto& t : tensors_of(model_.theta_e())) params.push_back(t);
  main_opt_.step(params, lr);

  out.identity = id.item();
  out.center = cc.item();
  out.consistency = con.item();
  out.adversarial = adv.item();
  out.total = total.item();
  return out;
}

void save_checkpoint(const std::filesystem::path& dir, const Model& model,
                     const std::string& config_text) {
  save_tensors(dir, model.state());
  std::ofstream cfg(dir / "model.cfg");
  if (!cfg) throw std::runtime_error("cannot write " + (dir / "model.cfg").string());
  cfg << config_text;
}

void load_checkpoint(const std::filesystem::path& dir, Model& model) {
  load_tensors(dir, model.state());
}

std::vector<EpochLog> fit(Model& model, const Dataset& dataset, const TrainSchedule& schedule,
                          const LossWeights& weights, std::uint64_t seed,
                          const FitOptions& options) {
  schedule.validate();
  IdentityIndex index(dataset.train);
  if (index.size() != model.config().num_identities) {
    throw std::invalid_argument("fit: model classifies " +
                                std::to_string(model.config().num_identities) +
                                " identities, training split has " + std::to_string(index.size()));
  }
  Trainer trainer(model, schedule, weights);
  Rng rng = Rng(seed).fork(17);
  std::size_t batch = 2 * schedule.P * schedule.K;
  std::size_t steps = schedule.steps_per_epoch
                          ? schedule.steps_per_epoch
                          : std::max<std::size_t>(1, (dataset.train.size() + batch - 1) / batch);

  std::ofstream log;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    log.open(options.out_dir / "train_log.csv");
    if (!log) throw std::runtime_error("cannot write " + (options.out_dir / "train_log.csv").string());
    log << "epoch,L_id,L_cc,L_con,L_e,L_m,disc_acc,lr\n";
    log.precision(10);
  }

  std::vector<EpochLog> history;
  for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
    EpochLog e;
    e.epoch = epoch;
    e.lr = schedule.lr_at(epoch);
    for (std::size_t s = 0; s < steps; ++s) {
      auto b = sample_batch(dataset.train, index, schedule.P, schedule.K, rng, schedule.flip);
      StepMetrics sm;
      try {
        sm = trainer.step(b, e.lr);
      } catch (const NumericalError& err) {
        if (!options.out_dir.empty()) save_tensors(options.out_dir / "nan_dump", err.offending());
        throw;
      }
      e.mean.identity += sm.identity / steps;
      e.mean.center += sm.center / steps;
      e.mean.consistency += sm.consistency / steps;
      e.mean.adversarial += sm.adversarial / steps;
      e.mean.discriminator += sm.discriminator / steps;
      e.mean.disc_accuracy += sm.disc_accuracy / steps;
      e.mean.total += sm.total / steps;
    }
    if (log.is_open()) {
      log << epoch << ',' << e.mean.identity << ',' << e.mean.center << ',' << e.mean.consistency
          << ',' << e.mean.adversarial << ',' << e.mean.discriminator << ','
          << e.mean.disc_accuracy << ',' << e.lr << '\n';
      log.flush();
      save_checkpoint(options.out_dir / "checkpoint", model, options.config_text);
    }
    if (options.on_epoch) options.on_epoch(e);
    history.push_back(e);
  }
  return history;
}

}  // namespace fdmnet
