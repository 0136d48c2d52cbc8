#include "evlab/regimes.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iterator>
#include <numeric>
#include <unordered_map>

#include "evlab/errors.hpp"
#include "evlab/ops.hpp"
#include "evlab/optim.hpp"

namespace evlab {

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::BaselineScratch: return "baseline";
    case Regime::BinarySame: return "binary";
    case Regime::AutoEncoder: return "ae";
    case Regime::Siamese: return "siamese";
    case Regime::CrossTask: return "crosstask";
  }
  return "?";
}

Regime parse_regime(std::string_view s) {
  for (auto r : {Regime::BaselineScratch, Regime::BinarySame, Regime::AutoEncoder, Regime::Siamese,
                 Regime::CrossTask}) {
    if (s == to_string(r)) return r;
  }
  throw UsageError("unknown regime '" + std::string(s) + "' (baseline|binary|ae|siamese|crosstask)");
}

void TrainConfig::validate() const {
  if (batch < 1) throw UsageError("batch must be >= 1");
  if (!(lr_pretrain > 0.0) || !(lr_finetune > 0.0)) throw UsageError("learning rates must be > 0");
  if (epochs < 1 || finetune_epochs < 1) throw UsageError("epoch counts must be >= 1");
  if (regime == Regime::CrossTask && pretrain_task == task) {
    throw UsageError("cross-task regime needs pretrain_task != task");
  }
}

void TrainHistory::note_trials(std::span<const std::string> ids) {
  const auto mid = trained_trials.size();
  trained_trials.insert(trained_trials.end(), ids.begin(), ids.end());
  std::sort(trained_trials.begin() + static_cast<std::ptrdiff_t>(mid), trained_trials.end());
  std::inplace_merge(trained_trials.begin(), trained_trials.begin() + static_cast<std::ptrdiff_t>(mid),
                     trained_trials.end());
  trained_trials.erase(std::unique(trained_trials.begin(), trained_trials.end()), trained_trials.end());
}

LabeledTrials gather(std::span<const Trial> pool, std::span<const std::string> ids, Task task) {
  std::unordered_map<std::string_view, const Trial*> index;
  index.reserve(pool.size());
  for (const auto& t : pool) index.emplace(t.id, &t);
  LabeledTrials out;
  out.trials.reserve(ids.size());
  out.labels.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw UsageError("split refers to unknown trial " + id);
    out.trials.push_back(it->second);
    out.labels.push_back(label_trial(*it->second, task));
  }
  return out;
}

Tensor stack_trials(std::span<const Trial* const> trials, std::span<const std::size_t> indices) {
  if (indices.empty()) throw UsageError("cannot stack an empty batch");
  const std::size_t c = trials[indices[0]]->channels();
  const std::size_t per = c * kSamplesPerTrial;
  std::vector<double> data(indices.size() * per);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Trial& t = *trials[indices[b]];
    if (t.channels() != c) throw DimensionError("mixed channel counts in batch");
    std::copy(t.data.begin(), t.data.end(), data.begin() + static_cast<std::ptrdiff_t>(b * per));
  }
  return Tensor({indices.size(), c, kSamplesPerTrial}, std::move(data));
}

std::vector<TrialPair> make_pairs(std::span<const int> labels, std::size_t n_pairs, Rng& rng) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) throw UsageError("pairing needs both classes");
  if (pos.size() < 2 && neg.size() < 2) throw UsageError("pairing needs two trials of one class");

  const std::size_t n_same = n_pairs / 2;
  std::vector<TrialPair> pairs;
  pairs.reserve(n_pairs);
  // Ordered same-class pairs: pos.size()*(pos.size()-1) + neg.size()*(neg.size()-1).
  const std::uint64_t same_pos = pos.size() * (pos.size() - 1);
  const std::uint64_t same_neg = neg.size() * (neg.size() - 1);
  for (std::size_t k = 0; k < n_same; ++k) {
    std::uint64_t r = rng.below(same_pos + same_neg);
    const auto& cls = r < same_pos ? pos : neg;
    if (r >= same_pos) r -= same_pos;
    const std::size_t n = cls.size();
    const std::size_t a = r / (n - 1);
    std::size_t b = r % (n - 1);
    if (b >= a) ++b;
    pairs.push_back({cls[a], cls[b], 0});
  }
  const std::uint64_t diff = 2 * pos.size() * neg.size();
  for (std::size_t k = n_same; k < n_pairs; ++k) {
    const std::uint64_t r = rng.below(diff);
    const std::size_t half = pos.size() * neg.size();
    const std::size_t q = r % half;
    const std::size_t p = pos[q / neg.size()];
    const std::size_t n = neg[q % neg.size()];
    pairs.push_back(r < half ? TrialPair{p, n, 1} : TrialPair{n, p, 1});
  }
  rng.shuffle(pairs);
  return pairs;
}

namespace {

void check_finite(double loss, std::string_view phase, int epoch, std::size_t step) {
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite loss in " + std::string(phase) + " at epoch " + std::to_string(epoch) +
                       ", step " + std::to_string(step));
  }
}

std::vector<std::string> ids_of(const LabeledTrials& data, std::span<const std::size_t> idx) {
  std::vector<std::string> ids;
  ids.reserve(idx.size());
  for (auto i : idx) ids.push_back(data.trials[i]->id);
  return ids;
}

/// Drives `epochs` passes over shuffled minibatches of `n` items. `step`
/// returns the batch loss tensor; the loop does backward and the Adam update.
template <typename StepFn>
void run_epochs(std::vector<Tensor> params, double lr, int epochs, std::size_t n, std::size_t batch, Rng& rng,
                std::string_view phase, TrainHistory& history, StepFn&& step) {
  AdamState adam(lr);
  std::vector<std::size_t> order(n);
  for (int e = 1; e <= epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    double total = 0.0;
    std::size_t s = 0;
    for (std::size_t start = 0; start < n; start += batch, ++s) {
      const std::size_t end = std::min(n, start + batch);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      zero_grads(params);
      Tensor loss = step(idx);
      const double value = loss.item();
      check_finite(value, phase, e, s);
      loss.backward();
      adam_step(params, adam);
      total += value * static_cast<double>(idx.size());
    }
    history.epochs.push_back({e, total / static_cast<double>(n), std::nullopt});
  }
  zero_grads(params);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TrainHistory train_binary(Model& model, const LabeledTrials& data, double lr, int epochs, std::size_t batch,
                          Rng& rng) {
  if (data.size() == 0) throw UsageError("no training trials");
  const auto t0 = std::chrono::steady_clock::now();
  TrainHistory history;
  run_epochs(model.parameters(), lr, epochs, data.size(), batch, rng, "binary training", history,
             [&](std::span<const std::size_t> idx) {
               std::vector<double> y;
               y.reserve(idx.size());
               for (auto i : idx) y.push_back(data.labels[i]);
               history.note_trials(ids_of(data, idx));
               return ops::bce_loss(forward_probs(model, stack_trials(data.trials, idx)), y);
             });
  history.wall_seconds = seconds_since(t0);
  return history;
}

namespace {

TrainHistory train_autoencoder(Model& encoder, const LabeledTrials& data, const TrainConfig& config, Rng& rng) {
  Model decoder = build_decoder(encoder.channels(), rng);
  std::vector<Tensor> params;
  for (const auto& [name, t] : encoder.named_parameters()) {
    if (name.rfind("fc3.", 0) != 0) params.push_back(t);
  }
  for (const auto& t : decoder.parameters()) params.push_back(t);
  TrainHistory history;
  run_epochs(params, config.lr_pretrain, config.epochs, data.size(), config.batch, rng, "auto-encoder pretraining",
             history, [&](std::span<const std::size_t> idx) {
               history.note_trials(ids_of(data, idx));
               const Tensor x = stack_trials(data.trials, idx);
               const Tensor recon = forward(decoder, penultimate_embedding(encoder, x));
               return ops::mse_loss(recon, x.reshape({idx.size(), x.numel() / idx.size()}));
             });
  return history;
}

/// Sets the head shift to minus the mean pair distance of one probe batch so
/// the sigmoid starts unsaturated.
void calibrate_siamese_shift(const Model& model, SiameseHead& head, const LabeledTrials& data, std::size_t batch,
                             Rng& rng) {
  const auto pairs = make_pairs(data.labels, std::min<std::size_t>(batch, 2 * data.size()), rng);
  std::vector<std::size_t> ia, ib;
  for (const auto& p : pairs) {
    ia.push_back(p.i);
    ib.push_back(p.j);
  }
  const Model probe = model.detached();
  const Tensor d = ops::euclidean_distance(penultimate_embedding(probe, stack_trials(data.trials, ia)),
                                           penultimate_embedding(probe, stack_trials(data.trials, ib)));
  double mean = 0.0;
  for (double v : d.data()) mean += v;
  head.shift.mutable_data()[0] = -head.scale.item() * mean / static_cast<double>(d.numel());
}

TrainHistory train_siamese(Model& model, SiameseHead& head, const LabeledTrials& data, const TrainConfig& config,
                           Rng& rng) {
  std::vector<Tensor> params = model.parameters();
  // The output layer plays no part in the distance.
  std::erase_if(params, [&](const Tensor& t) {
    return t.node_ptr() == model.parameter("fc3.weight").node_ptr() ||
           t.node_ptr() == model.parameter("fc3.bias").node_ptr();
  });
  params.push_back(head.scale);
  params.push_back(head.shift);
  const std::size_t n_pairs = config.siamese_pairs ? config.siamese_pairs : data.size();

  TrainHistory history;
  calibrate_siamese_shift(model, head, data, config.batch, rng);
  AdamState adam(config.lr_pretrain);
  for (int e = 1; e <= config.epochs; ++e) {
    const auto pairs = make_pairs(data.labels, n_pairs, rng);
    double total = 0.0;
    std::size_t s = 0;
    for (std::size_t start = 0; start < pairs.size(); start += config.batch, ++s) {
      const std::size_t end = std::min(pairs.size(), start + config.batch);
      std::vector<std::size_t> ia, ib;
      std::vector<double> y;
      for (std::size_t k = start; k < end; ++k) {
        ia.push_back(pairs[k].i);
        ib.push_back(pairs[k].j);
        y.push_back(pairs[k].y);
      }
      history.note_trials(ids_of(data, ia));
      history.note_trials(ids_of(data, ib));
      zero_grads(params);
      Tensor loss = ops::bce_loss(
          siamese_prob(model, head, stack_trials(data.trials, ia), stack_trials(data.trials, ib)), y);
      const double value = loss.item();
      check_finite(value, "siamese pretraining", e, s);
      loss.backward();
      adam_step(params, adam);
      total += value * static_cast<double>(end - start);
    }
    history.epochs.push_back({e, total / static_cast<double>(pairs.size()), std::nullopt});
  }
  zero_grads(params);
  return history;
}

}  // namespace

PretrainResult pretrain(const LabeledTrials& data, const TrainConfig& config, Rng& rng) {
  config.validate();
  if (data.size() == 0) throw UsageError("pretraining data is empty");
  if (config.regime == Regime::BaselineScratch) throw UsageError("the scratch baseline has no pretraining stage");
  const auto t0 = std::chrono::steady_clock::now();
  PretrainResult out{build_parallel_conv_net(data.trials[0]->channels(), rng), std::nullopt, {}};
  switch (config.regime) {
    case Regime::BinarySame:
    case Regime::CrossTask:
      out.history = train_binary(out.model, data, config.lr_pretrain, config.epochs, config.batch, rng);
      break;
    case Regime::AutoEncoder:
      out.history = train_autoencoder(out.model, data, config, rng);
      break;
    case Regime::Siamese:
      out.head = SiameseHead{};
      out.history = train_siamese(out.model, *out.head, data, config, rng);
      break;
    case Regime::BaselineScratch:
      break;
  }
  out.history.wall_seconds = seconds_since(t0);
  return out;
}

std::pair<Model, TrainHistory> finetune(const Model& model, const LabeledTrials& folds, const TrainConfig& config,
                                        Rng& rng) {
  config.validate();
  if (folds.size() == 0) throw UsageError("fine-tuning fold is empty");
  Model tuned = model.clone();
  double lr = config.lr_finetune;
  if (config.regime == Regime::BaselineScratch) {
    apply_freeze(tuned, FreezePolicy::None);
    lr = config.lr_pretrain;
  } else {
    apply_freeze(tuned, config.freeze);
    if (config.regime == Regime::Siamese || config.regime == Regime::AutoEncoder) {
      reinitialize_output_layer(tuned, rng);
    }
  }
  TrainHistory h = train_binary(tuned, folds, lr, config.finetune_epochs, config.batch, rng);
  return {std::move(tuned), std::move(h)};
}

std::vector<double> predict(const Model& model, std::span<const Trial* const> trials, std::size_t batch) {
  const Model frozen = model.detached();
  std::vector<double> out;
  out.reserve(trials.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < trials.size(); start += batch) {
    idx.clear();
    for (std::size_t i = start; i < std::min(trials.size(), start + batch); ++i) idx.push_back(i);
    const Tensor p = forward_probs(frozen, stack_trials(trials, idx));
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return out;
}

std::string experiment_name(Regime regime, FreezePolicy freeze) {
  std::string base;
  switch (regime) {
    case Regime::BaselineScratch: return "Baseline";
    case Regime::BinarySame: base = "Binary"; break;
    case Regime::AutoEncoder: base = "Auto-encoder"; break;
    case Regime::Siamese: base = "Siamese"; break;
    case Regime::CrossTask: base = "Binary cross-task"; break;
  }
  switch (freeze) {
    case FreezePolicy::None: return base + " (no freeze)";
    case FreezePolicy::ThroughPenultimate: return base + " (freeze)";
    case FreezePolicy::LastTwoDense: return base + " (freeze last2)";
  }
  return base;
}

ExperimentResult run_experiment(const TrainConfig& config, std::span<const Trial> pool, const SplitPlan& plan) {
  config.validate();
  if (plan.scenario != Scenario::Two) throw UsageError("transfer experiments need a Scenario 2 split");
  plan.check_invariants(pool);

  ExperimentResult result;
  result.row.experiment = experiment_name(config.regime, config.freeze);
  const LabeledTrials test = gather(pool, plan.t, config.task);

  Rng root(config.seed);
  std::optional<Model> base;
  std::vector<std::string> seen;
  if (config.regime != Regime::BaselineScratch) {
    const LabeledTrials pre = gather(pool, plan.pretrain, config.effective_pretrain_task());
    Rng rng = root.fork(1);
    PretrainResult p = pretrain(pre, config, rng);
    seen = p.history.trained_trials;
    result.pretrain_history = std::move(p.history);
    base = std::move(p.model);
  }

  for (int k = 1; k <= 3; ++k) {
    const LabeledTrials folds = gather(pool, plan.finetune_folds(k), config.task);
    Rng rng = root.fork(10 + static_cast<std::uint64_t>(k));
    Model start = base ? base->clone() : build_parallel_conv_net(folds.trials[0]->channels(), rng);
    auto [tuned, history] = finetune(start, folds, config, rng);

    FoldOutcome& f = result.folds[static_cast<std::size_t>(k - 1)];
    f.fraction = 0.25 * k;
    f.scores = predict(tuned, test.trials);
    f.labels = test.labels;
    f.auc = roc_curve(f.scores, f.labels).auc;
    seen.insert(seen.end(), history.trained_trials.begin(), history.trained_trials.end());
    f.history = std::move(history);
    f.model = std::move(tuned);
    result.row.auc[static_cast<std::size_t>(k - 1)] = f.auc;
  }

  std::sort(seen.begin(), seen.end());
  std::vector<std::string> t_sorted = plan.t;
  std::sort(t_sorted.begin(), t_sorted.end());
  std::set_intersection(seen.begin(), seen.end(), t_sorted.begin(), t_sorted.end(),
                        std::back_inserter(result.leaked_test_trials));
  result.leaked_test_trials.erase(std::unique(result.leaked_test_trials.begin(), result.leaked_test_trials.end()),
                                  result.leaked_test_trials.end());
  return result;
}

}  // namespace evlab
