#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evlab/dataset.hpp"
#include "evlab/model.hpp"
#include "evlab/rng.hpp"
#include "evlab/roc.hpp"
#include "evlab/splits.hpp"

namespace evlab {

enum class Regime { BaselineScratch, BinarySame, AutoEncoder, Siamese, CrossTask };

std::string_view to_string(Regime r);
/// "baseline" | "binary" | "ae" | "siamese" | "crosstask"
Regime parse_regime(std::string_view s);

struct TrainConfig {
  Regime regime = Regime::BinarySame;
  double lr_pretrain = 1e-3;
  double lr_finetune = 1e-4;
  int epochs = 7;
  int finetune_epochs = 7;
  std::size_t batch = 128;
  FreezePolicy freeze = FreezePolicy::ThroughPenultimate;
  std::uint64_t seed = 0;
  /// Fine-tuning and evaluation task.
  Task task = Task::Match;
  /// Pre-training labels for CrossTask (must differ from `task`); other
  /// regimes pre-train on `task`.
  Task pretrain_task = Task::Match;
  /// Pairs drawn per Siamese epoch; 0 means one pair per pre-training trial.
  std::size_t siamese_pairs = 0;

  /// Throws UsageError on invalid settings.
  void validate() const;
  Task effective_pretrain_task() const { return regime == Regime::CrossTask ? pretrain_task : task; }
};

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> auc;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;
  /// Sorted ids of every trial that entered a gradient step.
  std::vector<std::string> trained_trials;

  void note_trials(std::span<const std::string> ids);
};

/// Trials with aligned 0/1 labels.
struct LabeledTrials {
  std::vector<const Trial*> trials;
  std::vector<int> labels;

  std::size_t size() const { return trials.size(); }
};

/// Looks up `ids` in `pool` and labels them for `task`. Throws UsageError on
/// unknown ids.
LabeledTrials gather(std::span<const Trial> pool, std::span<const std::string> ids, Task task);

/// Stacks trials at `indices` into [B, C, 256].
Tensor stack_trials(std::span<const Trial* const> trials, std::span<const std::size_t> indices);

struct TrialPair {
  std::size_t i;
  std::size_t j;
  /// 1 iff the two trials carry different labels.
  int y;
};

/// Exactly n_pairs pairs, floor(n/2) same-class (y = 0) and the rest
/// different-class (y = 1), uniform over eligible ordered index pairs, i != j.
std::vector<TrialPair> make_pairs(std::span<const int> labels, std::size_t n_pairs, Rng& rng);

struct PretrainResult {
  Model model;
  std::optional<SiameseHead> head;
  TrainHistory history;
};

/// Pre-trains a fresh convolutional net on `data` according to config.regime
/// (BCE for BinarySame / CrossTask, decoder MSE for AutoEncoder, pair BCE
/// for Siamese). `data.labels` must already carry the pre-training labels;
/// they are ignored by AutoEncoder.
PretrainResult pretrain(const LabeledTrials& data, const TrainConfig& config, Rng& rng);

/// BCE training of `model` in place, honoring its freeze flags.
TrainHistory train_binary(Model& model, const LabeledTrials& data, double lr, int epochs, std::size_t batch, Rng& rng);

/// Fine-tunes a copy of `model`: applies config.freeze (None for the scratch
/// baseline), re-draws the output layer for Siamese and AutoEncoder
/// transfers, and trains with BCE at lr_finetune (lr_pretrain for the
/// scratch baseline).
std::pair<Model, TrainHistory> finetune(const Model& model, const LabeledTrials& folds, const TrainConfig& config,
                                        Rng& rng);

/// Probabilities for every trial, evaluated in batches without gradients.
std::vector<double> predict(const Model& model, std::span<const Trial* const> trials, std::size_t batch = 128);

std::string experiment_name(Regime regime, FreezePolicy freeze);

struct FoldOutcome {
  double fraction = 0.0;
  double auc = 0.0;
  std::vector<double> scores;
  std::vector<int> labels;
  TrainHistory history;
  Model model{ModelKind::ParallelConvNet, 1};
};

struct ExperimentResult {
  ResultRow row;
  std::optional<TrainHistory> pretrain_history;
  std::array<FoldOutcome, 3> folds;
  /// Trials of T that appeared in any gradient step (must be empty).
  std::vector<std::string> leaked_test_trials;
};

/// Pre-trains once (unless BaselineScratch), fine-tunes on F1, F1+F2 and
/// F1+F2+F3, and scores T after each. `pool` must already be channel-selected.
ExperimentResult run_experiment(const TrainConfig& config, std::span<const Trial> pool, const SplitPlan& plan);

}  // namespace evlab
