#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evlab/dataset.hpp"

namespace evlab {

enum class Scenario { One, Two };

/// Subject- and trial-level partition of a dataset.
///
/// Scenario One fills the subject lists only. Scenario Two keeps them and adds
/// trial-id lists: `pretrain` holds every learnable trial of the train and
/// validation subjects, and the test subjects' trials are dealt into
/// f1/f2/f3/t.
struct SplitPlan {
  Scenario scenario = Scenario::One;
  std::uint64_t seed = 0;
  std::vector<std::string> train_subjects;
  std::vector<std::string> val_subjects;
  std::vector<std::string> test_subjects;
  std::vector<std::string> pretrain;
  std::vector<std::string> f1;
  std::vector<std::string> f2;
  std::vector<std::string> f3;
  std::vector<std::string> t;

  /// F1, F1+F2 or F1+F2+F3 for k = 1, 2, 3.
  std::vector<std::string> finetune_folds(int k) const;

  /// Throws UsageError if any disjointness invariant is violated.
  /// `trials` (optional) maps trial ids back to subjects for the
  /// Scenario Two pretrain-vs-F/T check.
  void check_invariants(std::span<const Trial> trials = {}) const;

  std::string to_json() const;
  static SplitPlan from_json(const std::string& text);
};

/// floor(0.7n) train, floor(0.2n) test, remainder validation. n >= 5.
SplitPlan split_scenario1(std::vector<std::string> subjects, std::uint64_t seed);

SplitPlan split_scenario2(const SplitPlan& plan1, std::span<const Trial> trials, std::uint64_t seed);

}  // namespace evlab
