#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "evlab/dataset.hpp"
#include "evlab/model.hpp"
#include "evlab/rng.hpp"
#include "evlab/tensor.hpp"

namespace evlab {

/// Differentiable scalar output per batch row: [B, ...] -> [B].
using BatchFunction = std::function<Tensor(const Tensor&)>;

/// Probability head of a classifier; gradients reach only the input.
BatchFunction probability_function(const Model& model);

struct AttributionMap {
  Shape shape;
  std::vector<double> phi;
  double f_x = 0.0;
  double f_baseline = 0.0;
  /// |Σφ − (f_x − f_baseline)|
  double completeness_gap = 0.0;
  int steps = 0;
  std::string baseline_kind = "zero";

  double total() const;
};

/// Midpoint-rule integrated gradients along the straight path from
/// `baseline` to `x`. Path points are evaluated `chunk` at a time.
AttributionMap integrated_gradients(const BatchFunction& f, const Tensor& x, const Tensor& baseline, int steps = 64,
                                    std::size_t chunk = 64);
AttributionMap integrated_gradients(const Model& model, const Tensor& x, int steps = 64);

struct CompletenessResult {
  bool pass = false;
  double gap = 0.0;
  double bound = 0.0;
};

/// pass iff gap <= rel_tol·|f_x − f_baseline| + abs_tol.
CompletenessResult completeness_check(const AttributionMap& map, double rel_tol = 1e-2, double abs_tol = 1e-3);

struct FidelityResult {
  /// max |g(z') − F(h_x(z'))| over sampled masks.
  double max_deviation = 0.0;
  double all_ones_deviation = 0.0;
  double all_zeros_deviation = 0.0;
  std::size_t masks = 0;
};

/// Samples masks within Hamming distance `max_flips` of all-ones; a zero
/// entry substitutes the baseline value for that feature.
FidelityResult local_fidelity_check(const BatchFunction& f, const Tensor& x, const Tensor& baseline,
                                    const AttributionMap& map, std::size_t n_masks, std::size_t max_flips,
                                    Rng& rng);

enum class CohortKind { TruePositive, TrueNegative };
std::string_view to_string(CohortKind k);

struct ExplainerCohort {
  CohortKind kind = CohortKind::TruePositive;
  double threshold = 0.51;
  std::size_t top_n = 50;
  /// Indices into the scored list, most extreme score first.
  std::vector<std::size_t> members;
  std::vector<std::string> ids;
  std::vector<double> scores;

  bool empty() const { return members.empty(); }
};

/// TP: score > threshold and label 1, ranked by descending score.
/// TN: score < threshold and label 0, ranked by ascending score.
ExplainerCohort build_cohort(std::span<const double> scores, std::span<const int> labels,
                             std::span<const std::string> ids, CohortKind kind, double threshold = 0.51,
                             std::size_t top_n = 50);

struct AggregateMap {
  std::vector<std::string> channel_names;
  std::size_t samples = 0;
  /// channels × samples signed mean.
  std::vector<double> mean;
  /// Mean over time per channel.
  std::vector<double> channel_mean;
  std::size_t count = 0;

  std::size_t channels() const { return channel_names.size(); }
  /// Mean over time of |mean| per channel.
  std::vector<double> channel_abs_mean() const;
};

/// Elementwise mean of [C, L] maps in list order.
AggregateMap aggregate_attributions(std::span<const AttributionMap> maps, std::vector<std::string> channel_names);

struct ExplainerOptions {
  double threshold = 0.51;
  std::size_t top_n = 50;
  int steps = 64;
};

struct ExplainerResult {
  ExplainerCohort tp;
  ExplainerCohort tn;
  AggregateMap tp_map;
  AggregateMap tn_map;
  std::vector<AttributionMap> tp_members;
  std::vector<AttributionMap> tn_members;
};

/// Scores `trials`, ranks TP/TN cohorts, attributes each member with IG
/// against the zero baseline and aggregates per cohort.
ExplainerResult run_explainer(const Model& model, std::span<const Trial* const> trials, std::span<const int> labels,
                              const ExplainerOptions& options = {});

}  // namespace evlab
