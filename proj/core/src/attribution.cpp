#include "evlab/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evlab/errors.hpp"
#include "evlab/ops.hpp"
#include "evlab/regimes.hpp"

namespace evlab {

BatchFunction probability_function(const Model& model) {
  auto frozen = std::make_shared<Model>(model.detached());
  return [frozen](const Tensor& x) { return forward_probs(*frozen, x); };
}

double AttributionMap::total() const {
  double s = 0.0;
  for (double v : phi) s += v;
  return s;
}

namespace {

Shape batched(std::size_t b, const Shape& s) {
  Shape out{b};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

double eval_one(const BatchFunction& f, const Tensor& x) {
  const Tensor y = f(Tensor(batched(1, x.shape()), std::vector<double>(x.data().begin(), x.data().end())));
  if (y.numel() != 1) throw DimensionError("attribution target must yield one value per row");
  return y.item();
}

}  // namespace

AttributionMap integrated_gradients(const BatchFunction& f, const Tensor& x, const Tensor& baseline, int steps,
                                    std::size_t chunk) {
  if (x.shape() != baseline.shape()) {
    throw DimensionError("baseline " + shape_str(baseline.shape()) + " does not match input " + shape_str(x.shape()));
  }
  if (steps < 1) throw UsageError("integrated gradients needs at least one step");
  if (chunk == 0) chunk = 1;
  const std::size_t n = x.numel();
  const auto xv = x.data();
  const auto bv = baseline.data();

  std::vector<double> grad_sum(n, 0.0);
  for (std::size_t start = 0; start < static_cast<std::size_t>(steps); start += chunk) {
    const std::size_t rows = std::min(chunk, static_cast<std::size_t>(steps) - start);
    std::vector<double> path(rows * n);
    for (std::size_t r = 0; r < rows; ++r) {
      const double alpha = (static_cast<double>(start + r) + 0.5) / steps;
      for (std::size_t i = 0; i < n; ++i) path[r * n + i] = bv[i] + alpha * (xv[i] - bv[i]);
    }
    Tensor input(batched(rows, x.shape()), std::move(path), true);
    const Tensor out = f(input);
    if (out.numel() != rows) throw DimensionError("attribution target must yield one value per row");
    ops::sum(out).backward();
    const auto g = input.grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < n; ++i) grad_sum[i] += g[r * n + i];
  }

  AttributionMap map;
  map.shape = x.shape();
  map.steps = steps;
  map.phi.resize(n);
  for (std::size_t i = 0; i < n; ++i) map.phi[i] = (xv[i] - bv[i]) * grad_sum[i] / steps;
  map.f_x = eval_one(f, x);
  map.f_baseline = eval_one(f, baseline);
  map.completeness_gap = std::abs(map.total() - (map.f_x - map.f_baseline));
  bool zero = std::all_of(bv.begin(), bv.end(), [](double v) { return v == 0.0; });
  map.baseline_kind = zero ? "zero" : "custom";
  return map;
}

AttributionMap integrated_gradients(const Model& model, const Tensor& x, int steps) {
  return integrated_gradients(probability_function(model), x, Tensor(x.shape()), steps);
}

CompletenessResult completeness_check(const AttributionMap& map, double rel_tol, double abs_tol) {
  CompletenessResult r;
  r.gap = map.completeness_gap;
  r.bound = rel_tol * std::abs(map.f_x - map.f_baseline) + abs_tol;
  r.pass = r.gap <= r.bound;
  return r;
}

FidelityResult local_fidelity_check(const BatchFunction& f, const Tensor& x, const Tensor& baseline,
                                    const AttributionMap& map, std::size_t n_masks, std::size_t max_flips,
                                    Rng& rng) {
  if (map.phi.size() != x.numel() || x.shape() != baseline.shape()) {
    throw DimensionError("attribution map does not match the explained input");
  }
  const std::size_t n = x.numel();
  const auto xv = x.data();
  const auto bv = baseline.data();
  FidelityResult r;
  r.all_ones_deviation = std::abs(map.f_baseline + map.total() - map.f_x);
  r.all_zeros_deviation = std::abs(map.f_baseline - eval_one(f, baseline));
  r.max_deviation = std::max(r.all_ones_deviation, r.all_zeros_deviation);

  std::vector<std::size_t> idx(n);
  for (std::size_t m = 0; m < n_masks; ++m) {
    const std::size_t flips = 1 + static_cast<std::size_t>(rng.below(std::max<std::size_t>(1, std::min(max_flips, n))));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates for the first `flips` positions.
    for (std::size_t k = 0; k < flips; ++k) std::swap(idx[k], idx[k + static_cast<std::size_t>(rng.below(n - k))]);
    std::vector<double> h(xv.begin(), xv.end());
    double g = map.f_baseline + map.total();
    for (std::size_t k = 0; k < flips; ++k) {
      h[idx[k]] = bv[idx[k]];
      g -= map.phi[idx[k]];
    }
    const double fh = eval_one(f, Tensor(x.shape(), std::move(h)));
    r.max_deviation = std::max(r.max_deviation, std::abs(g - fh));
    ++r.masks;
  }
  return r;
}

std::string_view to_string(CohortKind k) { return k == CohortKind::TruePositive ? "tp" : "tn"; }

ExplainerCohort build_cohort(std::span<const double> scores, std::span<const int> labels,
                             std::span<const std::string> ids, CohortKind kind, double threshold, std::size_t top_n) {
  if (scores.size() != labels.size() || (!ids.empty() && ids.size() != scores.size())) {
    throw DimensionError("cohort inputs are not aligned");
  }
  ExplainerCohort c;
  c.kind = kind;
  c.threshold = threshold;
  c.top_n = top_n;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool tp = kind == CohortKind::TruePositive && labels[i] == 1 && scores[i] > threshold;
    const bool tn = kind == CohortKind::TrueNegative && labels[i] == 0 && scores[i] < threshold;
    if (tp || tn) c.members.push_back(i);
  }
  std::stable_sort(c.members.begin(), c.members.end(), [&](std::size_t a, std::size_t b) {
    return kind == CohortKind::TruePositive ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  if (c.members.size() > top_n) c.members.resize(top_n);
  for (auto i : c.members) {
    c.scores.push_back(scores[i]);
    c.ids.push_back(ids.empty() ? std::to_string(i) : ids[i]);
  }
  return c;
}

std::vector<double> AggregateMap::channel_abs_mean() const {
  std::vector<double> out(channels(), 0.0);
  for (std::size_t c = 0; c < channels(); ++c) {
    for (std::size_t t = 0; t < samples; ++t) out[c] += std::abs(mean[c * samples + t]);
    out[c] /= static_cast<double>(samples);
  }
  return out;
}

AggregateMap aggregate_attributions(std::span<const AttributionMap> maps, std::vector<std::string> channel_names) {
  AggregateMap agg;
  agg.channel_names = std::move(channel_names);
  const std::size_t c = agg.channel_names.size();
  agg.samples = kSamplesPerTrial;
  if (!maps.empty() && maps[0].shape.size() == 2) agg.samples = maps[0].shape[1];
  agg.mean.assign(c * agg.samples, 0.0);
  agg.channel_mean.assign(c, 0.0);
  agg.count = maps.size();
  if (maps.empty()) return agg;
  for (const auto& m : maps) {
    if (m.shape != Shape{c, agg.samples}) {
      throw DimensionError("attribution map " + shape_str(m.shape) + " does not match " + std::to_string(c) +
                           " channels");
    }
    for (std::size_t i = 0; i < agg.mean.size(); ++i) agg.mean[i] += m.phi[i];
  }
  for (double& v : agg.mean) v /= static_cast<double>(maps.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t t = 0; t < agg.samples; ++t) agg.channel_mean[ch] += agg.mean[ch * agg.samples + t];
    agg.channel_mean[ch] /= static_cast<double>(agg.samples);
  }
  return agg;
}

ExplainerResult run_explainer(const Model& model, std::span<const Trial* const> trials, std::span<const int> labels,
                              const ExplainerOptions& options) {
  if (trials.size() != labels.size()) throw DimensionError("trials and labels are not aligned");
  if (trials.empty()) throw UsageError("nothing to explain");
  const auto scores = predict(model, trials);
  std::vector<std::string> ids;
  for (const auto* t : trials) ids.push_back(t->id);
  const auto f = probability_function(model);
  const auto names = trials[0]->channel_names;

  ExplainerResult r;
  auto explain = [&](CohortKind kind, ExplainerCohort& cohort, std::vector<AttributionMap>& maps) {
    cohort = build_cohort(scores, labels, ids, kind, options.threshold, options.top_n);
    for (auto i : cohort.members) {
      const Trial& t = *trials[i];
      const Tensor x({t.channels(), kSamplesPerTrial}, t.data);
      maps.push_back(integrated_gradients(f, x, Tensor(x.shape()), options.steps));
    }
  };
  explain(CohortKind::TruePositive, r.tp, r.tp_members);
  explain(CohortKind::TrueNegative, r.tn, r.tn_members);
  r.tp_map = aggregate_attributions(r.tp_members, names);
  r.tn_map = aggregate_attributions(r.tn_members, names);
  return r;
}

}  // namespace evlab
