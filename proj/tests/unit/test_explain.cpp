#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "evlab/attribution.hpp"
#include "evlab/dataset.hpp"
#include "evlab/errors.hpp"
#include "evlab/montage.hpp"
#include "evlab/ops.hpp"
#include "evlab/optim.hpp"
#include "evlab/render.hpp"
#include "evlab/synth.hpp"
#include "test_helpers.hpp"

using namespace evlab;
using evlab::testing::random_tensor;
using evlab::testing::T;
using evlab::testing::ToyCnn;
using evlab::testing::trained_toy;

namespace {

// F(x) = w·x + b for x of shape [n].
BatchFunction affine(std::vector<double> w, double b) {
  return [w, b](const Tensor& x) {
    const std::size_t n = w.size();
    return ops::linear(x, Tensor({1, n}, w), Tensor({1}, std::vector<double>{b})).reshape({x.dim(0)});
  };
}

BatchFunction weighted_elu(std::vector<double> w) {
  return [w](const Tensor& x) {
    return ops::linear(ops::elu(x), Tensor({1, w.size()}, w), Tensor({1})).reshape({x.dim(0)});
  };
}

ChannelMap sample_map(Rng& rng, std::vector<std::string> names, std::size_t samples = 256) {
  ChannelMap m;
  m.channel_names = std::move(names);
  m.samples = samples;
  for (std::size_t i = 0; i < m.channels() * samples; ++i) m.values.push_back(rng.normal() * 1e-3);
  return m;
}

}  // namespace

TEST(IntegratedGradients, AffineIsExact) {
  Rng rng(1);
  std::vector<double> w(10);
  for (auto& v : w) v = rng.normal();
  const auto f = affine(w, 0.7);
  const auto x = random_tensor({10}, rng, -2, 2, false);
  for (int m : {1, 7, 64}) {
    const auto map = integrated_gradients(f, x, Tensor({10}), m);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(map.phi[i], w[i] * x[i], 1e-12);
    EXPECT_LE(map.completeness_gap, 1e-12);
    EXPECT_EQ(map.steps, m);
    EXPECT_EQ(map.baseline_kind, "zero");
  }
  const auto base = random_tensor({10}, rng, -2, 2, false);
  const auto map = integrated_gradients(f, x, base, 3);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(map.phi[i], w[i] * (x[i] - base[i]), 1e-12);
  EXPECT_EQ(map.baseline_kind, "custom");
}

TEST(IntegratedGradients, SquareHasClosedFormPathIntegral) {
  const BatchFunction f = [](const Tensor& x) { return ops::mul(x, x).reshape({x.dim(0)}); };
  const auto map = integrated_gradients(f, T({1}, {1.0}), T({1}, {0.0}), 64);
  EXPECT_NEAR(map.phi[0], 1.0, 1e-12);
  EXPECT_NEAR(map.f_x - map.f_baseline, 1.0, 1e-15);
}

TEST(IntegratedGradients, CubeAtOneStepFailsCompleteness) {
  // Midpoint rule at m=1: phi = x * 3(x/2)^2 = 0.75 x^3 against x^3.
  const BatchFunction f = [](const Tensor& x) { return ops::mul(ops::mul(x, x), x).reshape({x.dim(0)}); };
  const auto one = integrated_gradients(f, T({1}, {2.0}), T({1}, {0.0}), 1);
  EXPECT_NEAR(one.phi[0], 6.0, 1e-12);
  EXPECT_FALSE(completeness_check(one).pass);
  const auto many = integrated_gradients(f, T({1}, {2.0}), T({1}, {0.0}), 256);
  EXPECT_TRUE(completeness_check(many).pass);
}

TEST(IntegratedGradients, MissingnessIsExact) {
  Rng rng(2);
  ToyCnn net(rng);
  const BatchFunction f = [&](const Tensor& x) { return net(x); };
  auto x = random_tensor({1, 32}, rng, -1, 1, false);
  const auto same = integrated_gradients(f, x, x.clone(), 16);
  for (double v : same.phi) EXPECT_EQ(v, 0.0);
  auto base = random_tensor({1, 32}, rng, -1, 1, false);
  for (std::size_t i = 0; i < 32; i += 3) base.mutable_data()[i] = x[i];
  const auto partial = integrated_gradients(f, x, base, 16);
  for (std::size_t i = 0; i < 32; i += 3) EXPECT_EQ(partial.phi[i], 0.0);
}

TEST(IntegratedGradients, SymmetricRolesGetEqualAttribution) {
  const auto f = weighted_elu({0.8, 0.8, -0.3});
  const auto map = integrated_gradients(f, T({3}, {-1.2, -1.2, 0.5}), Tensor({3}), 32);
  EXPECT_DOUBLE_EQ(map.phi[0], map.phi[1]);
}

TEST(IntegratedGradients, ConsistencyProbe) {
  // Model A depends on feature 0 at least as much as model B at every point.
  const auto a = weighted_elu({2.0, 1.0});
  const auto b = weighted_elu({1.0, 1.0});
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_tensor({2}, rng, 0.1, 3, false);
    EXPECT_GE(integrated_gradients(a, x, Tensor({2}), 16).phi[0], integrated_gradients(b, x, Tensor({2}), 16).phi[0]);
  }
}

TEST(IntegratedGradients, TrainedToyCnnConverges) {
  Rng rng(4);
  const auto net = trained_toy(rng);
  const BatchFunction f = [&](const Tensor& x) { return net(x); };
  for (int probe = 0; probe < 3; ++probe) {
    std::vector<double> xs;
    for (int t = 0; t < 32; ++t) xs.push_back(2.0 * std::sin(t / 3.0) + 0.3 * rng.normal());
    const Tensor x({1, 32}, xs);
    double prev = INFINITY;
    for (int m = 8; m <= 256; m *= 2) {
      const auto map = integrated_gradients(f, x, Tensor({1, 32}), m, 32);
      EXPECT_LE(map.completeness_gap, prev + 1e-6) << "m=" << m;
      prev = map.completeness_gap;
      if (m == 256) EXPECT_TRUE(completeness_check(map).pass) << map.completeness_gap;
    }
  }
}

TEST(IntegratedGradients, ChunkingDoesNotChangeResult) {
  Rng rng(5);
  ToyCnn net(rng);
  const BatchFunction f = [&](const Tensor& x) { return net(x); };
  const auto x = random_tensor({1, 32}, rng, -1, 1, false);
  const auto a = integrated_gradients(f, x, Tensor({1, 32}), 20, 20);
  const auto b = integrated_gradients(f, x, Tensor({1, 32}), 20, 3);
  for (std::size_t i = 0; i < 32; ++i) EXPECT_NEAR(a.phi[i], b.phi[i], 1e-14);
}

TEST(IntegratedGradients, Errors) {
  const auto f = affine({1, 1}, 0);
  EXPECT_THROW(integrated_gradients(f, Tensor({2}), Tensor({3}), 4), DimensionError);
  EXPECT_THROW(integrated_gradients(f, Tensor({2}), Tensor({2}), 0), UsageError);
}

TEST(IntegratedGradients, ModelOverloadCompletesOnNetwork) {
  Rng rng(6);
  const auto m = build_parallel_conv_net(1, rng);
  const auto x = random_tensor({1, 256}, rng, -3, 3, false);
  const auto map = integrated_gradients(m, x, 32);
  EXPECT_EQ(map.shape, (Shape{1, 256}));
  EXPECT_EQ(map.f_baseline, 0.5);
  EXPECT_NEAR(map.f_x, forward_prob(m, x), 1e-15);
  EXPECT_NEAR(map.completeness_gap, std::abs(map.total() - (map.f_x - map.f_baseline)), 1e-15);
}

TEST(Completeness, Bound) {
  AttributionMap map;
  map.f_x = 0.9;
  map.f_baseline = 0.5;
  map.completeness_gap = 0.004 + 1e-3 - 1e-9;
  EXPECT_TRUE(completeness_check(map).pass);
  map.completeness_gap = 0.004 + 1e-3 + 1e-9;
  const auto r = completeness_check(map);
  EXPECT_FALSE(r.pass);
  EXPECT_NEAR(r.bound, 0.005, 1e-15);
}

TEST(LocalFidelity, LinearIsExactAndEndpointsMatch) {
  Rng rng(7);
  std::vector<double> w(12);
  for (auto& v : w) v = rng.normal();
  const auto f = affine(w, -0.2);
  const auto x = random_tensor({12}, rng, -1, 1, false);
  const auto base = random_tensor({12}, rng, -1, 1, false);
  const auto map = integrated_gradients(f, x, base, 8);
  const auto r = local_fidelity_check(f, x, base, map, 50, 4, rng);
  EXPECT_EQ(r.masks, 50u);
  EXPECT_LE(r.max_deviation, 1e-12);

  ToyCnn net(rng);
  const BatchFunction g = [&](const Tensor& t) { return net(t); };
  const auto xt = random_tensor({1, 32}, rng, -1, 1, false);
  const auto mt = integrated_gradients(g, xt, Tensor({1, 32}), 16);
  const auto rt = local_fidelity_check(g, xt, Tensor({1, 32}), mt, 20, 3, rng);
  EXPECT_NEAR(rt.all_ones_deviation, mt.completeness_gap, 1e-15);
  EXPECT_EQ(rt.all_zeros_deviation, 0.0);
  EXPECT_GE(rt.max_deviation, rt.all_ones_deviation);
}

TEST(Cohort, FilterRankTruncate) {
  const std::vector<double> s = {0.6, 0.9, 0.4};
  const std::vector<int> y = {1, 1, 0};
  const std::vector<std::string> ids = {"a", "b", "c"};
  const auto tp = build_cohort(s, y, ids, CohortKind::TruePositive);
  EXPECT_EQ(tp.members, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(tp.ids, (std::vector<std::string>{"b", "a"}));
  EXPECT_EQ(tp.scores, (std::vector<double>{0.9, 0.6}));
  EXPECT_EQ(build_cohort(s, y, ids, CohortKind::TruePositive, 0.51, 1).ids, (std::vector<std::string>{"b"}));
  const auto tn = build_cohort(s, y, ids, CohortKind::TrueNegative);
  EXPECT_EQ(tn.ids, (std::vector<std::string>{"c"}));
  const auto none = build_cohort(s, y, ids, CohortKind::TrueNegative, 0.3);
  EXPECT_TRUE(none.empty());
  EXPECT_EQ(to_string(CohortKind::TrueNegative), "tn");
  const std::vector<int> short_labels = {1};
  EXPECT_THROW(build_cohort(s, short_labels, ids, CohortKind::TruePositive), DimensionError);
}

TEST(Cohort, InvariantsOnRandomScores) {
  Rng rng(8);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 300; ++i) {
    s.push_back(rng.uniform());
    y.push_back(rng.uniform() < 0.5);
  }
  for (auto kind : {CohortKind::TruePositive, CohortKind::TrueNegative}) {
    const auto c = build_cohort(s, y, {}, kind, 0.51, 40);
    EXPECT_EQ(c.members.size(), 40u);
    for (std::size_t k = 0; k < c.members.size(); ++k) {
      const auto i = c.members[k];
      if (kind == CohortKind::TruePositive) {
        EXPECT_EQ(y[i], 1);
        EXPECT_GT(s[i], 0.51);
        if (k) EXPECT_LE(s[i], s[c.members[k - 1]]);
      } else {
        EXPECT_EQ(y[i], 0);
        EXPECT_LT(s[i], 0.51);
        if (k) EXPECT_GE(s[i], s[c.members[k - 1]]);
      }
    }
  }
}

TEST(Aggregate, MeanProperties) {
  Rng rng(9);
  const std::vector<std::string> names = {"CZ", "PZ"};
  auto make = [&] {
    AttributionMap m;
    m.shape = {2, 4};
    for (int i = 0; i < 8; ++i) m.phi.push_back(rng.normal());
    return m;
  };
  const auto a = make();
  const std::vector<AttributionMap> one = {a};
  const auto single = aggregate_attributions(one, names);
  EXPECT_EQ(single.mean, a.phi);
  EXPECT_EQ(single.count, 1u);
  EXPECT_NEAR(single.channel_mean[1], (a.phi[4] + a.phi[5] + a.phi[6] + a.phi[7]) / 4, 1e-15);
  auto neg = a;
  for (auto& v : neg.phi) v = -v;
  const std::vector<AttributionMap> pair = {a, neg};
  for (double v : aggregate_attributions(pair, names).mean) EXPECT_EQ(v, 0.0);
  const std::vector<AttributionMap> abc = {a, make(), make()};
  const std::vector<AttributionMap> cba = {abc[2], abc[1], abc[0]};
  const auto x = aggregate_attributions(abc, names), y = aggregate_attributions(cba, names);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(x.mean[i], y.mean[i], 1e-15);
  auto wrong = make();
  wrong.shape = {1, 8};
  const std::vector<AttributionMap> mixed = {a, wrong};
  EXPECT_THROW(aggregate_attributions(mixed, names), DimensionError);
  const std::vector<std::string> three = {"CZ", "PZ", "OZ"};
  EXPECT_THROW(aggregate_attributions(one, three), DimensionError);
}

TEST(Explainer, CohortsAndMapsAreConsistent) {
  SynthSpec spec;
  spec.n_subjects = 2;
  spec.trials_per_subject = 12;
  spec.channel_names = {"CZ", "PZ"};
  spec.planted_channels = {"PZ"};
  const auto trials = synth_generate(spec, 10);
  std::vector<const Trial*> ptrs;
  std::vector<int> labels;
  for (const auto& t : trials) {
    ptrs.push_back(&t);
    labels.push_back(label_trial(t, Task::Match));
  }
  Rng rng(11);
  const auto model = build_parallel_conv_net(2, rng);
  const auto probs = forward_probs(model, [&] {
    std::vector<double> all;
    for (const auto& t : trials) all.insert(all.end(), t.data.begin(), t.data.end());
    return Tensor({trials.size(), 2, 256}, all);
  }());
  std::vector<double> scores(probs.data().begin(), probs.data().end());
  std::sort(scores.begin(), scores.end());
  ExplainerOptions opt;
  opt.threshold = scores[scores.size() / 2];
  opt.top_n = 3;
  opt.steps = 8;
  const auto r = run_explainer(model, ptrs, labels, opt);
  EXPECT_EQ(r.tp_members.size(), r.tp.members.size());
  EXPECT_EQ(r.tn_members.size(), r.tn.members.size());
  EXPECT_LE(r.tp.members.size(), 3u);
  EXPECT_FALSE(r.tp.empty() && r.tn.empty());
  for (std::size_t k = 0; k < r.tp.members.size(); ++k) {
    EXPECT_EQ(labels[r.tp.members[k]], 1);
    EXPECT_EQ(r.tp.ids[k], trials[r.tp.members[k]].id);
    EXPECT_NEAR(r.tp_members[k].f_x, r.tp.scores[k], 1e-12);
  }
  if (!r.tp.empty()) {
    EXPECT_EQ(r.tp_map.count, r.tp.members.size());
    EXPECT_EQ(r.tp_map.channel_names, (std::vector<std::string>{"CZ", "PZ"}));
    EXPECT_EQ(r.tp_map.mean.size(), 512u);
  }
}

TEST(Render, CsvRoundTripIsExact) {
  Rng rng(12);
  auto m = sample_map(rng, {"FP1", "CZ", "nd"});
  m.values[5] = -0.0;
  m.values[6] = 1e-300;
  m.values[7] = 0.1;
  const auto back = parse_heatmap_csv(heatmap_csv(m));
  EXPECT_EQ(back.channel_names, m.channel_names);
  EXPECT_EQ(back.samples, 256u);
  EXPECT_EQ(back.values, m.values);
  EXPECT_THROW(parse_heatmap_csv("CZ,1,2\nPZ,1\n"), PersistenceError);
}

TEST(Render, PgmRoundTripAndGrayScale) {
  Rng rng(13);
  const auto m = sample_map(rng, {"CZ", "PZ", "OZ"});
  const auto img = heatmap_image(m);
  EXPECT_EQ(img.width, 256u);
  EXPECT_EQ(img.height, 3u);
  const auto path = std::filesystem::temp_directory_path() / "evlab_render_test.pgm";
  write_pgm(path, img);
  {
    std::ifstream is(path, std::ios::binary);
    std::string magic;
    is >> magic;
    EXPECT_EQ(magic, "P5");
  }
  const auto back = read_pgm(path);
  EXPECT_EQ(back.width, img.width);
  EXPECT_EQ(back.height, img.height);
  EXPECT_EQ(back.pixels, img.pixels);
  std::filesystem::remove(path);
  EXPECT_EQ(symmetric_gray(0.0, 1.0), 128);
  EXPECT_EQ(symmetric_gray(1.0, 1.0), 255);
  EXPECT_EQ(symmetric_gray(-1.0, 1.0), 1);
  EXPECT_EQ(symmetric_gray(0.0, 0.0), 128);
  ChannelMap zero{{"CZ", "PZ"}, 256, std::vector<double>(512, 0.0)};
  const auto flat = heatmap_image(zero);
  for (auto p : flat.pixels) EXPECT_EQ(p, 128);
  const auto peak = std::max_element(m.values.begin(), m.values.end(),
                                     [](double a, double b) { return std::abs(a) < std::abs(b); });
  EXPECT_EQ(img.pixels[static_cast<std::size_t>(peak - m.values.begin())], *peak > 0 ? 255 : 1);
}

TEST(Montage, CoversFull60InsideDisc) {
  const auto m = builtin_montage();
  const std::vector<std::string> full(full60_names().begin(), full60_names().end());
  EXPECT_TRUE(m.covers(full));
  for (const auto& e : m.electrodes()) EXPECT_LT(std::hypot(e.x, e.y), 1.0) << e.name;
  const auto& c3 = m.at("C3");
  const auto& c4 = m.at("C4");
  EXPECT_LT(c3.x, 0.0);
  EXPECT_NEAR(c3.x, -c4.x, 1e-12);
  EXPECT_NEAR(m.at("CZ").x, 0.0, 1e-12);
  EXPECT_NEAR(m.at("CZ").y, 0.0, 1e-12);
  EXPECT_GT(m.at("FZ").y, 0.0);
  EXPECT_LT(m.at("OZ").y, m.at("PZ").y);
  EXPECT_TRUE(m.find("fp1").has_value());
  EXPECT_THROW(m.at("QQ7"), UsageError);
  const std::vector<std::string> bad = {"CZ", "QQ7"};
  EXPECT_FALSE(m.covers(bad));
}

TEST(Montage, JsonAssetMatchesBuiltin) {
  const auto builtin = builtin_montage();
  const auto round = Montage::from_json(builtin.to_json());
  ASSERT_EQ(round.electrodes().size(), builtin.electrodes().size());
  ASSERT_TRUE(std::filesystem::exists(montage_asset_path())) << montage_asset_path();
  const auto asset = load_montage(montage_asset_path());
  ASSERT_EQ(asset.electrodes().size(), builtin.electrodes().size());
  for (const auto& e : builtin.electrodes()) {
    EXPECT_NEAR(asset.at(e.name).x, e.x, 1e-12) << e.name;
    EXPECT_NEAR(asset.at(e.name).y, e.y, 1e-12) << e.name;
    EXPECT_EQ(round.at(e.name).x, e.x);
  }
  EXPECT_EQ(default_montage().electrodes().size(), builtin.electrodes().size());
  EXPECT_THROW(Montage::from_json("[1,2"), PersistenceError);
}

TEST(Topomap, PeakAtSingleActiveChannel) {
  const auto montage = builtin_montage();
  const std::vector<std::string> names(full60_names().begin(), full60_names().end());
  for (const std::string active : {"PZ", "C3", "FP2", "O1", "T8"}) {
    std::vector<double> v(names.size(), 0.0);
    v[static_cast<std::size_t>(std::find(names.begin(), names.end(), active) - names.begin())] = 1.0;
    const auto map = topomap(v, names, montage);
    std::size_t best = 0;
    double best_v = -1;
    for (std::size_t i = 0; i < map.values.size(); ++i) {
      if (!std::isnan(map.values[i]) && map.values[i] > best_v) {
        best_v = map.values[i];
        best = i;
      }
    }
    const auto& e = montage.at(active);
    const auto [row, col] = topomap_cell(e.x, e.y, 64);
    // Midline electrodes sit between two cell centres, so compare values, not indices.
    EXPECT_NEAR(map.at(row, col), best_v, 1e-12) << active;
    EXPECT_LE(std::abs(static_cast<double>(best / 64) - static_cast<double>(row)), 1.0) << active;
    EXPECT_LE(std::abs(static_cast<double>(best % 64) - static_cast<double>(col)), 1.0) << active;
  }
}

TEST(Topomap, MaskAndFlatField) {
  const auto montage = builtin_montage();
  const std::vector<std::string> names = {"CZ", "PZ", "FZ", "C3", "C4"};
  const std::vector<double> v(5, 2.5);
  const auto map = topomap(v, names, montage);
  ASSERT_EQ(map.values.size(), 64u * 64u);
  EXPECT_TRUE(std::isnan(map.at(0, 0)));
  EXPECT_TRUE(std::isnan(map.at(63, 63)));
  for (double x : map.values)
    if (!std::isnan(x)) EXPECT_NEAR(x, 2.5, 1e-12);
  const std::vector<std::string> unknown = {"CZ", "QQ7", "FZ", "C3", "C4"};
  EXPECT_THROW(topomap(v, unknown, montage), UsageError);
}

TEST(Topomap, JointTemporalFramesAndImages) {
  Rng rng(14);
  const auto m = sample_map(rng, {"CZ", "PZ", "OZ", "FZ"});
  const auto frames = joint_temporal_topomaps(m, builtin_montage());
  ASSERT_EQ(frames.size(), 10u);
  // First frame averages samples [0, 25).
  std::vector<double> first(4, 0.0);
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t t = 0; t < 25; ++t) first[c] += m.at(c, t);
    first[c] /= 25.0;
  }
  const auto direct = topomap(first, m.channel_names, builtin_montage());
  for (std::size_t i = 0; i < direct.values.size(); ++i) {
    if (std::isnan(direct.values[i])) {
      EXPECT_TRUE(std::isnan(frames[0].values[i]));
    } else {
      EXPECT_NEAR(frames[0].values[i], direct.values[i], 1e-15);
    }
  }
  const auto images = topomap_images(frames);
  ASSERT_EQ(images.size(), 10u);
  EXPECT_EQ(images[0].width, 64u);
  EXPECT_EQ(images[0].pixels[0], 0);
  ChannelMap zero{{"CZ", "PZ"}, 256, std::vector<double>(512, 0.0)};
  const auto zimg = topomap_images(joint_temporal_topomaps(zero, builtin_montage()));
  const auto [r, c] = topomap_cell(0.0, 0.0, 64);
  EXPECT_EQ(zimg[3].pixels[r * 64 + c], 128);
}
