#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "evlab/errors.hpp"
#include "evlab/model.hpp"
#include "evlab/ops.hpp"
#include "evlab/optim.hpp"
#include "test_helpers.hpp"

using namespace evlab;
using evlab::testing::random_tensor;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

std::set<std::string> trainable_names(const Model& m) {
  std::set<std::string> out;
  for (const auto& [n, t] : m.named_parameters())
    if (t.requires_grad()) out.insert(n);
  return out;
}

std::size_t dense(std::size_t in, std::size_t out) { return in * out + out; }

}  // namespace

class RasterWidth : public ::testing::TestWithParam<std::size_t> {};

TEST_P(RasterWidth, IndependentOfChannels) {
  const std::size_t c = GetParam();
  Rng rng(c);
  const auto m = build_parallel_conv_net(c, rng);
  const auto x = random_tensor({c, 256}, rng, -1, 1, false);
  EXPECT_EQ(forward(m, x, "raster").shape(), (Shape{kRasterWidth}));
  EXPECT_EQ(kRasterWidth, 4096u);
  EXPECT_EQ(penultimate_embedding(m, x).shape(), (Shape{128}));
  const auto xb = random_tensor({3, c, 256}, rng, -1, 1, false);
  EXPECT_EQ(forward(m, xb, "raster").shape(), (Shape{3, 4096}));
  EXPECT_EQ(penultimate_embedding(m, xb).shape(), (Shape{3, 128}));
}

INSTANTIATE_TEST_SUITE_P(Channels, RasterWidth, ::testing::Values(8, 12, 60));

TEST(ParallelConvNet, ParameterCountC60) {
  Rng rng(1);
  const auto m = build_parallel_conv_net(60, rng);
  const std::size_t convs = (32 * 60 * 3 + 32) + (32 * 60 * 7 + 32) + (32 * 60 * 11 + 32);
  EXPECT_EQ(convs, 40416u);
  const std::size_t total = convs + 2 * 4096 + dense(4096, 1024) + 2 * 1024 + dense(1024, 128) + 2 * 128 + dense(128, 1);
  EXPECT_EQ(total, 4377569u);
  EXPECT_EQ(m.parameter_count(), total);
  EXPECT_EQ(expected_parallel_conv_parameters(60), total);
  for (std::size_t c : {1, 8, 12}) {
    Rng r(c);
    EXPECT_EQ(build_parallel_conv_net(c, r).parameter_count(), expected_parallel_conv_parameters(c));
  }
}

TEST(ParallelConvNet, InitializationConventions) {
  Rng rng(2);
  const auto m = build_parallel_conv_net(8, rng);
  for (const auto& [n, t] : m.named_parameters()) {
    if (n.ends_with(".bias") || n.ends_with(".beta")) {
      for (double v : t.data()) EXPECT_EQ(v, 0.0) << n;
    } else if (n.ends_with(".gamma")) {
      for (double v : t.data()) EXPECT_EQ(v, 1.0) << n;
    } else {
      const auto f = xavier_fans(t.shape());
      const double a = std::sqrt(6.0 / (f.fan_in + f.fan_out));
      for (double v : t.data()) EXPECT_LE(std::abs(v), a) << n;
    }
  }
}

TEST(ParallelConvNet, ZeroInputGivesHalf) {
  for (std::size_t c : {8, 60}) {
    Rng rng(c);
    const auto m = build_parallel_conv_net(c, rng);
    EXPECT_EQ(forward_prob(m, Tensor({c, 256})), 0.5);
  }
}

TEST(ParallelConvNet, DeterministicOpenInterval) {
  Rng rng(3);
  const auto m = build_parallel_conv_net(8, rng);
  const auto x = random_tensor({4, 8, 256}, rng, -20, 20, false);
  const auto p1 = forward_probs(m, x);
  const auto p2 = forward_probs(m, x);
  ASSERT_EQ(p1.shape(), (Shape{4}));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(p1[i], p2[i]);
    EXPECT_GT(p1[i], 0.0);
    EXPECT_LT(p1[i], 1.0);
  }
  const auto single = random_tensor({8, 256}, rng, -1, 1, false);
  EXPECT_EQ(forward_probs(m, single).shape(), (Shape{1}));
}

TEST(ParallelConvNet, ChannelMismatch) {
  Rng rng(4);
  const auto m = build_parallel_conv_net(8, rng);
  EXPECT_THROW(forward_prob(m, Tensor({12, 256})), DimensionError);
  EXPECT_THROW(forward(m, Tensor({8, 255})), DimensionError);
  EXPECT_THROW(forward(m, Tensor({256})), DimensionError);
}

TEST(ParallelConvNet, GradientReachesInput) {
  Rng rng(5);
  const auto m = build_parallel_conv_net(8, rng);
  auto x = random_tensor({8, 256}, rng, -1, 1, true);
  forward_probs(m, x).backward();
  double norm = 0;
  for (double g : x.grad()) norm += g * g;
  EXPECT_GT(norm, 0.0);
  // Directional derivative matches a central difference.
  auto d = random_tensor({8, 256}, rng, -1, 1, false);
  double analytic = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) analytic += x.grad()[i] * d[i];
  const double h = 1e-5;
  auto shifted = [&](double s) {
    std::vector<double> v(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += s * d[i];
    return forward_prob(m, Tensor({8, 256}, v));
  };
  const double numeric = (shifted(h) - shifted(-h)) / (2 * h);
  EXPECT_NEAR(analytic, numeric, 1e-6 * std::max(1.0, std::abs(numeric)));
}

TEST(ParallelConvNet, EmbeddingSensitiveToEveryUpstreamParameter) {
  Rng rng(6);
  const auto m = build_parallel_conv_net(8, rng);
  const auto x = random_tensor({8, 256}, rng, -1, 1, false);
  const auto base = penultimate_embedding(m, x);
  auto same = penultimate_embedding(m, x);
  for (std::size_t i = 0; i < 128; ++i) EXPECT_EQ(base[i], same[i]);
  for (const auto& [name, t] : m.named_parameters()) {
    if (name.rfind("fc3.", 0) == 0) continue;
    auto probe = m.clone();
    auto data = probe.parameter(name).mutable_data();
    for (auto& v : data) v += 0.05;
    const auto e = penultimate_embedding(probe, x);
    double diff = 0;
    for (std::size_t i = 0; i < 128; ++i) diff += std::abs(e[i] - base[i]);
    EXPECT_GT(diff, 0.0) << name;
  }
  auto probe = m.clone();
  for (auto& v : probe.parameter("fc3.weight").mutable_data()) v += 1.0;
  const auto e = penultimate_embedding(probe, x);
  for (std::size_t i = 0; i < 128; ++i) EXPECT_EQ(e[i], base[i]);
}

TEST(Ffnn, ShapeAndRange) {
  Rng rng(7);
  const auto m = build_ffnn(8, rng);
  EXPECT_EQ(m.parameter_count(), dense(8 * 256, 1024) + 2 * 1024 + dense(1024, 256) + 2 * 256 + dense(256, 1));
  const auto p = forward_probs(m, random_tensor({5, 8, 256}, rng, -5, 5, false));
  ASSERT_EQ(p.shape(), (Shape{5}));
  for (double v : p.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Decoder, OutputWidth) {
  for (std::size_t c : {1, 8}) {
    Rng rng(c);
    const auto d = build_decoder(c, rng);
    EXPECT_EQ(forward(d, random_tensor({128}, rng, -1, 1, false)).shape(), (Shape{c * 256}));
    EXPECT_EQ(forward(d, random_tensor({2, 128}, rng, -1, 1, false)).shape(), (Shape{2, c * 256}));
    EXPECT_THROW(forward(d, Tensor({64})), DimensionError);
  }
}

TEST(Siamese, IdenticalInputsGiveSigmoidOfShift) {
  Rng rng(8);
  const auto m = build_parallel_conv_net(8, rng);
  SiameseHead head;
  head.scale = Tensor::scalar(1.7, true);
  head.shift = Tensor::scalar(-0.4, true);
  const auto x = random_tensor({3, 8, 256}, rng, -1, 1, false);
  const auto p = siamese_prob(m, head, x, x);
  ASSERT_EQ(p.shape(), (Shape{3}));
  for (double v : p.data()) EXPECT_NEAR(v, 1.0 / (1.0 + std::exp(0.4)), 1e-15);
  const auto y = random_tensor({3, 8, 256}, rng, -1, 1, false);
  const auto q = siamese_prob(m, head, x, y);
  const auto d = ops::euclidean_distance(penultimate_embedding(m, x), penultimate_embedding(m, y));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(q[i], 1.0 / (1.0 + std::exp(-(1.7 * d[i] - 0.4))), 1e-12);
  EXPECT_THROW(siamese_prob(m, head, x, random_tensor({2, 8, 256}, rng, -1, 1, false)), DimensionError);
}

TEST(Freeze, ThroughPenultimateIsFinalLayerOnly) {
  Rng rng(9);
  auto m = build_parallel_conv_net(8, rng);
  apply_freeze(m, FreezePolicy::ThroughPenultimate);
  EXPECT_EQ(m.trainable_parameter_count(), 129u);
  EXPECT_EQ(trainable_names(m), (std::set<std::string>{"fc3.weight", "fc3.bias"}));
  apply_freeze(m, FreezePolicy::LastTwoDense);
  EXPECT_EQ(trainable_names(m),
            (std::set<std::string>{"fc2.weight", "fc2.bias", "ln2.gamma", "ln2.beta", "fc3.weight", "fc3.bias"}));
  EXPECT_EQ(m.trainable_parameter_count(), dense(1024, 128) + 256 + 129);
  apply_freeze(m, FreezePolicy::None);
  EXPECT_EQ(m.trainable_parameter_count(), m.parameter_count());
  EXPECT_EQ(parse_freeze("penultimate"), FreezePolicy::ThroughPenultimate);
  EXPECT_EQ(parse_freeze("last2"), FreezePolicy::LastTwoDense);
  EXPECT_EQ(parse_freeze("none"), FreezePolicy::None);
  EXPECT_THROW(parse_freeze("all"), UsageError);
}

TEST(Freeze, FrozenParametersUnchangedAfterTraining) {
  Rng rng(10);
  auto m = build_parallel_conv_net(1, rng);
  apply_freeze(m, FreezePolicy::ThroughPenultimate);
  const auto before = m.clone();
  auto params = m.parameters();
  AdamState state(1e-2);
  const auto x = random_tensor({2, 1, 256}, rng, -1, 1, false);
  const std::vector<double> y = {1.0, 0.0};
  for (int step = 0; step < 100; ++step) {
    zero_grads(params);
    ops::bce_loss(forward_probs(m, x), y).backward();
    adam_step(params, state);
  }
  bool final_moved = false;
  for (const auto& [name, t] : m.named_parameters()) {
    const auto& old = before.parameter(name);
    const bool same = std::equal(t.data().begin(), t.data().end(), old.data().begin());
    if (name.rfind("fc3.", 0) == 0) {
      final_moved |= !same;
    } else {
      EXPECT_TRUE(same) << name;
    }
  }
  EXPECT_TRUE(final_moved);
}

TEST(Freeze, OutputReinitTouchesFinalLayerOnly) {
  Rng rng(11);
  auto m = build_parallel_conv_net(8, rng);
  const auto before = m.clone();
  for (auto& v : m.parameter("fc3.bias").mutable_data()) v = 3.0;
  reinitialize_output_layer(m, rng);
  EXPECT_EQ(m.parameter("fc3.bias")[0], 0.0);
  EXPECT_NE(m.parameter("fc3.weight")[0], before.parameter("fc3.weight")[0]);
  EXPECT_EQ(m.parameter("fc2.weight")[5], before.parameter("fc2.weight")[5]);
}

TEST(Model, CloneAndDetachedAreIndependent) {
  Rng rng(12);
  auto m = build_parallel_conv_net(8, rng);
  apply_freeze(m, FreezePolicy::LastTwoDense);
  auto c = m.clone();
  EXPECT_EQ(trainable_names(c), trainable_names(m));
  c.parameter("fc1.weight").mutable_data()[0] += 1.0;
  EXPECT_NE(c.parameter("fc1.weight")[0], m.parameter("fc1.weight")[0]);
  const auto d = m.detached();
  EXPECT_EQ(d.trainable_parameter_count(), 0u);
  const auto x = random_tensor({8, 256}, rng, -1, 1, false);
  EXPECT_EQ(forward_prob(d, x), forward_prob(m, x));
}

TEST(Weights, RoundTripBitExact) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto a = dir / "evlab_w_a.evlw", b = dir / "evlab_w_b.evlw";
  for (int kind = 0; kind < 3; ++kind) {
    Rng rng(13 + kind);
    const auto m = kind == 0 ? build_parallel_conv_net(8, rng) : kind == 1 ? build_ffnn(4, rng) : build_decoder(2, rng);
    save_weights(m, a);
    const auto loaded = load_weights(a);
    EXPECT_EQ(loaded.kind(), m.kind());
    EXPECT_EQ(loaded.channels(), m.channels());
    EXPECT_EQ(loaded.layer_plan_json(), m.layer_plan_json());
    save_weights(loaded, b);
    EXPECT_EQ(slurp(a), slurp(b));
    for (const auto& [n, t] : m.named_parameters()) {
      const auto& u = loaded.parameter(n);
      EXPECT_TRUE(std::equal(t.data().begin(), t.data().end(), u.data().begin())) << n;
    }
  }
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST(Weights, CorruptFilesNameTheField) {
  const auto p = std::filesystem::temp_directory_path() / "evlab_w_bad.evlw";
  Rng rng(16);
  save_weights(build_ffnn(1, rng), p);
  auto bytes = slurp(p);
  {
    std::ofstream(p, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    try {
      load_weights(p);
      FAIL();
    } catch (const PersistenceError& e) {
      EXPECT_NE(std::string(e.what()).find("truncated in "), std::string::npos) << e.what();
      EXPECT_NE(std::string(e.what()).find(".values"), std::string::npos) << e.what();
    }
  }
  {
    auto broken = bytes;
    broken[0] = 'X';
    std::ofstream(p, std::ios::binary) << broken;
    EXPECT_THROW(load_weights(p), PersistenceError);
  }
  {
    std::vector<std::pair<std::string, Tensor>> ts = {{"fc1.weight", Tensor({1024, 256})},
                                                      {"fc1.bias", Tensor({1024})}};
    save_tensors(p, ts);
    try {
      load_weights(p);
      FAIL();
    } catch (const PersistenceError& e) {
      EXPECT_NE(std::string(e.what()).find("missing parameter"), std::string::npos) << e.what();
    }
  }
  EXPECT_THROW(load_weights(p.string() + ".absent"), PersistenceError);
  std::filesystem::remove(p);
}

TEST(Model, LayerPlanJson) {
  Rng rng(17);
  const auto m = build_parallel_conv_net(8, rng);
  const auto j = m.layer_plan_json();
  EXPECT_NE(j.find("\"embedding\""), std::string::npos);
  EXPECT_NE(j.find("\"kernels\""), std::string::npos);
  EXPECT_NE(j.find("4096"), std::string::npos);
}
