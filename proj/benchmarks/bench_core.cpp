#include <benchmark/benchmark.h>

#include <vector>

#include "evlab/linalg.hpp"
#include "evlab/model.hpp"
#include "evlab/ops.hpp"
#include "evlab/optim.hpp"
#include "evlab/rng.hpp"
#include "evlab/roc.hpp"
#include "evlab/spd.hpp"

using namespace evlab;

namespace {

Tensor uniform(const Shape& shape, Rng& rng, bool grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(shape, std::move(v), grad);
}

void BM_Conv1dForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto channels = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  const auto x = uniform({batch, channels, 256}, rng);
  auto w = uniform({32, channels, 7}, rng, true);
  const auto b = uniform({32}, rng, true);
  for (auto _ : state) {
    w.zero_grad();
    ops::sum(ops::conv1d_same(x, w, b)).backward();
    benchmark::DoNotOptimize(w.grad().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_Conv1dForwardBackward)->Args({32, 8})->Args({32, 60})->Unit(benchmark::kMillisecond);

void BM_LinearForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const auto x = uniform({batch, 4096}, rng);
  auto w = uniform({1024, 4096}, rng, true);
  const auto b = uniform({1024}, rng, true);
  for (auto _ : state) {
    w.zero_grad();
    ops::sum(ops::linear(x, w, b)).backward();
    benchmark::DoNotOptimize(w.grad().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_LinearForwardBackward)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_NetworkTrainStep(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  Model m = build_parallel_conv_net(channels, rng);
  const auto x = uniform({32, channels, 256}, rng);
  std::vector<double> y(32);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<double>(i % 2);
  std::vector<Tensor> params;
  for (const auto& [name, t] : m.named_parameters()) params.push_back(t);
  AdamState adam(1e-3);
  for (auto _ : state) {
    zero_grads(params);
    ops::bce_loss(forward_probs(m, x), y).backward();
    adam_step(params, adam);
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_NetworkTrainStep)->Arg(8)->Arg(60)->Unit(benchmark::kMillisecond);

void BM_SymEig(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  Matrix x(n, n);
  for (auto& v : x.a) v = rng.normal();
  auto a = matmul(x, transpose(x));
  symmetrize(a);
  for (auto _ : state) benchmark::DoNotOptimize(sym_eig(a));
}
BENCHMARK(BM_SymEig)->Arg(8)->Arg(60);

void BM_GeodesicDistance(benchmark::State& state) {
  Rng rng(5);
  auto spd = [&] {
    Matrix x(60, 60);
    for (auto& v : x.a) v = rng.normal();
    auto s = add(matmul(x, transpose(x)), Matrix::identity(60));
    symmetrize(s);
    return s;
  };
  const auto a = spd(), b = spd();
  for (auto _ : state) benchmark::DoNotOptimize(spd_geodesic_distance(a, b));
}
BENCHMARK(BM_GeodesicDistance);

void BM_RocCurve(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(6);
  std::vector<double> s(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = i % 2;
    s[i] = rng.normal() + 0.5 * y[i];
  }
  for (auto _ : state) benchmark::DoNotOptimize(roc_curve(s, y).auc);
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_RocCurve)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
