#include "evlab/optim.hpp"

#include <cmath>
#include <string>

#include "evlab/errors.hpp"

namespace evlab {

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (state.m.empty() && state.v.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].numel(), 0.0);
      state.v[i].assign(params[i].numel(), 0.0);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: state tracks " + std::to_string(state.m.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].numel() || state.v[i].size() != params[i].numel()) {
      throw DimensionError("adam_step: moment shape mismatch for parameter " + std::to_string(i));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (!p.requires_grad()) continue;
    auto w = p.mutable_data();
    auto g = p.grad();
    const bool has_grad = !g.empty();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = has_grad ? g[j] : 0.0;
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

void zero_grads(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

Fans xavier_fans(const Shape& shape) {
  switch (shape.size()) {
    case 1:
      return {static_cast<double>(shape[0]), static_cast<double>(shape[0])};
    case 2:
      return {static_cast<double>(shape[1]), static_cast<double>(shape[0])};
    case 3:
      return {static_cast<double>(shape[1] * shape[2]), static_cast<double>(shape[0] * shape[2])};
    default:
      throw DimensionError("xavier_init: unsupported rank for " + shape_str(shape));
  }
}

Tensor xavier_init(const Shape& shape, Rng& rng, bool requires_grad) {
  const auto [fan_in, fan_out] = xavier_fans(shape);
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  std::vector<double> values(shape_numel(shape));
  for (auto& x : values) x = rng.uniform(-a, a);
  return Tensor(shape, std::move(values), requires_grad);
}

}  // namespace evlab
