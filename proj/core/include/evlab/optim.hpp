#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evlab/rng.hpp"
#include "evlab/tensor.hpp"

namespace evlab {

/// Adam moments for an ordered list of parameters.
struct AdamState {
  std::uint64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  explicit AdamState(double learning_rate = 1e-3) : lr(learning_rate) {}
};

/// One bias-corrected Adam update over `params`, in order.
///
/// Parameters with requires_grad == false are frozen and left untouched;
/// a trainable parameter without a gradient buffer is treated as having a
/// zero gradient. Moments are sized on the first call; a later call with a
/// different parameter layout throws DimensionError.
void adam_step(std::span<Tensor> params, AdamState& state);

void zero_grads(std::span<Tensor> params);

/// Glorot-uniform on [-a, a], a = sqrt(6 / (fan_in + fan_out)).
/// [out, in] -> fans (in, out); [out, in, k] -> (in*k, out*k); [n] -> (n, n).
Tensor xavier_init(const Shape& shape, Rng& rng, bool requires_grad = true);

struct Fans {
  double fan_in;
  double fan_out;
};
Fans xavier_fans(const Shape& shape);

}  // namespace evlab
