#pragma once

#include <cstddef>
#include <span>

#include "evlab/tensor.hpp"

/// Differentiable operators over evlab::Tensor.
///
/// Batched inputs carry the batch as the leading axis. Every operator
/// throws DimensionError on incompatible shapes.
namespace evlab::ops {

/// Zero-padded "same" cross-correlation.
/// input [C_in, L] or [B, C_in, L]; weights [C_out, C_in, K] with K odd;
/// bias [C_out]. Output keeps the input's rank with C_out channels.
Tensor conv1d_same(const Tensor& input, const Tensor& weights, const Tensor& bias);

/// weights · input + bias. input [N] or [B, N]; weights [M, N]; bias [M].
Tensor linear(const Tensor& input, const Tensor& weights, const Tensor& bias);

/// Normalizes over the last axis with population variance.
Tensor layer_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

Tensor elu(const Tensor& input);
Tensor sigmoid(const Tensor& input);

/// Max over disjoint windows of the last axis; its length must divide by k.
Tensor max_pool1d(const Tensor& input, std::size_t k = 2);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

/// scale * x + shift with trainable scalars (shape [1]).
Tensor scale_shift(const Tensor& x, const Tensor& scale, const Tensor& shift);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Flattens everything after the leading batch axis: [B, ...] -> [B, rest].
Tensor flatten_batch(const Tensor& x);

/// Mean binary cross-entropy. p is one probability per sample ([B] or [B, 1]);
/// probabilities are clamped to [1e-7, 1 - 1e-7] before the logarithm.
Tensor bce_loss(const Tensor& p, std::span<const double> labels);

/// Mean of squared differences over all entries.
Tensor mse_loss(const Tensor& prediction, const Tensor& target);

/// Row-wise L2 distance. [N] x [N] -> [1]; [B, N] x [B, N] -> [B].
/// The gradient at a == b is taken as zero.
Tensor euclidean_distance(const Tensor& a, const Tensor& b);

inline constexpr double kBceClamp = 1e-7;

}  // namespace evlab::ops
