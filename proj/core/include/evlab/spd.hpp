#pragma once

#include <span>

#include "evlab/dataset.hpp"
#include "evlab/linalg.hpp"

namespace evlab {

/// X Xᵀ/(L−1) after per-channel mean removal, plus shrink·(trace/C)·I.
Matrix trial_covariance(const Trial& trial, double shrink = 1e-3);

/// Smallest eigenvalue > 0 and symmetric within 1e-12 relative.
bool is_spd(const Matrix& m);

/// Affine-invariant distance ‖log(A^{-1/2} B A^{-1/2})‖_F.
double spd_geodesic_distance(const Matrix& a, const Matrix& b);
/// Same with a precomputed A^{-1/2}.
double spd_geodesic_distance_from(const Matrix& a_inv_sqrt, const Matrix& b);

struct FrechetMean {
  Matrix mean;
  int iterations = 0;
  /// ‖mean_k log(M^{-1/2} C_k M^{-1/2})‖_F at the returned iterate.
  double gradient_norm = 0.0;
  bool converged = false;
};

/// Karcher iteration from the arithmetic mean; stops when the gradient norm
/// falls below `tol` or after `max_iter` iterations (best iterate returned,
/// converged = false).
FrechetMean spd_frechet_mean(std::span<const Matrix> mats, double tol = 1e-8, int max_iter = 50);

}  // namespace evlab
