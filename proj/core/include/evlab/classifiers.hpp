#pragma once

#include <array>
#include <span>
#include <vector>

#include "evlab/dataset.hpp"
#include "evlab/linalg.hpp"
#include "evlab/spd.hpp"

namespace evlab {

/// Row i holds trial i flattened channel-major (C·256 columns).
Matrix trial_features(std::span<const Trial* const> trials);

struct RmdmModel {
  /// Class-k Fréchet mean of training covariances.
  std::array<Matrix, 2> means;
  std::array<Matrix, 2> inv_sqrt;
  std::array<bool, 2> converged{};
};

RmdmModel fit_rmdm(std::span<const Matrix> covariances, std::span<const int> labels);
RmdmModel fit_rmdm(std::span<const Trial* const> trials, std::span<const int> labels, double shrink = 1e-3);
/// d0 / (d0 + d1); 0.5 when both distances vanish.
double score_rmdm(const RmdmModel& model, const Matrix& covariance);
double score_rmdm(const RmdmModel& model, const Trial& trial, double shrink = 1e-3);
/// argmin distance.
int predict_rmdm(const RmdmModel& model, const Matrix& covariance);

struct LdaModel {
  std::vector<double> w;
  double b = 0.0;
  double loading = 0.0;
};

/// w = Σ_reg⁻¹ (μ1 − μ0), b = −wᵀ(μ0 + μ1)/2, with Σ_reg the pooled
/// within-class covariance plus loading_scale·trace/d on the diagonal.
LdaModel fit_lda(const Matrix& x, std::span<const int> labels, double loading_scale = 1e-3);
double score_lda(const LdaModel& model, std::span<const double> x);

struct LogRegOptions {
  double l2 = 1e-4;
  int steps = 300;
  double lr = 1e-2;
};

struct LogRegModel {
  std::vector<double> w;
  double b = 0.0;
  /// Per-feature standardization applied before w.
  std::vector<double> mean;
  std::vector<double> scale;
};

/// Full-batch Adam on mean BCE + l2/2·‖w‖².
LogRegModel fit_logreg(const Matrix& x, std::span<const int> labels, const LogRegOptions& options = {});
double score_logreg(const LogRegModel& model, std::span<const double> x);

}  // namespace evlab
