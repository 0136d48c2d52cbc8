#include "evlab/classifiers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "evlab/errors.hpp"

namespace evlab {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> view(const Matrix& m) { return {m.a.data(), static_cast<Eigen::Index>(m.rows),
                                                         static_cast<Eigen::Index>(m.cols)}; }

void check_two_classes(std::span<const int> labels, std::size_t rows) {
  if (labels.size() != rows) throw DimensionError("labels do not match the number of samples");
  bool has0 = false, has1 = false;
  for (int y : labels) {
    if (y != 0 && y != 1) throw UsageError("labels must be 0 or 1");
    (y ? has1 : has0) = true;
  }
  if (!has0 || !has1) throw UsageError("classifier needs both classes");
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Matrix trial_features(std::span<const Trial* const> trials) {
  if (trials.empty()) return {};
  const std::size_t d = trials[0]->data.size();
  Matrix x(trials.size(), d);
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (trials[i]->data.size() != d) throw DimensionError("trials differ in channel count");
    std::copy(trials[i]->data.begin(), trials[i]->data.end(), x.a.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return x;
}

RmdmModel fit_rmdm(std::span<const Matrix> covariances, std::span<const int> labels) {
  check_two_classes(labels, covariances.size());
  RmdmModel model;
  for (int k = 0; k < 2; ++k) {
    std::vector<Matrix> cls;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == k) cls.push_back(covariances[i]);
    auto fm = spd_frechet_mean(cls);
    model.means[k] = std::move(fm.mean);
    model.converged[k] = fm.converged;
    model.inv_sqrt[k] = sym_inv_sqrt(model.means[k]);
  }
  return model;
}

RmdmModel fit_rmdm(std::span<const Trial* const> trials, std::span<const int> labels, double shrink) {
  std::vector<Matrix> covs;
  covs.reserve(trials.size());
  for (const auto* t : trials) covs.push_back(trial_covariance(*t, shrink));
  return fit_rmdm(covs, labels);
}

double score_rmdm(const RmdmModel& model, const Matrix& covariance) {
  const double d0 = spd_geodesic_distance_from(model.inv_sqrt[0], covariance);
  const double d1 = spd_geodesic_distance_from(model.inv_sqrt[1], covariance);
  if (d0 + d1 == 0.0) return 0.5;
  return d0 / (d0 + d1);
}

double score_rmdm(const RmdmModel& model, const Trial& trial, double shrink) {
  return score_rmdm(model, trial_covariance(trial, shrink));
}

int predict_rmdm(const RmdmModel& model, const Matrix& covariance) {
  return score_rmdm(model, covariance) > 0.5 ? 1 : 0;
}

LdaModel fit_lda(const Matrix& x, std::span<const int> labels, double loading_scale) {
  check_two_classes(labels, x.rows);
  const std::size_t n = x.rows, d = x.cols;
  std::array<std::vector<double>, 2> mu{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  std::array<std::size_t, 2> count{};
  for (std::size_t i = 0; i < n; ++i) {
    const int k = labels[i];
    ++count[k];
    for (std::size_t j = 0; j < d; ++j) mu[k][j] += x(i, j);
  }
  for (int k = 0; k < 2; ++k)
    for (double& v : mu[k]) v /= static_cast<double>(count[k]);

  Matrix xc(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) xc(i, j) = x(i, j) - mu[labels[i]][j];
  const double dof = static_cast<double>(std::max<std::size_t>(n, 3) - 2);
  double tr = 0.0;
  for (double v : xc.a) tr += v * v;
  tr /= dof;
  double lambda = loading_scale * tr / static_cast<double>(d);
  if (!(lambda > 0.0)) lambda = loading_scale;

  std::vector<double> delta(d);
  for (std::size_t j = 0; j < d; ++j) delta[j] = mu[1][j] - mu[0][j];

  // Primal d x d system when it is the smaller one, otherwise the n x n
  // Gram form through the Woodbury identity.
  auto solve = [](const Matrix& a, const std::vector<double>& b) {
    if (a.rows <= 256) return spd_solve(a, b);
    Eigen::Map<const Eigen::VectorXd> rhs(b.data(), static_cast<Eigen::Index>(b.size()));
    const Eigen::VectorXd sol = view(a).llt().solve(rhs);
    return std::vector<double>(sol.data(), sol.data() + sol.size());
  };

  LdaModel model;
  model.loading = lambda;
  const auto xm = view(xc);
  if (d <= n) {
    RowMat s = (xm.transpose() * xm) / dof;
    s.diagonal().array() += lambda;
    Matrix sm(d, d, std::vector<double>(s.data(), s.data() + s.size()));
    model.w = solve(sm, delta);
  } else {
    RowMat g = xm * xm.transpose();
    g.diagonal().array() += dof * lambda;
    Matrix gm(n, n, std::vector<double>(g.data(), g.data() + g.size()));
    Eigen::Map<const Eigen::VectorXd> dv(delta.data(), static_cast<Eigen::Index>(d));
    const Eigen::VectorXd xd = xm * dv;
    const auto inner = solve(gm, std::vector<double>(xd.data(), xd.data() + xd.size()));
    Eigen::Map<const Eigen::VectorXd> iv(inner.data(), static_cast<Eigen::Index>(n));
    const Eigen::VectorXd w = (dv - xm.transpose() * iv) / lambda;
    model.w.assign(w.data(), w.data() + w.size());
  }
  double mid = 0.0;
  for (std::size_t j = 0; j < d; ++j) mid += model.w[j] * 0.5 * (mu[0][j] + mu[1][j]);
  model.b = -mid;
  return model;
}

double score_lda(const LdaModel& model, std::span<const double> x) {
  if (x.size() != model.w.size()) throw DimensionError("LDA feature length mismatch");
  double s = model.b;
  for (std::size_t j = 0; j < x.size(); ++j) s += model.w[j] * x[j];
  return s;
}

LogRegModel fit_logreg(const Matrix& x, std::span<const int> labels, const LogRegOptions& options) {
  check_two_classes(labels, x.rows);
  const std::size_t n = x.rows, d = x.cols;
  LogRegModel model;
  model.mean.assign(d, 0.0);
  model.scale.assign(d, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) model.mean[j] += x(i, j);
  for (double& m : model.mean) m /= static_cast<double>(n);
  std::vector<double> var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) var[j] += (x(i, j) - model.mean[j]) * (x(i, j) - model.mean[j]);
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(n));
    model.scale[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  RowMat z(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) z(i, j) = (x(i, j) - model.mean[j]) * model.scale[j];

  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = labels[i];
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d), mw = w, vw = w;
  double b = 0.0, mb = 0.0, vb = 0.0;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= options.steps; ++t) {
    Eigen::VectorXd r = (z * w).array() + b;
    for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = sigmoid(r[i]) - y[i];
    const Eigen::VectorXd gw = z.transpose() * r / static_cast<double>(n) + options.l2 * w;
    const double gb = r.mean();
    mw = b1 * mw + (1 - b1) * gw;
    vw = b2 * vw + (1 - b2) * gw.cwiseProduct(gw);
    mb = b1 * mb + (1 - b1) * gb;
    vb = b2 * vb + (1 - b2) * gb * gb;
    const double c1 = 1 - std::pow(b1, t), c2 = 1 - std::pow(b2, t);
    w.array() -= options.lr * (mw.array() / c1) / ((vw.array() / c2).sqrt() + eps);
    b -= options.lr * (mb / c1) / (std::sqrt(vb / c2) + eps);
  }
  model.w.assign(w.data(), w.data() + w.size());
  model.b = b;
  return model;
}

double score_logreg(const LogRegModel& model, std::span<const double> x) {
  if (x.size() != model.w.size()) throw DimensionError("logistic regression feature length mismatch");
  double s = model.b;
  for (std::size_t j = 0; j < x.size(); ++j) s += model.w[j] * (x[j] - model.mean[j]) * model.scale[j];
  return sigmoid(s);
}

}  // namespace evlab
