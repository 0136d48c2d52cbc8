#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "evlab/classifiers.hpp"
#include "evlab/errors.hpp"
#include "evlab/linalg.hpp"
#include "evlab/rng.hpp"
#include "evlab/spd.hpp"
#include "test_helpers.hpp"

using namespace evlab;

using evlab::testing::cholesky;
using evlab::testing::congruence;
using evlab::testing::max_abs_diff;
using evlab::testing::random_matrix;
using evlab::testing::random_spd;
using evlab::testing::sample_trial;

TEST(SymEig, IdentityAndDiagonal) {
  const auto e = sym_eig(Matrix::identity(5));
  for (double v : e.values) EXPECT_EQ(v, 1.0);
  const auto d = sym_eig(Matrix::diagonal({1.0, 3.0}));
  EXPECT_EQ(d.values, (std::vector<double>{3.0, 1.0}));
  EXPECT_EQ(std::abs(d.vectors(0, 1)), 1.0);
  EXPECT_EQ(std::abs(d.vectors(1, 0)), 1.0);
  EXPECT_EQ(d.vectors(0, 0), 0.0);
}

TEST(SymEig, TwoByTwoMatchesCharacteristicRoots) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3), c = rng.uniform(-3, 3);
    const double mid = 0.5 * (a + c), rad = std::hypot(0.5 * (a - c), b);
    const auto e = sym_eig(Matrix(2, 2, {a, b, b, c}));
    EXPECT_NEAR(e.values[0], mid + rad, 1e-12);
    EXPECT_NEAR(e.values[1], mid - rad, 1e-12);
  }
}

class SymEigSeed : public ::testing::TestWithParam<int> {};

TEST_P(SymEigSeed, ReconstructsRandomSymmetric) {
  Rng rng(GetParam());
  auto a = random_matrix(8, 8, rng);
  a = add(a, transpose(a));
  const auto e = sym_eig(a);
  const auto rec = matmul(matmul(e.vectors, Matrix::diagonal(e.values)), transpose(e.vectors));
  EXPECT_LE(frobenius_norm(add(rec, a, -1.0)) / frobenius_norm(a), 1e-9);
  EXPECT_LE(max_abs_diff(matmul(transpose(e.vectors), e.vectors), Matrix::identity(8)), 1e-12);
  EXPECT_TRUE(std::is_sorted(e.values.rbegin(), e.values.rend()));
  EXPECT_LE(e.sweeps, 100);
  EXPECT_NEAR(std::accumulate(e.values.begin(), e.values.end(), 0.0), trace(a), 1e-10);
}

INSTANTIATE_TEST_SUITE_P(Seeds, SymEigSeed, ::testing::Range(1, 9));

TEST(SymEig, RejectsNonSymmetric) {
  EXPECT_THROW(sym_eig(Matrix(2, 2, {1, 2, 3, 4})), UsageError);
  EXPECT_THROW(sym_eig(Matrix(2, 3)), DimensionError);
}

TEST(MatrixFunctions, InversesAndRoots) {
  Rng rng(2);
  const auto a = random_spd(6, rng);
  const auto r = sym_sqrt(a);
  EXPECT_LE(max_abs_diff(matmul(r, r), a), 1e-10 * frobenius_norm(a));
  const auto ir = sym_inv_sqrt(a);
  EXPECT_LE(max_abs_diff(matmul(matmul(ir, a), ir), Matrix::identity(6)), 1e-10);
  EXPECT_LE(max_abs_diff(sym_exp(sym_log(a)), a), 1e-9 * frobenius_norm(a));
  const std::vector<double> b = {1, 2, 3, 4, 5, 6};
  const auto x = spd_solve(a, b);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 6; ++j) s += a(i, j) * x[j];
    EXPECT_NEAR(s, b[i], 1e-10);
  }
}

TEST(Covariance, AnticorrelatedChannels) {
  Trial t;
  t.channel_names = {"A", "B"};
  Rng rng(3);
  t.data.resize(512);
  for (std::size_t s = 0; s < 256; ++s) {
    const double v = rng.normal();
    t.data[s] = 2.0 * v + 1.0;
    t.data[256 + s] = -0.5 * v;
  }
  const auto c = trial_covariance(t, 0.0);
  EXPECT_NEAR(c(0, 1), -std::sqrt(c(0, 0) * c(1, 1)), 1e-12);
  // Independent two-pass estimate.
  double m0 = 0;
  for (std::size_t s = 0; s < 256; ++s) m0 += t.data[s];
  m0 /= 256;
  double v0 = 0;
  for (std::size_t s = 0; s < 256; ++s) v0 += (t.data[s] - m0) * (t.data[s] - m0);
  EXPECT_NEAR(c(0, 0), v0 / 255, 1e-12);
}

TEST(Covariance, ShrinkageFloorsConstantChannel) {
  Trial t;
  t.channel_names = {"A", "B", "C"};
  Rng rng(4);
  t.data.resize(3 * 256);
  for (std::size_t s = 0; s < 256; ++s) {
    t.data[s] = rng.normal();
    t.data[256 + s] = 7.0;
    t.data[512 + s] = rng.normal();
  }
  const auto raw = trial_covariance(t, 0.0);
  const auto c = trial_covariance(t);
  EXPECT_NEAR(c(1, 1), 1e-3 * trace(raw) / 3.0, 1e-15);
  EXPECT_GT(c(1, 1), 0.0);
  EXPECT_TRUE(is_spd(c));
  EXPECT_GT(sym_eig(c).values.back(), 0.0);
  EXPECT_TRUE(is_symmetric(c, 1e-12));
}

TEST(Geodesic, KnownValues) {
  Rng rng(5);
  const auto a = random_spd(4, rng);
  EXPECT_NEAR(spd_geodesic_distance(a, a), 0.0, 1e-12);
  EXPECT_NEAR(spd_geodesic_distance(Matrix::identity(2), Matrix::diagonal({std::exp(2.0), 1.0})), 2.0, 1e-12);
  EXPECT_THROW(spd_geodesic_distance(Matrix::identity(2), Matrix::diagonal({1.0, -1.0})), UsageError);
  EXPECT_THROW(spd_geodesic_distance(Matrix::identity(2), Matrix::identity(3)), DimensionError);
}

class GeodesicSeed : public ::testing::TestWithParam<int> {};

TEST_P(GeodesicSeed, MetricPropertiesAndCongruenceInvariance) {
  Rng rng(GetParam());
  const auto a = random_spd(8, rng), b = random_spd(8, rng);
  const double d = spd_geodesic_distance(a, b);
  EXPECT_GT(d, 0.0);
  EXPECT_NEAR(d, spd_geodesic_distance(b, a), 1e-10);
  Matrix w = random_matrix(8, 8, rng);
  for (std::size_t i = 0; i < 8; ++i) w(i, i) += 3.0;
  EXPECT_NEAR(spd_geodesic_distance(congruence(w, a), congruence(w, b)), d, 1e-8);
  EXPECT_NEAR(spd_geodesic_distance_from(sym_inv_sqrt(a), b), d, 1e-10);
  // log-eigenvalue oracle: d^2 = sum log^2 of generalized eigenvalues of (B, A).
  const auto ir = sym_inv_sqrt(a);
  const auto ev = sym_eig(matmul(matmul(ir, b), ir)).values;
  double s = 0;
  for (double v : ev) s += std::log(v) * std::log(v);
  EXPECT_NEAR(d, std::sqrt(s), 1e-10);
}

INSTANTIATE_TEST_SUITE_P(Seeds, GeodesicSeed, ::testing::Range(10, 18));

TEST(Frechet, Duplicates) {
  Rng rng(6);
  const auto a = random_spd(5, rng);
  const std::vector<Matrix> two = {a, a};
  const auto m = spd_frechet_mean(two);
  EXPECT_LE(max_abs_diff(m.mean, a), 1e-10);
  const std::vector<Matrix> one = {a};
  EXPECT_LE(max_abs_diff(spd_frechet_mean(one).mean, a), 1e-10);
  EXPECT_THROW(spd_frechet_mean(std::vector<Matrix>{}), UsageError);
}

TEST(Frechet, CommutingDiagonalsGiveGeometricMean) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> a(8), b(8), g(8);
    for (std::size_t i = 0; i < 8; ++i) {
      a[i] = rng.uniform(0.1, 10);
      b[i] = rng.uniform(0.1, 10);
      g[i] = std::sqrt(a[i] * b[i]);
    }
    const std::vector<Matrix> mats = {Matrix::diagonal(a), Matrix::diagonal(b)};
    const auto m = spd_frechet_mean(mats);
    EXPECT_TRUE(m.converged);
    EXPECT_LE(max_abs_diff(m.mean, Matrix::diagonal(g)), 1e-8);
  }
}

TEST(Frechet, GradientVanishesAtConvergence) {
  Rng rng(8);
  std::vector<Matrix> mats;
  for (int i = 0; i < 12; ++i) mats.push_back(random_spd(6, rng, 0.2));
  const auto m = spd_frechet_mean(mats);
  EXPECT_TRUE(m.converged);
  EXPECT_LT(m.gradient_norm, 1e-8);
  EXPECT_TRUE(is_spd(m.mean));
  // Independent check of the stationarity condition.
  const auto ir = sym_inv_sqrt(m.mean);
  Matrix g(6, 6);
  for (const auto& c : mats) g = add(g, sym_log(matmul(matmul(ir, c), ir)), 1.0 / 12.0);
  EXPECT_LT(frobenius_norm(g), 1e-8);
  const auto capped = spd_frechet_mean(mats, 1e-8, 1);
  EXPECT_FALSE(capped.converged);
  EXPECT_TRUE(is_spd(capped.mean));
  EXPECT_EQ(capped.iterations, 1);
}

TEST(Rmdm, LimitCases) {
  Rng rng(9);
  const auto m0 = random_spd(4, rng), m1 = random_spd(4, rng);
  const std::vector<Matrix> covs = {m0, m1};
  const std::vector<int> labels = {0, 1};
  const auto model = fit_rmdm(covs, labels);
  EXPECT_NEAR(score_rmdm(model, m1), 1.0, 1e-12);
  EXPECT_NEAR(score_rmdm(model, m0), 0.0, 1e-12);
  EXPECT_EQ(predict_rmdm(model, m1), 1);
  // Geodesic midpoint is equidistant.
  const auto r = sym_sqrt(m0), ir = sym_inv_sqrt(m0);
  const auto mid = matmul(matmul(r, sym_sqrt(matmul(matmul(ir, m1), ir))), r);
  EXPECT_NEAR(score_rmdm(model, mid), 0.5, 1e-9);
  const std::vector<int> single = {1, 1};
  EXPECT_THROW(fit_rmdm(covs, single), UsageError);
}

TEST(Rmdm, SeparatesCovarianceClasses) {
  Rng rng(10);
  const std::size_t n = 8;
  Matrix s0 = Matrix::identity(n);
  const Matrix g = random_matrix(n, n, rng);
  const Matrix q = sym_eig(add(g, transpose(g))).vectors;
  std::vector<double> spectrum(n);
  for (std::size_t i = 0; i < n; ++i) spectrum[i] = i % 2 ? 0.6 : 1.6;
  Matrix s1 = matmul(matmul(q, Matrix::diagonal(spectrum)), transpose(q));
  symmetrize(s1);
  const auto l0 = cholesky(s0), l1 = cholesky(s1);
  std::vector<Trial> train, test;
  std::vector<int> ytrain, ytest;
  for (int i = 0; i < 200; ++i) {
    for (int k = 0; k < 2; ++k) {
      train.push_back(sample_trial(k ? l1 : l0, rng));
      ytrain.push_back(k);
      test.push_back(sample_trial(k ? l1 : l0, rng));
      ytest.push_back(k);
    }
  }
  std::vector<const Trial*> ptrain;
  for (const auto& t : train) ptrain.push_back(&t);
  const auto model = fit_rmdm(ptrain, ytrain);
  EXPECT_TRUE(model.converged[0] && model.converged[1]);
  int correct = 0;
  std::vector<int> pred;
  for (std::size_t i = 0; i < test.size(); ++i) {
    pred.push_back(predict_rmdm(model, trial_covariance(test[i])));
    correct += pred.back() == ytest[i];
    const double s = score_rmdm(model, test[i]);
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
  EXPECT_GE(correct / static_cast<double>(test.size()), 0.9);

  // Argmin invariance under a common congruence of every covariance.
  Matrix w = random_matrix(n, n, rng);
  for (std::size_t i = 0; i < n; ++i) w(i, i) += 4.0;
  std::vector<Matrix> moved;
  for (const auto& t : train) moved.push_back(congruence(w, trial_covariance(t)));
  const auto model_w = fit_rmdm(moved, ytrain);
  int agree = 0;
  for (std::size_t i = 0; i < test.size(); ++i)
    agree += predict_rmdm(model_w, congruence(w, trial_covariance(test[i]))) == pred[i];
  EXPECT_EQ(agree, static_cast<int>(test.size()));
}

TEST(Lda, OneDimensionalSymmetricBoundary) {
  Matrix x(6, 1, {-1.5, -1.0, -0.5, 0.5, 1.0, 1.5});
  const std::vector<int> y = {0, 0, 0, 1, 1, 1};
  const auto m = fit_lda(x, y);
  const std::vector<double> zero = {0.0};
  EXPECT_NEAR(score_lda(m, zero), 0.0, 1e-12);
  EXPECT_GT(m.w[0], 0.0);
}

TEST(Lda, IsotropicScatterGivesMeanDifferenceDirection) {
  // Each class: centre +- e1, +- e2, so the pooled scatter is a multiple of I.
  const double c0[2] = {0.3, -1.0}, c1[2] = {2.0, 0.7};
  Matrix x(8, 2);
  std::vector<int> y;
  const double offs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  for (int k = 0; k < 2; ++k) {
    for (int j = 0; j < 4; ++j) {
      const std::size_t r = static_cast<std::size_t>(k * 4 + j);
      x(r, 0) = (k ? c1 : c0)[0] + offs[j][0];
      x(r, 1) = (k ? c1 : c0)[1] + offs[j][1];
      y.push_back(k);
    }
  }
  const auto m = fit_lda(x, y);
  const double dx = c1[0] - c0[0], dy = c1[1] - c0[1];
  const double cosine = (m.w[0] * dx + m.w[1] * dy) / (std::hypot(m.w[0], m.w[1]) * std::hypot(dx, dy));
  EXPECT_NEAR(cosine, 1.0, 1e-12);
}

TEST(Lda, WideFeaturesMatchDirectSolve) {
  // d > n exercises the Gram-matrix path; compare with a dense d x d solve.
  Rng rng(11);
  const std::size_t n = 20, d = 40;
  Matrix x(n, d);
  std::vector<int> y;
  for (std::size_t i = 0; i < n; ++i) {
    y.push_back(static_cast<int>(i % 2));
    for (std::size_t j = 0; j < d; ++j) x(i, j) = rng.normal() + (i % 2 ? 0.5 * std::sin(double(j)) : 0.0);
  }
  const auto m = fit_lda(x, y, 1e-3);
  std::vector<double> mu[2] = {std::vector<double>(d), std::vector<double>(d)};
  double cnt[2] = {0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    cnt[y[i]] += 1;
    for (std::size_t j = 0; j < d; ++j) mu[y[i]][j] += x(i, j);
  }
  for (int k = 0; k < 2; ++k)
    for (auto& v : mu[k]) v /= cnt[k];
  Matrix s(d, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) s(a, b) += (x(i, a) - mu[y[i]][a]) * (x(i, b) - mu[y[i]][b]);
  for (auto& v : s.a) v /= static_cast<double>(n - 2);
  const double lambda = 1e-3 * trace(s) / static_cast<double>(d);
  for (std::size_t a = 0; a < d; ++a) s(a, a) += lambda;
  std::vector<double> delta(d);
  for (std::size_t j = 0; j < d; ++j) delta[j] = mu[1][j] - mu[0][j];
  const auto w = spd_solve(s, delta);
  EXPECT_NEAR(m.loading, lambda, 1e-12 * lambda + 1e-15);
  double err = 0, norm = 0;
  for (std::size_t j = 0; j < d; ++j) {
    err = std::max(err, std::abs(m.w[j] - w[j]));
    norm = std::max(norm, std::abs(w[j]));
  }
  EXPECT_LE(err, 1e-7 * norm);
}

TEST(LogReg, SeparablePointsFitPerfectly) {
  Rng rng(12);
  Matrix x(60, 2);
  std::vector<int> y;
  for (std::size_t i = 0; i < 60; ++i) {
    const int k = static_cast<int>(i % 2);
    x(i, 0) = rng.uniform(0.2, 2.0) * (k ? 1 : -1);
    x(i, 1) = rng.uniform(-3, 3);
    y.push_back(k);
  }
  const auto m = fit_logreg(x, y);
  int correct = 0;
  for (std::size_t i = 0; i < 60; ++i) {
    const std::vector<double> row = {x(i, 0), x(i, 1)};
    const double p = score_logreg(m, row);
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
    correct += (p > 0.5) == (y[i] == 1);
  }
  EXPECT_EQ(correct, 60);
}

TEST(LogReg, DegenerateFeaturesDoNotFail) {
  Matrix x(10, 3);
  std::vector<int> y;
  for (std::size_t i = 0; i < 10; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = double(i);
    y.push_back(i >= 5);
  }
  EXPECT_NO_THROW(fit_logreg(x, y));
  EXPECT_NO_THROW(fit_lda(x, y));
  const auto m = fit_lda(x, y);
  for (double v : m.w) EXPECT_TRUE(std::isfinite(v));
}
