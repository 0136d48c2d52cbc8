#include "evlab/spd.hpp"

#include <cmath>
#include <limits>

#include "evlab/errors.hpp"

namespace evlab {

Matrix trial_covariance(const Trial& trial, double shrink) {
  const std::size_t c = trial.channels();
  const std::size_t l = kSamplesPerTrial;
  std::vector<double> centered(trial.data);
  for (std::size_t i = 0; i < c; ++i) {
    double m = 0.0;
    for (std::size_t t = 0; t < l; ++t) m += centered[i * l + t];
    m /= static_cast<double>(l);
    for (std::size_t t = 0; t < l; ++t) centered[i * l + t] -= m;
  }
  Matrix cov(c, c);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = i; j < c; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < l; ++t) s += centered[i * l + t] * centered[j * l + t];
      s /= static_cast<double>(l - 1);
      cov(i, j) = s;
      cov(j, i) = s;
    }
  }
  double load = shrink * trace(cov) / static_cast<double>(c);
  if (!(load > 0.0)) load = shrink;
  for (std::size_t i = 0; i < c; ++i) cov(i, i) += load;
  return cov;
}

bool is_spd(const Matrix& m) {
  if (!is_symmetric(m, 1e-12)) return false;
  return sym_eig(m, 1e-12).values.back() > 0.0;
}

double spd_geodesic_distance_from(const Matrix& a_inv_sqrt, const Matrix& b) {
  if (a_inv_sqrt.rows != b.rows || !b.square()) throw DimensionError("geodesic distance needs equal orders");
  Matrix inner = matmul(matmul(a_inv_sqrt, b), a_inv_sqrt);
  symmetrize(inner);
  const auto e = sym_eig(inner);
  if (!(e.values.back() > 0.0)) throw UsageError("geodesic distance needs SPD matrices");
  double s = 0.0;
  for (double v : e.values) s += std::log(v) * std::log(v);
  return std::sqrt(s);
}

double spd_geodesic_distance(const Matrix& a, const Matrix& b) {
  if (!a.square() || a.rows != b.rows || !b.square()) throw DimensionError("geodesic distance needs equal orders");
  return spd_geodesic_distance_from(sym_inv_sqrt(a), b);
}

FrechetMean spd_frechet_mean(std::span<const Matrix> mats, double tol, int max_iter) {
  if (mats.empty()) throw UsageError("Frechet mean of an empty set");
  const std::size_t n = mats[0].rows;
  Matrix m(n, n);
  for (const auto& c : mats) {
    if (c.rows != n || !c.square()) throw DimensionError("Frechet mean needs matrices of one order");
    m = add(m, c);
  }
  for (double& v : m.a) v /= static_cast<double>(mats.size());

  FrechetMean best{m, 0, std::numeric_limits<double>::infinity(), false};
  for (int it = 0; it <= max_iter; ++it) {
    const auto e = sym_eig(m);
    if (!(e.values.back() > 0.0)) throw NumericError("Frechet mean iterate lost positive definiteness");
    const Matrix root = sym_apply(e, [](double x) { return std::sqrt(x); });
    const Matrix inv_root = sym_apply(e, [](double x) { return 1.0 / std::sqrt(x); });
    Matrix g(n, n);
    for (const auto& c : mats) {
      Matrix inner = matmul(matmul(inv_root, c), inv_root);
      symmetrize(inner);
      g = add(g, sym_log(inner));
    }
    for (double& v : g.a) v /= static_cast<double>(mats.size());
    const double norm = frobenius_norm(g);
    if (norm < best.gradient_norm) best = {m, it, norm, norm < tol};
    if (norm < tol || it == max_iter) break;
    m = matmul(matmul(root, sym_exp(g)), root);
    symmetrize(m);
  }
  return best;
}

}  // namespace evlab
