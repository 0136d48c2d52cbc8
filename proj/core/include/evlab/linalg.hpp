#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace evlab {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(const std::vector<double>& d);

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
  bool square() const { return rows == cols; }
};

Matrix matmul(const Matrix& x, const Matrix& y);
Matrix transpose(const Matrix& x);
Matrix add(const Matrix& x, const Matrix& y, double y_scale = 1.0);
double frobenius_norm(const Matrix& x);
double trace(const Matrix& x);
bool is_symmetric(const Matrix& x, double tol = 1e-10);
/// Replaces x by (x + xᵀ)/2.
void symmetrize(Matrix& x);

struct SymEig {
  /// Descending.
  std::vector<double> values;
  /// Column k is the unit eigenvector of values[k].
  Matrix vectors;
  int sweeps = 0;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// 1e-12·‖A‖_F or 100 sweeps. Throws UsageError if A is not symmetric
/// within `sym_tol` (relative to ‖A‖_F).
SymEig sym_eig(const Matrix& a, double sym_tol = 1e-10);

/// V f(Λ) Vᵀ for symmetric A.
Matrix sym_apply(const Matrix& a, const std::function<double(double)>& f);
Matrix sym_apply(const SymEig& e, const std::function<double(double)>& f);
Matrix sym_sqrt(const Matrix& a);
Matrix sym_inv_sqrt(const Matrix& a);
Matrix sym_log(const Matrix& a);
Matrix sym_exp(const Matrix& a);

/// Solves A x = b for symmetric positive-definite A via sym_eig.
std::vector<double> spd_solve(const Matrix& a, const std::vector<double>& b);

}  // namespace evlab
