#include "evlab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "evlab/errors.hpp"

namespace evlab {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), a(std::move(values)) {
  if (a.size() != r * c) throw DimensionError("matrix data does not match its shape");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(const std::vector<double>& d) {
  Matrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

Matrix matmul(const Matrix& x, const Matrix& y) {
  if (x.cols != y.rows) {
    throw DimensionError("matmul " + std::to_string(x.rows) + "x" + std::to_string(x.cols) + " by " +
                         std::to_string(y.rows) + "x" + std::to_string(y.cols));
  }
  Matrix out(x.rows, y.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t k = 0; k < x.cols; ++k) {
      const double xik = x(i, k);
      if (xik == 0.0) continue;
      const double* yr = &y.a[k * y.cols];
      double* o = &out.a[i * out.cols];
      for (std::size_t j = 0; j < y.cols; ++j) o[j] += xik * yr[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& x) {
  Matrix t(x.cols, x.rows);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) t(j, i) = x(i, j);
  return t;
}

Matrix add(const Matrix& x, const Matrix& y, double y_scale) {
  if (x.rows != y.rows || x.cols != y.cols) throw DimensionError("matrix add shape mismatch");
  Matrix out = x;
  for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] += y_scale * y.a[i];
  return out;
}

double frobenius_norm(const Matrix& x) {
  double s = 0.0;
  for (double v : x.a) s += v * v;
  return std::sqrt(s);
}

double trace(const Matrix& x) {
  if (!x.square()) throw DimensionError("trace of a non-square matrix");
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) s += x(i, i);
  return s;
}

bool is_symmetric(const Matrix& x, double tol) {
  if (!x.square()) return false;
  const double scale = std::max(1.0, frobenius_norm(x));
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = i + 1; j < x.cols; ++j)
      if (std::abs(x(i, j) - x(j, i)) > tol * scale) return false;
  return true;
}

void symmetrize(Matrix& x) {
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = i + 1; j < x.cols; ++j) {
      const double m = 0.5 * (x(i, j) + x(j, i));
      x(i, j) = m;
      x(j, i) = m;
    }
}

namespace {

double off_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace

SymEig sym_eig(const Matrix& input, double sym_tol) {
  if (!input.square()) throw DimensionError("sym_eig needs a square matrix");
  if (!is_symmetric(input, sym_tol)) throw UsageError("sym_eig input is not symmetric");
  const std::size_t n = input.rows;
  Matrix a = input;
  symmetrize(a);
  Matrix v = Matrix::identity(n);
  const double stop = 1e-12 * std::max(frobenius_norm(a), std::numeric_limits<double>::min());

  int sweep = 0;
  for (; sweep < 100 && off_norm(a) >= stop; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = 0.5 * (a(q, q) - a(p, p)) / apq;
        double t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        if (theta < 0.0) t = -t;
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          if (r != p && r != q) {
            const double arp = a(r, p);
            const double arq = a(r, q);
            a(r, p) = a(p, r) = c * arp - s * arq;
            a(r, q) = a(q, r) = s * arp + c * arq;
          }
          const double vrp = v(r, p);
          const double vrq = v(r, q);
          v(r, p) = c * vrp - s * vrq;
          v(r, q) = s * vrp + c * vrq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  SymEig out{std::vector<double>(n), Matrix(n, n), sweep};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
  }
  return out;
}

Matrix sym_apply(const SymEig& e, const std::function<double(double)>& f) {
  const std::size_t n = e.values.size();
  std::vector<double> fv(n);
  for (std::size_t k = 0; k < n; ++k) fv[k] = f(e.values[k]);
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += e.vectors(i, k) * fv[k] * e.vectors(j, k);
      out(i, j) = s;
      out(j, i) = s;
    }
  }
  return out;
}

Matrix sym_apply(const Matrix& a, const std::function<double(double)>& f) { return sym_apply(sym_eig(a), f); }

namespace {

void require_positive(const SymEig& e, const char* what) {
  if (e.values.empty() || !(e.values.back() > 0.0)) {
    throw UsageError(std::string(what) + " needs a positive-definite matrix");
  }
}

}  // namespace

Matrix sym_sqrt(const Matrix& a) {
  const auto e = sym_eig(a);
  require_positive(e, "matrix square root");
  return sym_apply(e, [](double x) { return std::sqrt(x); });
}

Matrix sym_inv_sqrt(const Matrix& a) {
  const auto e = sym_eig(a);
  require_positive(e, "inverse square root");
  return sym_apply(e, [](double x) { return 1.0 / std::sqrt(x); });
}

Matrix sym_log(const Matrix& a) {
  const auto e = sym_eig(a);
  require_positive(e, "matrix logarithm");
  return sym_apply(e, [](double x) { return std::log(x); });
}

Matrix sym_exp(const Matrix& a) {
  return sym_apply(a, [](double x) { return std::exp(x); });
}

std::vector<double> spd_solve(const Matrix& a, const std::vector<double>& b) {
  if (a.rows != b.size()) throw DimensionError("spd_solve right-hand side length mismatch");
  const auto e = sym_eig(a);
  require_positive(e, "spd_solve");
  const std::size_t n = b.size();
  std::vector<double> x(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double proj = 0.0;
    for (std::size_t i = 0; i < n; ++i) proj += e.vectors(i, k) * b[i];
    proj /= e.values[k];
    for (std::size_t i = 0; i < n; ++i) x[i] += proj * e.vectors(i, k);
  }
  return x;
}

}  // namespace evlab
