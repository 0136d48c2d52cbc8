#include "evlab/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "evlab/errors.hpp"

namespace evlab::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

using detail::Node;

[[noreturn]] void dim_error(const std::string& op, const std::string& what) {
  throw DimensionError(op + ": " + what);
}

void require_same_shape(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    dim_error(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

/// Builds im2col columns for one sample: rows (i*K + j), columns t.
void im2col(const double* x, std::size_t cin, std::size_t len, std::size_t k, double* cols) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  for (std::size_t i = 0; i < cin; ++i) {
    const double* row = x + i * len;
    for (std::size_t j = 0; j < k; ++j) {
      double* out = cols + (i * k + j) * len;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
      for (std::size_t t = 0; t < len; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + shift;
        out[t] = (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) ? row[src] : 0.0;
      }
    }
  }
}

void col2im_add(const double* cols, std::size_t cin, std::size_t len, std::size_t k, double* dx) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  for (std::size_t i = 0; i < cin; ++i) {
    double* row = dx + i * len;
    for (std::size_t j = 0; j < k; ++j) {
      const double* in = cols + (i * k + j) * len;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
      for (std::size_t t = 0; t < len; ++t) {
        const std::ptrdiff_t dst = static_cast<std::ptrdiff_t>(t) + shift;
        if (dst >= 0 && dst < static_cast<std::ptrdiff_t>(len)) row[dst] += in[t];
      }
    }
  }
}

template <typename F, typename DF>
Tensor elementwise(const Tensor& x, F f, DF df_from_xy) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor::from_op(x.shape(), std::move(out), {x}, [df_from_xy](Node& self) {
    auto& p = *self.parents[0];
    auto g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df_from_xy(p.data[i], self.data[i]);
  });
}

}  // namespace

Tensor conv1d_same(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const std::string op = "conv1d_same";
  if (weights.rank() != 3) dim_error(op, "weights must be [C_out, C_in, K], got " + shape_str(weights.shape()));
  const std::size_t cout = weights.dim(0), cin = weights.dim(1), k = weights.dim(2);
  if (k % 2 == 0) dim_error(op, "kernel size must be odd, got " + std::to_string(k));
  if (bias.rank() != 1 || bias.dim(0) != cout) dim_error(op, "bias must be [" + std::to_string(cout) + "]");
  std::size_t batch;
  if (input.rank() == 2) {
    batch = 1;
  } else if (input.rank() == 3) {
    batch = input.dim(0);
  } else {
    dim_error(op, "input must be [C_in, L] or [B, C_in, L], got " + shape_str(input.shape()));
  }
  const std::size_t in_ch = input.dim(input.rank() - 2), len = input.dim(input.rank() - 1);
  if (in_ch != cin) {
    dim_error(op, "input has " + std::to_string(in_ch) + " channels, weights expect " + std::to_string(cin));
  }

  Shape out_shape = input.rank() == 2 ? Shape{cout, len} : Shape{batch, cout, len};
  std::vector<double> out(batch * cout * len);
  RowMat cols(cin * k, len);
  CMapMat w(weights.data().data(), cout, cin * k);
  CMapVec b(bias.data().data(), cout);
  for (std::size_t n = 0; n < batch; ++n) {
    im2col(input.data().data() + n * cin * len, cin, len, k, cols.data());
    MapMat y(out.data() + n * cout * len, cout, len);
    y.noalias() = w * cols;
    y.colwise() += b;
  }

  return Tensor::from_op(std::move(out_shape), std::move(out), {input, weights, bias},
                         [batch, cin, cout, len, k](Node& self) {
    Node& x = *self.parents[0];
    Node& wt = *self.parents[1];
    Node& bs = *self.parents[2];
    CMapMat w(wt.data.data(), cout, cin * k);
    RowMat cols(cin * k, len);
    RowMat dcols(cin * k, len);
    for (std::size_t n = 0; n < batch; ++n) {
      CMapMat dy(self.grad.data() + n * cout * len, cout, len);
      if (wt.requires_grad) {
        im2col(x.data.data() + n * cin * len, cin, len, k, cols.data());
        MapMat dw(wt.grad_buffer().data(), cout, cin * k);
        dw.noalias() += dy * cols.transpose();
      }
      if (bs.requires_grad) {
        MapVec db(bs.grad_buffer().data(), cout);
        db += dy.rowwise().sum();
      }
      if (x.requires_grad) {
        dcols.noalias() = w.transpose() * dy;
        col2im_add(dcols.data(), cin, len, k, x.grad_buffer().data() + n * cin * len);
      }
    }
  });
}

Tensor linear(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const std::string op = "linear";
  if (weights.rank() != 2) dim_error(op, "weights must be [M, N], got " + shape_str(weights.shape()));
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  if (bias.rank() != 1 || bias.dim(0) != m) dim_error(op, "bias must be [" + std::to_string(m) + "]");
  std::size_t batch;
  if (input.rank() == 1) {
    batch = 1;
  } else if (input.rank() == 2) {
    batch = input.dim(0);
  } else {
    dim_error(op, "input must be [N] or [B, N], got " + shape_str(input.shape()));
  }
  if (input.dim(input.rank() - 1) != n) {
    dim_error(op, "input width " + std::to_string(input.dim(input.rank() - 1)) +
                      " does not match weights " + shape_str(weights.shape()));
  }

  Shape out_shape = input.rank() == 1 ? Shape{m} : Shape{batch, m};
  std::vector<double> out(batch * m);
  {
    CMapMat x(input.data().data(), batch, n);
    CMapMat w(weights.data().data(), m, n);
    MapMat y(out.data(), batch, m);
    y.noalias() = x * w.transpose();
    y.rowwise() += CMapVec(bias.data().data(), m).transpose();
  }
  return Tensor::from_op(std::move(out_shape), std::move(out), {input, weights, bias},
                         [batch, m, n](Node& self) {
    Node& xn = *self.parents[0];
    Node& wn = *self.parents[1];
    Node& bn = *self.parents[2];
    CMapMat dy(self.grad.data(), batch, m);
    if (wn.requires_grad) {
      MapMat dw(wn.grad_buffer().data(), m, n);
      dw.noalias() += dy.transpose() * CMapMat(xn.data.data(), batch, n);
    }
    if (bn.requires_grad) {
      MapVec db(bn.grad_buffer().data(), m);
      db += dy.colwise().sum().transpose();
    }
    if (xn.requires_grad) {
      MapMat dx(xn.grad_buffer().data(), batch, n);
      dx.noalias() += dy * CMapMat(wn.data.data(), m, n);
    }
  });
}

Tensor layer_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::string op = "layer_norm";
  if (input.rank() < 1) dim_error(op, "input must have rank >= 1");
  const std::size_t n = input.dim(input.rank() - 1);
  if (n < 2) dim_error(op, "normalized width must be >= 2");
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
    dim_error(op, "gamma/beta must be [" + std::to_string(n) + "]");
  }
  const std::size_t rows = input.numel() / n;
  std::vector<double> out(input.numel());
  std::vector<double> xhat(input.numel());
  std::vector<double> inv_std(rows);
  auto x = input.data();
  auto g = gamma.data();
  auto b = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += xr[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = (xr[i] - mu) * is;
      xhat[r * n + i] = h;
      out[r * n + i] = g[i] * h + b[i];
    }
  }
  return Tensor::from_op(input.shape(), std::move(out), {input, gamma, beta},
                         [rows, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
    Node& xn = *self.parents[0];
    Node& gn = *self.parents[1];
    Node& bn = *self.parents[2];
    const double* dy = self.grad.data();
    if (gn.requires_grad) {
      auto dg = gn.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < n; ++i) dg[i] += dy[r * n + i] * xhat[r * n + i];
    }
    if (bn.requires_grad) {
      auto db = bn.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < n; ++i) db[i] += dy[r * n + i];
    }
    if (xn.requires_grad) {
      auto dx = xn.grad_buffer();
      const double* gam = gn.data.data();
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t r = 0; r < rows; ++r) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double dh = dy[r * n + i] * gam[i];
          mean_dh += dh;
          mean_dh_h += dh * xhat[r * n + i];
        }
        mean_dh *= inv_n;
        mean_dh_h *= inv_n;
        for (std::size_t i = 0; i < n; ++i) {
          const double dh = dy[r * n + i] * gam[i];
          dx[r * n + i] += inv_std[r] * (dh - mean_dh - xhat[r * n + i] * mean_dh_h);
        }
      }
    }
  });
}

Tensor elu(const Tensor& input) {
  return elementwise(
      input, [](double v) { return v >= 0.0 ? v : std::expm1(v); },
      [](double v, double y) { return v >= 0.0 ? 1.0 : y + 1.0; });
}

Tensor sigmoid(const Tensor& input) {
  return elementwise(
      input,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor max_pool1d(const Tensor& input, std::size_t k) {
  if (k == 0) dim_error("max_pool1d", "kernel must be positive");
  const std::size_t len = input.dim(input.rank() - 1);
  if (len % k != 0) {
    dim_error("max_pool1d", "length " + std::to_string(len) + " is not divisible by " + std::to_string(k));
  }
  Shape out_shape = input.shape();
  out_shape.back() = len / k;
  const std::size_t out_n = input.numel() / k;
  std::vector<double> out(out_n);
  std::vector<std::size_t> argmax(out_n);
  auto x = input.data();
  for (std::size_t o = 0; o < out_n; ++o) {
    std::size_t best = o * k;
    for (std::size_t j = 1; j < k; ++j) {
      if (x[o * k + j] > x[best]) best = o * k + j;
    }
    argmax[o] = best;
    out[o] = x[best];
  }
  return Tensor::from_op(std::move(out_shape), std::move(out), {input},
                         [argmax = std::move(argmax)](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    if (an.requires_grad) {
      auto g = an.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn.data[i];
    }
    if (bn.requires_grad) {
      auto g = bn.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an.data[i];
    }
  });
}

Tensor scale_shift(const Tensor& x, const Tensor& scale, const Tensor& shift) {
  if (scale.numel() != 1 || shift.numel() != 1) dim_error("scale_shift", "scale and shift must be scalars");
  const double a = scale.item(), b = shift.item();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i] + b;
  return Tensor::from_op(x.shape(), std::move(out), {x, scale, shift}, [](Node& self) {
    Node& xn = *self.parents[0];
    Node& an = *self.parents[1];
    Node& bn = *self.parents[2];
    const double a = an.data[0];
    if (xn.requires_grad) {
      auto g = xn.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += a * self.grad[i];
    }
    if (an.requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * xn.data[i];
      an.grad_buffer()[0] += acc;
    }
    if (bn.requires_grad) {
      double acc = 0.0;
      for (double gi : self.grad) acc += gi;
      bn.grad_buffer()[0] += acc;
    }
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return Tensor::from_op({1}, {acc}, {x}, [](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (auto& gi : g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  return Tensor::from_op({1}, {acc * inv}, {x}, [inv](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (auto& gi : g) gi += self.grad[0] * inv;
  });
}

Tensor flatten_batch(const Tensor& x) {
  if (x.rank() < 2) dim_error("flatten_batch", "need a batch axis, got " + shape_str(x.shape()));
  return x.reshape({x.dim(0), x.numel() / x.dim(0)});
}

Tensor bce_loss(const Tensor& p, std::span<const double> labels) {
  const std::size_t batch = p.numel();
  if (!(p.rank() == 1 || (p.rank() == 2 && p.dim(1) == 1))) {
    dim_error("bce_loss", "probabilities must be [B] or [B, 1], got " + shape_str(p.shape()));
  }
  if (labels.size() != batch) {
    dim_error("bce_loss", std::to_string(batch) + " probabilities vs " + std::to_string(labels.size()) + " labels");
  }
  std::vector<double> y(labels.begin(), labels.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double q = std::clamp(p[i], kBceClamp, 1.0 - kBceClamp);
    acc -= y[i] * std::log(q) + (1.0 - y[i]) * std::log1p(-q);
  }
  const double inv = 1.0 / static_cast<double>(batch);
  return Tensor::from_op({1}, {acc * inv}, {p}, [y = std::move(y), inv](Node& self) {
    Node& pn = *self.parents[0];
    auto g = pn.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double raw = pn.data[i];
      // Zero gradient where the clamp is active.
      if (raw < kBceClamp || raw > 1.0 - kBceClamp) continue;
      g[i] += self.grad[0] * inv * (-(y[i] / raw) + (1.0 - y[i]) / (1.0 - raw));
    }
  });
}

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.numel() != target.numel()) {
    dim_error("mse_loss", "length mismatch " + shape_str(prediction.shape()) + " vs " +
                              shape_str(target.shape()));
  }
  const std::size_t n = prediction.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = prediction[i] - target[i];
    acc += d * d;
  }
  const double inv = 1.0 / static_cast<double>(n);
  return Tensor::from_op({1}, {acc * inv}, {prediction, target}, [inv](Node& self) {
    Node& pn = *self.parents[0];
    Node& tn = *self.parents[1];
    const double scale = 2.0 * inv * self.grad[0];
    if (pn.requires_grad) {
      auto g = pn.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * (pn.data[i] - tn.data[i]);
    }
    if (tn.requires_grad) {
      auto g = tn.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= scale * (pn.data[i] - tn.data[i]);
    }
  });
}

Tensor euclidean_distance(const Tensor& a, const Tensor& b) {
  require_same_shape("euclidean_distance", a, b);
  if (a.rank() != 1 && a.rank() != 2) {
    dim_error("euclidean_distance", "inputs must be [N] or [B, N], got " + shape_str(a.shape()));
  }
  const std::size_t rows = a.rank() == 1 ? 1 : a.dim(0);
  const std::size_t n = a.dim(a.rank() - 1);
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = a[r * n + i] - b[r * n + i];
      acc += d * d;
    }
    out[r] = std::sqrt(acc);
  }
  return Tensor::from_op({rows}, std::move(out), {a, b}, [rows, n](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    for (std::size_t r = 0; r < rows; ++r) {
      const double dist = self.data[r];
      if (dist == 0.0) continue;
      const double s = self.grad[r] / dist;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = an.data[r * n + i] - bn.data[r * n + i];
        if (an.requires_grad) an.grad_buffer()[r * n + i] += s * d;
        if (bn.requires_grad) bn.grad_buffer()[r * n + i] -= s * d;
      }
    }
  });
}

}  // namespace evlab::ops
