#ifndef RSFT_NN_OPS_HPP_
#define RSFT_NN_OPS_HPP_

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rsft/nn/tape.hpp"

// Differentiable operations. Batched tensors carry the batch in dimension 0;
// 1D feature maps are [batch, channels, length].
namespace rsft::nn {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline void check(bool ok, const char* op, const std::string& what) {
  if (!ok) throw std::invalid_argument(std::string("[rsft::nn::") + op + "] error: " + what);
}

inline Tape& same_tape(Var a, Var b, const char* op) {
  check(&a.tape() == &b.tape(), op, "operands recorded on different tapes");
  return a.tape();
}

inline int rows_of(const Tensor& t) { return t.rank() == 0 ? 1 : t.dim(0); }
inline int cols_of(const Tensor& t) {
  return t.size() == 0 ? 0 : static_cast<int>(t.size() / rows_of(t));
}

template <typename F, typename DF>
Var unary(Var a, F&& f, DF&& df) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const int ia = a.id();
  return a.tape().record(std::move(y), a.requires_grad(), [ia, df](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(x[i], y[i]);
  });
}

}  // namespace detail

// -- elementwise -------------------------------------------------------------

inline Var add(Var a, Var b) {
  auto& tape = detail::same_tape(a, b, "add");
  detail::check(a.shape() == b.shape(), "add", "shape mismatch " + shape_string(a.shape()) +
                                                   " vs " + shape_string(b.shape()));
  Tensor y = a.value();
  y += b.value();
  const int ia = a.id(), ib = b.id();
  return tape.record(std::move(y), a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape& t, int self) {
                       const Tensor& g = t.grad(self);
                       if (t.requires_grad(ia)) t.grad(ia) += g;
                       if (t.requires_grad(ib)) t.grad(ib) += g;
                     });
}

inline Var sub(Var a, Var b) {
  auto& tape = detail::same_tape(a, b, "sub");
  detail::check(a.shape() == b.shape(), "sub", "shape mismatch");
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] - z[i];
  const int ia = a.id(), ib = b.id();
  return tape.record(std::move(y), a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape& t, int self) {
                       const Tensor& g = t.grad(self);
                       if (t.requires_grad(ia)) t.grad(ia) += g;
                       if (t.requires_grad(ib)) {
                         Tensor& gb = t.grad(ib);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                       }
                     });
}

inline Var mul(Var a, Var b) {
  auto& tape = detail::same_tape(a, b, "mul");
  detail::check(a.shape() == b.shape(), "mul", "shape mismatch " + shape_string(a.shape()) +
                                                   " vs " + shape_string(b.shape()));
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * z[i];
  const int ia = a.id(), ib = b.id();
  return tape.record(std::move(y), a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape& t, int self) {
                       const Tensor& g = t.grad(self);
                       const Tensor& x = t.value(ia);
                       const Tensor& z = t.value(ib);
                       if (t.requires_grad(ia)) {
                         Tensor& ga = t.grad(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * z[i];
                       }
                       if (t.requires_grad(ib)) {
                         Tensor& gb = t.grad(ib);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
                       }
                     });
}

inline Var scale(Var a, double s) {
  return detail::unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Var relu(Var a) {
  return detail::unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                       [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var leaky_relu(Var a, double slope = 0.2) {
  return detail::unary(a, [slope](double x) { return x > 0.0 ? x : slope * x; },
                       [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

inline double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(Var a) {
  return detail::unary(a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

inline Var exp(Var a) {
  return detail::unary(a, [](double x) { return std::exp(x); },
                       [](double, double y) { return y; });
}

// Gradient passes only where lo < x < hi.
inline Var clamp(Var a, double lo, double hi) {
  return detail::unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                       [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

// -- reductions --------------------------------------------------------------

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const int ia = a.id();
  return a.tape().record(Tensor::scalar(s), a.requires_grad(), [ia](Tape& t, int self) {
    double g = t.grad(self)[0];
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

inline Var mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  detail::check(n > 0, "mean", "empty tensor");
  return scale(sum(a), 1.0 / n);
}

// [B, ...] -> [B]
inline Var sum_rows(Var a) {
  const Tensor& x = a.value();
  const int rows = detail::rows_of(x), cols = detail::cols_of(x);
  Tensor y({rows});
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += x[r * cols + c];
    y[r] = s;
  }
  const int ia = a.id();
  return a.tape().record(std::move(y), a.requires_grad(), [ia, rows, cols](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) ga[r * cols + c] += g[r];
    }
  });
}

// -- shape -------------------------------------------------------------------

inline Var reshape(Var a, Shape shape) {
  Tensor y = a.value();
  y.reshape(std::move(shape));
  const int ia = a.id();
  return a.tape().record(std::move(y), a.requires_grad(), [ia](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

// [B, n] -> [B, count], columns [start, start + count)
inline Var slice_cols(Var a, int start, int count) {
  const Tensor& x = a.value();
  detail::check(x.rank() == 2, "slice_cols", "expects a rank-2 tensor");
  const int rows = x.dim(0), cols = x.dim(1);
  detail::check(start >= 0 && count >= 1 && start + count <= cols, "slice_cols",
                "column range out of bounds");
  Tensor y({rows, count});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < count; ++c) y[r * count + c] = x[r * cols + start + c];
  }
  const int ia = a.id();
  return a.tape().record(std::move(y), a.requires_grad(),
                         [ia, rows, cols, start, count](Tape& t, int self) {
                           const Tensor& g = t.grad(self);
                           Tensor& ga = t.grad(ia);
                           for (int r = 0; r < rows; ++r) {
                             for (int c = 0; c < count; ++c) {
                               ga[r * cols + start + c] += g[r * count + c];
                             }
                           }
                         });
}

// [B, K] -> [B]
inline Var column(Var a, int k) {
  auto s = slice_cols(a, k, 1);
  return reshape(s, {a.dim(0)});
}

// [B, n] ++ [B, m] -> [B, n + m]
inline Var concat_cols(Var a, Var b) {
  auto& tape = detail::same_tape(a, b, "concat_cols");
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  detail::check(x.rank() == 2 && z.rank() == 2 && x.dim(0) == z.dim(0), "concat_cols",
                "expects rank-2 tensors with equal rows");
  const int rows = x.dim(0), n = x.dim(1), m = z.dim(1);
  Tensor y({rows, n + m});
  for (int r = 0; r < rows; ++r) {
    std::copy_n(x.data() + r * n, n, y.data() + r * (n + m));
    std::copy_n(z.data() + r * m, m, y.data() + r * (n + m) + n);
  }
  const int ia = a.id(), ib = b.id();
  return tape.record(std::move(y), a.requires_grad() || b.requires_grad(),
                     [ia, ib, rows, n, m](Tape& t, int self) {
                       const Tensor& g = t.grad(self);
                       if (t.requires_grad(ia)) {
                         Tensor& ga = t.grad(ia);
                         for (int r = 0; r < rows; ++r) {
                           for (int c = 0; c < n; ++c) ga[r * n + c] += g[r * (n + m) + c];
                         }
                       }
                       if (t.requires_grad(ib)) {
                         Tensor& gb = t.grad(ib);
                         for (int r = 0; r < rows; ++r) {
                           for (int c = 0; c < m; ++c) gb[r * m + c] += g[r * (n + m) + n + c];
                         }
                       }
                     });
}

// Stacks along dimension 0; trailing dimensions must agree.
inline Var concat_rows(const std::vector<Var>& parts) {
  detail::check(!parts.empty(), "concat_rows", "no operands");
  Tape& tape = parts.front().tape();
  Shape tail(parts.front().shape().begin() + 1, parts.front().shape().end());
  int rows = 0;
  bool rg = false;
  for (const auto& p : parts) {
    detail::check(&p.tape() == &tape, "concat_rows", "operands recorded on different tapes");
    detail::check(Shape(p.shape().begin() + 1, p.shape().end()) == tail, "concat_rows",
                  "trailing shape mismatch");
    rows += p.dim(0);
    rg = rg || p.requires_grad();
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  Tensor y(shape);
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().vec().begin(), p.value().vec().end(), y.data() + offset);
    ids.push_back(p.id());
    offsets.push_back(offset);
    offset += p.value().size();
  }
  return tape.record(std::move(y), rg, [ids, offsets](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      Tensor& gp = t.grad(ids[k]);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offsets[k] + i];
    }
  });
}

// Rows [start, start + count) along dimension 0.
inline Var slice_rows(Var a, int start, int count) {
  const Tensor& x = a.value();
  detail::check(x.rank() >= 1 && start >= 0 && count >= 1 && start + count <= x.dim(0),
                "slice_rows", "row range out of bounds");
  Shape shape = x.shape();
  shape[0] = count;
  const std::size_t stride = x.size() / x.dim(0);
  Tensor y(shape);
  std::copy_n(x.data() + start * stride, count * stride, y.data());
  const int ia = a.id();
  return a.tape().record(std::move(y), a.requires_grad(), [ia, start, stride](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[start * stride + i] += g[i];
  });
}

// -- softmax family (rank 2, over the last dimension) -----------------------

inline Var softmax(Var a) {
  const Tensor& x = a.value();
  detail::check(x.rank() == 2, "softmax", "expects [B, K]");
  const int rows = x.dim(0), k = x.dim(1);
  Tensor y(x.shape());
  for (int r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * k;
    double* yr = y.data() + r * k;
    double mx = *std::max_element(xr, xr + k);
    double s = 0.0;
    for (int c = 0; c < k; ++c) s += (yr[c] = std::exp(xr[c] - mx));
    for (int c = 0; c < k; ++c) yr[c] /= s;
  }
  const int ia = a.id();
  return a.tape().record(std::move(y), a.requires_grad(), [ia, rows, k](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad(ia);
    for (int r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int c = 0; c < k; ++c) dot += g[r * k + c] * y[r * k + c];
      for (int c = 0; c < k; ++c) ga[r * k + c] += y[r * k + c] * (g[r * k + c] - dot);
    }
  });
}

namespace detail {
inline double row_logsumexp(const double* x, int k) {
  double mx = *std::max_element(x, x + k);
  double s = 0.0;
  for (int c = 0; c < k; ++c) s += std::exp(x[c] - mx);
  return mx + std::log(s);
}
}  // namespace detail

inline Var log_softmax(Var a) {
  const Tensor& x = a.value();
  detail::check(x.rank() == 2, "log_softmax", "expects [B, K]");
  const int rows = x.dim(0), k = x.dim(1);
  Tensor y(x.shape());
  for (int r = 0; r < rows; ++r) {
    double lse = detail::row_logsumexp(x.data() + r * k, k);
    for (int c = 0; c < k; ++c) y[r * k + c] = x[r * k + c] - lse;
  }
  const int ia = a.id();
  return a.tape().record(std::move(y), a.requires_grad(), [ia, rows, k](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad(ia);
    for (int r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (int c = 0; c < k; ++c) gs += g[r * k + c];
      for (int c = 0; c < k; ++c) ga[r * k + c] += g[r * k + c] - std::exp(y[r * k + c]) * gs;
    }
  });
}

// [B, K] -> [B]
inline Var logsumexp_rows(Var a) {
  const Tensor& x = a.value();
  detail::check(x.rank() == 2, "logsumexp_rows", "expects [B, K]");
  const int rows = x.dim(0), k = x.dim(1);
  Tensor y({rows});
  for (int r = 0; r < rows; ++r) y[r] = detail::row_logsumexp(x.data() + r * k, k);
  const int ia = a.id();
  return a.tape().record(std::move(y), a.requires_grad(), [ia, rows, k](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad(ia);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < k; ++c) ga[r * k + c] += g[r] * std::exp(x[r * k + c] - y[r]);
    }
  });
}

// -- layers ------------------------------------------------------------------

/// x [B, n], w [m, n], b [m] -> [B, m]
inline Var dense(Var x, Var w, Var b) {
  auto& tape = detail::same_tape(x, w, "dense");
  const Tensor& X = x.value();
  const Tensor& W = w.value();
  const Tensor& bias = b.value();
  detail::check(X.rank() == 2 && W.rank() == 2 && W.dim(1) == X.dim(1), "dense",
                "input " + shape_string(X.shape()) + " does not match weight " +
                    shape_string(W.shape()));
  detail::check(bias.size() == static_cast<std::size_t>(W.dim(0)), "dense", "bias size mismatch");
  const int batch = X.dim(0), n = X.dim(1), m = W.dim(0);
  Tensor Y({batch, m});
  detail::MatMap ym(Y.data(), batch, m);
  ym.noalias() = detail::ConstMatMap(X.data(), batch, n) *
                 detail::ConstMatMap(W.data(), m, n).transpose();
  for (int r = 0; r < batch; ++r) {
    for (int c = 0; c < m; ++c) Y[r * m + c] += bias[c];
  }
  const int ix = x.id(), iw = w.id(), ib = b.id();
  bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
  return tape.record(std::move(Y), rg, [ix, iw, ib, batch, n, m](Tape& t, int self) {
    const Tensor& G = t.grad(self);
    detail::ConstMatMap gm(G.data(), batch, m);
    if (t.requires_grad(iw)) {
      detail::MatMap(t.grad(iw).data(), m, n).noalias() +=
          gm.transpose() * detail::ConstMatMap(t.value(ix).data(), batch, n);
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (int r = 0; r < batch; ++r) {
        for (int c = 0; c < m; ++c) gb[c] += G[r * m + c];
      }
    }
    if (t.requires_grad(ix)) {
      detail::MatMap(t.grad(ix).data(), batch, n).noalias() +=
          gm * detail::ConstMatMap(t.value(iw).data(), m, n);
    }
  });
}

namespace detail {

// cols(c * K + k, b * L + i) = x[b, c, i + k - pad] (zero outside).
inline void im2col(const double* x, int batch, int channels, int length, int kernel, RowMat& cols) {
  const int pad = (kernel - 1) / 2;
  cols.resize(static_cast<Eigen::Index>(channels) * kernel, static_cast<Eigen::Index>(batch) * length);
  for (int c = 0; c < channels; ++c) {
    for (int k = 0; k < kernel; ++k) {
      double* row = cols.data() + (static_cast<std::size_t>(c) * kernel + k) * batch * length;
      for (int b = 0; b < batch; ++b) {
        const double* xr = x + (static_cast<std::size_t>(b) * channels + c) * length;
        double* out = row + static_cast<std::size_t>(b) * length;
        for (int i = 0; i < length; ++i) {
          int src = i + k - pad;
          out[i] = (src >= 0 && src < length) ? xr[src] : 0.0;
        }
      }
    }
  }
}

inline void col2im_add(const RowMat& cols, int batch, int channels, int length, int kernel, double* gx) {
  const int pad = (kernel - 1) / 2;
  for (int c = 0; c < channels; ++c) {
    for (int k = 0; k < kernel; ++k) {
      const double* row = cols.data() + (static_cast<std::size_t>(c) * kernel + k) * batch * length;
      for (int b = 0; b < batch; ++b) {
        double* gr = gx + (static_cast<std::size_t>(b) * channels + c) * length;
        const double* in = row + static_cast<std::size_t>(b) * length;
        for (int i = 0; i < length; ++i) {
          int dst = i + k - pad;
          if (dst >= 0 && dst < length) gr[dst] += in[i];
        }
      }
    }
  }
}

// Shared body of conv1d and conv1d_transpose. `wmat` is [out, in * K].
struct ConvPlan {
  int batch, in_channels, length, out_channels, kernel;
};

inline Tensor conv_forward(const Tensor& x, const RowMat& wmat, const Tensor& bias,
                           const ConvPlan& p, RowMat& cols) {
  im2col(x.data(), p.batch, p.in_channels, p.length, p.kernel, cols);
  RowMat out = wmat * cols;
  Tensor y({p.batch, p.out_channels, p.length});
  for (int b = 0; b < p.batch; ++b) {
    for (int o = 0; o < p.out_channels; ++o) {
      const double* src = out.data() + static_cast<std::size_t>(o) * p.batch * p.length +
                          static_cast<std::size_t>(b) * p.length;
      double* dst = y.data() + (static_cast<std::size_t>(b) * p.out_channels + o) * p.length;
      for (int i = 0; i < p.length; ++i) dst[i] = src[i] + bias[o];
    }
  }
  return y;
}

inline RowMat gather_output_grad(const Tensor& g, const ConvPlan& p) {
  RowMat gout(p.out_channels, static_cast<Eigen::Index>(p.batch) * p.length);
  for (int b = 0; b < p.batch; ++b) {
    for (int o = 0; o < p.out_channels; ++o) {
      const double* src = g.data() + (static_cast<std::size_t>(b) * p.out_channels + o) * p.length;
      double* dst = gout.data() + static_cast<std::size_t>(o) * p.batch * p.length +
                    static_cast<std::size_t>(b) * p.length;
      std::copy_n(src, p.length, dst);
    }
  }
  return gout;
}

inline ConvPlan conv_plan(const Tensor& x, int out_channels, int kernel, const char* op) {
  check(x.rank() == 3, op, "input must be [B, C, L], got " + shape_string(x.shape()));
  check(kernel % 2 == 1, op, "kernel size must be odd");
  return ConvPlan{x.dim(0), x.dim(1), x.dim(2), out_channels, kernel};
}

}  // namespace detail

/// Stride-1 "same" convolution. x [B, C, L], w [O, C, K] (K odd), b [O].
inline Var conv1d(Var x, Var w, Var b) {
  auto& tape = detail::same_tape(x, w, "conv1d");
  const Tensor& W = w.value();
  detail::check(W.rank() == 3, "conv1d", "weight must be [O, C, K]");
  auto plan = detail::conv_plan(x.value(), W.dim(0), W.dim(2), "conv1d");
  detail::check(W.dim(1) == plan.in_channels, "conv1d",
                "weight " + shape_string(W.shape()) + " does not match input " +
                    shape_string(x.shape()));
  detail::check(b.value().size() == static_cast<std::size_t>(plan.out_channels), "conv1d",
                "bias size mismatch");
  const int ck = plan.in_channels * plan.kernel;
  detail::RowMat wmat = detail::ConstMatMap(W.data(), plan.out_channels, ck);
  auto cols = std::make_shared<detail::RowMat>();
  Tensor y = detail::conv_forward(x.value(), wmat, b.value(), plan, *cols);
  const int ix = x.id(), iw = w.id(), ib = b.id();
  bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
  return tape.record(std::move(y), rg, [ix, iw, ib, plan, cols, ck](Tape& t, int self) {
    auto gout = detail::gather_output_grad(t.grad(self), plan);
    if (t.requires_grad(iw)) {
      detail::MatMap(t.grad(iw).data(), plan.out_channels, ck).noalias() += gout * cols->transpose();
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (int o = 0; o < plan.out_channels; ++o) gb[o] += gout.row(o).sum();
    }
    if (t.requires_grad(ix)) {
      detail::RowMat gcols =
          detail::ConstMatMap(t.value(iw).data(), plan.out_channels, ck).transpose() * gout;
      detail::col2im_add(gcols, plan.batch, plan.in_channels, plan.length, plan.kernel,
                         t.grad(ix).data());
    }
  });
}

/// Adjoint of conv1d's linear map, plus bias: x [B, C, L], w [C, O, K],
/// b [O] -> [B, O, L]. Uses the same weight layout as the convolution it
/// inverts, so <conv1d(x, w), y> == <x, conv1d_transpose(y, w)> without bias.
inline Var conv1d_transpose(Var x, Var w, Var b) {
  auto& tape = detail::same_tape(x, w, "conv1d_transpose");
  const Tensor& W = w.value();
  detail::check(W.rank() == 3, "conv1d_transpose", "weight must be [C, O, K]");
  auto plan = detail::conv_plan(x.value(), W.dim(1), W.dim(2), "conv1d_transpose");
  detail::check(W.dim(0) == plan.in_channels, "conv1d_transpose",
                "weight " + shape_string(W.shape()) + " does not match input " +
                    shape_string(x.shape()));
  detail::check(b.value().size() == static_cast<std::size_t>(plan.out_channels),
                "conv1d_transpose", "bias size mismatch");
  const int c_in = plan.in_channels, c_out = plan.out_channels, k = plan.kernel;
  // flipped[o, c * K + j] = w[c, o, K - 1 - j]
  auto flip = [c_in, c_out, k](const Tensor& w) {
    detail::RowMat f(c_out, c_in * k);
    for (int c = 0; c < c_in; ++c) {
      for (int o = 0; o < c_out; ++o) {
        for (int j = 0; j < k; ++j) f(o, c * k + j) = w[(c * c_out + o) * k + (k - 1 - j)];
      }
    }
    return f;
  };
  auto cols = std::make_shared<detail::RowMat>();
  Tensor y = detail::conv_forward(x.value(), flip(W), b.value(), plan, *cols);
  const int ix = x.id(), iw = w.id(), ib = b.id();
  bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
  return tape.record(std::move(y), rg, [=](Tape& t, int self) {
    auto gout = detail::gather_output_grad(t.grad(self), plan);
    if (t.requires_grad(iw)) {
      detail::RowMat gf = gout * cols->transpose();
      Tensor& gw = t.grad(iw);
      for (int c = 0; c < c_in; ++c) {
        for (int o = 0; o < c_out; ++o) {
          for (int j = 0; j < k; ++j) gw[(c * c_out + o) * k + (k - 1 - j)] += gf(o, c * k + j);
        }
      }
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (int o = 0; o < c_out; ++o) gb[o] += gout.row(o).sum();
    }
    if (t.requires_grad(ix)) {
      detail::RowMat gcols = flip(t.value(iw)).transpose() * gout;
      detail::col2im_add(gcols, plan.batch, c_in, plan.length, k, t.grad(ix).data());
    }
  });
}

using PoolIndices = std::shared_ptr<const std::vector<int>>;

struct Pooled {
  Var out;
  PoolIndices indices;  // argmax position within each input row
};

/// Window 2, stride 2; an odd trailing element is dropped. Ties resolve to
/// the first index.
inline Pooled max_pool(Var x) {
  const Tensor& X = x.value();
  detail::check(X.rank() == 3, "max_pool", "input must be [B, C, L]");
  const int rows = X.dim(0) * X.dim(1), length = X.dim(2);
  detail::check(length >= 2, "max_pool", "length must be at least 2");
  const int half = length / 2;
  Tensor y({X.dim(0), X.dim(1), half});
  auto idx = std::make_shared<std::vector<int>>(static_cast<std::size_t>(rows) * half);
  for (int r = 0; r < rows; ++r) {
    const double* xr = X.data() + static_cast<std::size_t>(r) * length;
    for (int j = 0; j < half; ++j) {
      int best = 2 * j + (xr[2 * j + 1] > xr[2 * j] ? 1 : 0);
      y[static_cast<std::size_t>(r) * half + j] = xr[best];
      (*idx)[static_cast<std::size_t>(r) * half + j] = best;
    }
  }
  const int ix = x.id();
  auto out = x.tape().record(std::move(y), x.requires_grad(), [ix, idx, rows, length, half](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ix);
    for (int r = 0; r < rows; ++r) {
      for (int j = 0; j < half; ++j) {
        std::size_t o = static_cast<std::size_t>(r) * half + j;
        gx[static_cast<std::size_t>(r) * length + (*idx)[o]] += g[o];
      }
    }
  });
  return Pooled{out, idx};
}

/// Scatters x [B, C, Lp] to the stored argmax positions of a length
/// `out_length` map; zeros elsewhere.
inline Var max_unpool(Var x, const PoolIndices& indices, int out_length) {
  const Tensor& X = x.value();
  detail::check(X.rank() == 3, "max_unpool", "input must be [B, C, L]");
  detail::check(indices && indices->size() == X.size(), "max_unpool", "index count mismatch");
  const int rows = X.dim(0) * X.dim(1), half = X.dim(2);
  Tensor y({X.dim(0), X.dim(1), out_length});
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < half; ++j) {
      std::size_t o = static_cast<std::size_t>(r) * half + j;
      int pos = (*indices)[o];
      detail::check(pos >= 0 && pos < out_length, "max_unpool", "index out of range");
      y[static_cast<std::size_t>(r) * out_length + pos] = X[o];
    }
  }
  const int ix = x.id();
  return x.tape().record(std::move(y), x.requires_grad(),
                         [ix, indices, rows, half, out_length](Tape& t, int self) {
                           const Tensor& g = t.grad(self);
                           Tensor& gx = t.grad(ix);
                           for (int r = 0; r < rows; ++r) {
                             for (int j = 0; j < half; ++j) {
                               std::size_t o = static_cast<std::size_t>(r) * half + j;
                               gx[o] += g[static_cast<std::size_t>(r) * out_length + (*indices)[o]];
                             }
                           }
                         });
}

/// Nearest-neighbour unpooling: [B, C, L] -> [B, C, 2L], each value twice.
inline Var upsample2(Var x) {
  const Tensor& X = x.value();
  detail::check(X.rank() == 3, "upsample2", "input must be [B, C, L]");
  Tensor y({X.dim(0), X.dim(1), 2 * X.dim(2)});
  for (std::size_t i = 0; i < X.size(); ++i) y[2 * i] = y[2 * i + 1] = X[i];
  const int ix = x.id();
  return x.tape().record(std::move(y), x.requires_grad(), [ix](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[2 * i] + g[2 * i + 1];
  });
}

struct BatchNormOptions {
  bool training = true;
  bool update_running = true;
  double momentum = 0.9;  // weight kept on the old running value
  double eps = 1e-5;
};

/// Per-channel normalization of x [B, C] or [B, C, L]. Training mode uses
/// batch statistics (biased variance) and, optionally, folds them into the
/// running estimates (unbiased variance); eval mode uses the running ones.
inline Var batch_norm(Var x, Var gamma, Var beta, Parameter& running_mean,
                      Parameter& running_var, const BatchNormOptions& opt = {}) {
  auto& tape = detail::same_tape(x, gamma, "batch_norm");
  const Tensor& X = x.value();
  detail::check(X.rank() == 2 || X.rank() == 3, "batch_norm", "input must be [B, C] or [B, C, L]");
  const int batch = X.dim(0), channels = X.dim(1), span = X.rank() == 3 ? X.dim(2) : 1;
  detail::check(gamma.value().size() == static_cast<std::size_t>(channels) &&
                    beta.value().size() == static_cast<std::size_t>(channels) &&
                    running_mean.value.size() == static_cast<std::size_t>(channels) &&
                    running_var.value.size() == static_cast<std::size_t>(channels),
                "batch_norm", "per-channel parameter size mismatch");
  if (opt.training) {
    detail::check(batch >= 2, "batch_norm", "training mode needs a batch of at least 2");
  }
  const double count = static_cast<double>(batch) * span;
  auto at = [channels, span](int b, int c, int i) {
    return (static_cast<std::size_t>(b) * channels + c) * span + i;
  };

  std::vector<double> mu(channels), inv_std(channels);
  for (int c = 0; c < channels; ++c) {
    double m, v;
    if (opt.training) {
      double s = 0.0;
      for (int b = 0; b < batch; ++b) {
        for (int i = 0; i < span; ++i) s += X[at(b, c, i)];
      }
      m = s / count;
      double ss = 0.0;
      for (int b = 0; b < batch; ++b) {
        for (int i = 0; i < span; ++i) {
          double d = X[at(b, c, i)] - m;
          ss += d * d;
        }
      }
      v = ss / count;
      if (opt.update_running) {
        running_mean.value[c] = opt.momentum * running_mean.value[c] + (1.0 - opt.momentum) * m;
        running_var.value[c] = opt.momentum * running_var.value[c] +
                               (1.0 - opt.momentum) * v * count / std::max(1.0, count - 1.0);
      }
    } else {
      m = running_mean.value[c];
      v = running_var.value[c];
    }
    mu[c] = m;
    inv_std[c] = 1.0 / std::sqrt(v + opt.eps);
  }

  auto xhat = std::make_shared<Tensor>(X.shape());
  Tensor y(X.shape());
  const Tensor& G = gamma.value();
  const Tensor& Bt = beta.value();
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      for (int i = 0; i < span; ++i) {
        auto k = at(b, c, i);
        (*xhat)[k] = (X[k] - mu[c]) * inv_std[c];
        y[k] = G[c] * (*xhat)[k] + Bt[c];
      }
    }
  }
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  const bool training = opt.training;
  bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  return tape.record(std::move(y), rg, [=, inv_std = std::move(inv_std)](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    std::vector<double> sum_g(channels, 0.0), sum_gx(channels, 0.0);
    for (int b = 0; b < batch; ++b) {
      for (int c = 0; c < channels; ++c) {
        for (int i = 0; i < span; ++i) {
          auto k = at(b, c, i);
          sum_g[c] += g[k];
          sum_gx[c] += g[k] * (*xhat)[k];
        }
      }
    }
    if (t.requires_grad(ig)) {
      Tensor& gg = t.grad(ig);
      for (int c = 0; c < channels; ++c) gg[c] += sum_gx[c];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (int c = 0; c < channels; ++c) gb[c] += sum_g[c];
    }
    if (t.requires_grad(ix)) {
      const Tensor& gam = t.value(ig);
      Tensor& gx = t.grad(ix);
      for (int b = 0; b < batch; ++b) {
        for (int c = 0; c < channels; ++c) {
          double scale = gam[c] * inv_std[c];
          for (int i = 0; i < span; ++i) {
            auto k = at(b, c, i);
            if (training) {
              gx[k] += scale / count * (count * g[k] - sum_g[c] - (*xhat)[k] * sum_gx[c]);
            } else {
              gx[k] += scale * g[k];
            }
          }
        }
      }
    }
  });
}

// -- losses (per example; reduce with mean) ---------------------------------

/// -sum_k y_k log softmax(logits)_k per row. logits [B, K], target [B, K].
inline Var softmax_cross_entropy_rows(Var logits, const Tensor& target) {
  const Tensor& x = logits.value();
  detail::check(x.rank() == 2 && target.shape() == x.shape(), "softmax_cross_entropy",
                "logits and target must both be [B, K]");
  const int rows = x.dim(0), k = x.dim(1);
  Tensor y({rows});
  for (int r = 0; r < rows; ++r) {
    double lse = detail::row_logsumexp(x.data() + r * k, k);
    double loss = 0.0;
    for (int c = 0; c < k; ++c) loss += target[r * k + c] * (lse - x[r * k + c]);
    y[r] = loss;
  }
  const int ia = logits.id();
  return logits.tape().record(std::move(y), logits.requires_grad(),
                              [ia, target, rows, k](Tape& t, int self) {
                                const Tensor& g = t.grad(self);
                                const Tensor& x = t.value(ia);
                                Tensor& gx = t.grad(ia);
                                for (int r = 0; r < rows; ++r) {
                                  double lse = detail::row_logsumexp(x.data() + r * k, k);
                                  double mass = 0.0;
                                  for (int c = 0; c < k; ++c) mass += target[r * k + c];
                                  for (int c = 0; c < k; ++c) {
                                    double p = std::exp(x[r * k + c] - lse);
                                    gx[r * k + c] += g[r] * (mass * p - target[r * k + c]);
                                  }
                                }
                              });
}

inline Var softmax_cross_entropy(Var logits, const Tensor& target) {
  return mean(softmax_cross_entropy_rows(logits, target));
}

inline constexpr double kProbabilityFloor = 1e-12;

/// -sum [x log p + (1 - x) log(1 - p)] per row; p is clamped away from 0 and 1.
inline Var bernoulli_nll_rows(Var probs, const Tensor& target) {
  const Tensor& p = probs.value();
  detail::check(p.shape() == target.shape(), "bernoulli_nll", "shape mismatch");
  const int rows = detail::rows_of(p), cols = detail::cols_of(p);
  Tensor y({rows});
  for (int r = 0; r < rows; ++r) {
    double loss = 0.0;
    for (int c = 0; c < cols; ++c) {
      double q = std::clamp(p[r * cols + c], kProbabilityFloor, 1.0 - kProbabilityFloor);
      double x = target[r * cols + c];
      loss -= x * std::log(q) + (1.0 - x) * std::log(1.0 - q);
    }
    y[r] = loss;
  }
  const int ia = probs.id();
  return probs.tape().record(std::move(y), probs.requires_grad(),
                             [ia, target, rows, cols](Tape& t, int self) {
                               const Tensor& g = t.grad(self);
                               const Tensor& p = t.value(ia);
                               Tensor& gp = t.grad(ia);
                               for (int r = 0; r < rows; ++r) {
                                 for (int c = 0; c < cols; ++c) {
                                   double q = std::clamp(p[r * cols + c], kProbabilityFloor,
                                                         1.0 - kProbabilityFloor);
                                   double x = target[r * cols + c];
                                   gp[r * cols + c] += g[r] * (-x / q + (1.0 - x) / (1.0 - q));
                                 }
                               }
                             });
}

/// Same loss as bernoulli_nll_rows(sigmoid(logits), target), computed stably.
inline Var bernoulli_nll_logits_rows(Var logits, const Tensor& target) {
  const Tensor& l = logits.value();
  detail::check(l.shape() == target.shape(), "bernoulli_nll_logits", "shape mismatch");
  const int rows = detail::rows_of(l), cols = detail::cols_of(l);
  Tensor y({rows});
  for (int r = 0; r < rows; ++r) {
    double loss = 0.0;
    for (int c = 0; c < cols; ++c) {
      double v = l[r * cols + c];
      loss += std::max(v, 0.0) - target[r * cols + c] * v + std::log1p(std::exp(-std::abs(v)));
    }
    y[r] = loss;
  }
  const int ia = logits.id();
  return logits.tape().record(std::move(y), logits.requires_grad(),
                              [ia, target, rows, cols](Tape& t, int self) {
                                const Tensor& g = t.grad(self);
                                const Tensor& l = t.value(ia);
                                Tensor& gl = t.grad(ia);
                                for (int r = 0; r < rows; ++r) {
                                  for (int c = 0; c < cols; ++c) {
                                    auto k = r * cols + c;
                                    gl[k] += g[r] * (sigmoid_value(l[k]) - target[k]);
                                  }
                                }
                              });
}

/// KL(N(mu, exp(logvar)) || N(0, I)) per row.
inline Var kl_diag_gaussian_rows(Var mu, Var logvar) {
  auto& tape = detail::same_tape(mu, logvar, "kl_diag_gaussian");
  const Tensor& m = mu.value();
  const Tensor& lv = logvar.value();
  detail::check(m.shape() == lv.shape(), "kl_diag_gaussian", "shape mismatch");
  const int rows = detail::rows_of(m), cols = detail::cols_of(m);
  Tensor y({rows});
  for (int r = 0; r < rows; ++r) {
    double kl = 0.0;
    for (int c = 0; c < cols; ++c) {
      auto k = r * cols + c;
      kl += -0.5 * (1.0 + lv[k] - m[k] * m[k] - std::exp(lv[k]));
    }
    y[r] = kl;
  }
  const int im = mu.id(), il = logvar.id();
  return tape.record(std::move(y), mu.requires_grad() || logvar.requires_grad(),
                     [im, il, rows, cols](Tape& t, int self) {
                       const Tensor& g = t.grad(self);
                       if (t.requires_grad(im)) {
                         const Tensor& m = t.value(im);
                         Tensor& gm = t.grad(im);
                         for (int r = 0; r < rows; ++r) {
                           for (int c = 0; c < cols; ++c) gm[r * cols + c] += g[r] * m[r * cols + c];
                         }
                       }
                       if (t.requires_grad(il)) {
                         const Tensor& lv = t.value(il);
                         Tensor& gl = t.grad(il);
                         for (int r = 0; r < rows; ++r) {
                           for (int c = 0; c < cols; ++c) {
                             gl[r * cols + c] += g[r] * 0.5 * (std::exp(lv[r * cols + c]) - 1.0);
                           }
                         }
                       }
                     });
}

/// 0.5 * ||a - b||^2 per row (unit-variance Gaussian NLL without constant).
inline Var half_squared_error_rows(Var a, Var b) {
  auto d = sub(a, b);
  return scale(sum_rows(mul(d, d)), 0.5);
}

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

/// z = mu + exp(logvar / 2) * eps, with logvar clamped to [-10, 10].
inline Var reparameterize(Var mu, Var logvar, const Tensor& eps) {
  auto& tape = mu.tape();
  detail::check(eps.shape() == mu.shape(), "reparameterize", "noise shape mismatch");
  auto sigma = exp(scale(clamp(logvar, kLogVarMin, kLogVarMax), 0.5));
  return add(mu, mul(sigma, tape.constant(eps)));
}

}  // namespace rsft::nn

#endif  // RSFT_NN_OPS_HPP_
