// Copyright 2026 The Hydra Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hydra/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hydra/errors.hpp"
#include "hydra/kernels.hpp"

namespace hydra::ops {
namespace {

using kernels::Trans;

const kernels::KernelTable& K() { return kernels::active(); }

// Period of b inside a under trailing-dim broadcasting.
std::size_t broadcast_period(const Tensor& a, const Tensor& b, const char* op) {
  if (b.numel() == 1) return 1;
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (bs.size() <= as.size() && std::equal(bs.rbegin(), bs.rend(), as.rbegin())) {
    return b.numel();
  }
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(bs) + " onto " +
                   shape_str(as));
}

// Sums consecutive blocks of `period` from src into dst (length period).
void reduce_blocks(const double* src, std::size_t n, std::size_t period, double* dst) {
  for (std::size_t off = 0; off < n; off += period) K().axpy(1.0, src + off, dst, period);
}

enum class Binary { kAdd, kSub, kMul };

Tensor binary(Binary kind, const Tensor& a, const Tensor& b, const char* name) {
  const std::size_t period = broadcast_period(a, b, name);
  const std::size_t n = a.numel();
  Tensor out = Tensor::uninit(a.shape());
  const double* ap = a.ptr();
  const double* bp = b.ptr();
  double* op = out.ptr();
  for (std::size_t off = 0; off < n; off += period) {
    switch (kind) {
      case Binary::kAdd:
        if (period == 1) {
          for (std::size_t i = 0; i < n; ++i) op[i] = ap[i] + bp[0];
          off = n;
        } else {
          K().add(ap + off, bp, op + off, period);
        }
        break;
      case Binary::kSub:
        if (period == 1) {
          for (std::size_t i = 0; i < n; ++i) op[i] = ap[i] - bp[0];
          off = n;
        } else {
          for (std::size_t i = 0; i < period; ++i) op[off + i] = ap[off + i] - bp[i];
        }
        break;
      case Binary::kMul:
        if (period == 1) {
          for (std::size_t i = 0; i < n; ++i) op[i] = ap[i] * bp[0];
          off = n;
        } else {
          K().mul(ap + off, bp, op + off, period);
        }
        break;
    }
  }
  if (kind == Binary::kMul) detail::check_finite(out, name);
  if (detail::should_record({&a, &b})) {
    detail::record({a, b}, out, [a, b, out, kind, period, n]() mutable {
      const double* g = out.grad().data();
      if (a.requires_grad()) {
        double* ga = a.ensure_grad().data();
        if (kind == Binary::kMul) {
          if (period == 1) {
            K().axpy(b.ptr()[0], g, ga, n);
          } else {
            for (std::size_t off = 0; off < n; off += period) {
              for (std::size_t i = 0; i < period; ++i) ga[off + i] += g[off + i] * b.ptr()[i];
            }
          }
        } else {
          K().axpy(1.0, g, ga, n);
        }
      }
      if (b.requires_grad()) {
        double* gb = b.ensure_grad().data();
        if (kind == Binary::kMul) {
          if (period == 1) {
            gb[0] += K().dot(g, a.ptr(), n);
          } else {
            for (std::size_t off = 0; off < n; off += period) {
              for (std::size_t i = 0; i < period; ++i) gb[i] += g[off + i] * a.ptr()[off + i];
            }
          }
        } else {
          const double sign = kind == Binary::kSub ? -1.0 : 1.0;
          if (period == 1) {
            gb[0] += sign * K().sum(g, n);
          } else {
            Buffer tmp(period, 0.0);
            reduce_blocks(g, n, period, tmp.data());
            K().axpy(sign, tmp.data(), gb, period);
          }
        }
      }
    });
  }
  return out;
}

template <class Forward, class Backward>
Tensor unary(const Tensor& x, const char* name, Forward fwd, Backward bwd) {
  Tensor out = Tensor::uninit(x.shape());
  fwd(x.ptr(), out.ptr(), x.numel());
  detail::check_finite(out, name);
  if (detail::should_record({&x})) {
    detail::record({x}, out, [x, out, bwd]() mutable {
      bwd(x.ptr(), out.ptr(), out.grad().data(), x.ensure_grad().data(), x.numel());
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(Binary::kAdd, a, b, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(Binary::kSub, a, b, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Binary::kMul, a, b, "mul"); }

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid", [](const double* in, double* out, std::size_t n) { K().sigmoid(in, out, n); },
      [](const double*, const double* y, const double* g, double* gx, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
      });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh",
      [](const double* in, double* out, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
      },
      [](const double*, const double* y, const double* g, double* gx, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
      });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](const double* in, double* out, std::size_t n) { K().exp(in, out, n); },
      [](const double*, const double* y, const double* g, double* gx, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i];
      });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw NumericError("log: argument must be positive, got " + std::to_string(v));
  }
  return unary(
      x, "log",
      [](const double* in, double* out, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = std::log(in[i]);
      },
      [](const double* xin, const double*, const double* g, double* gx, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] / xin[i];
      });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu",
      [](const double* in, double* out, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
      },
      [](const double* xin, const double*, const double* g, double* gx, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) gx[i] += xin[i] > 0.0 ? g[i] : 0.0;
      });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, "silu",
      [](const double* in, double* out, std::size_t n) {
        K().sigmoid(in, out, n);
        for (std::size_t i = 0; i < n; ++i) out[i] *= in[i];
      },
      [](const double* xin, const double*, const double* g, double* gx, std::size_t n) {
        Buffer s(n);
        K().sigmoid(xin, s.data(), n);
        for (std::size_t i = 0; i < n; ++i) {
          gx[i] += g[i] * s[i] * (1.0 + xin[i] * (1.0 - s[i]));
        }
      });
}

Tensor elementwise(OpKind kind, const Tensor& a, const std::optional<Tensor>& b) {
  auto need_b = [&]() -> const Tensor& {
    if (!b.has_value() || !b->defined()) throw UsageError("elementwise: binary op needs b");
    return *b;
  };
  switch (kind) {
    case OpKind::kAdd: return add(a, need_b());
    case OpKind::kSub: return sub(a, need_b());
    case OpKind::kMul: return mul(a, need_b());
    case OpKind::kSigmoid: return sigmoid(a);
    case OpKind::kTanh: return tanh(a);
    case OpKind::kExp: return exp(a);
    case OpKind::kLog: return log(a);
    case OpKind::kRelu: return relu(a);
    case OpKind::kSilu: return silu(a);
  }
  throw UsageError("elementwise: unknown op kind");
}

Tensor scale(const Tensor& x, double alpha) {
  Tensor out = x.clone();
  K().scale(alpha, out.ptr(), out.numel());
  detail::check_finite(out, "scale");
  if (detail::should_record({&x})) {
    detail::record({x}, out, [x, out, alpha]() mutable {
      K().axpy(alpha, out.grad().data(), x.ensure_grad().data(), x.numel());
    });
  }
  return out;
}

Tensor one_minus(const Tensor& x) {
  Tensor out = Tensor::uninit(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out.ptr()[i] = 1.0 - x.ptr()[i];
  if (detail::should_record({&x})) {
    detail::record({x}, out, [x, out]() mutable {
      K().axpy(-1.0, out.grad().data(), x.ensure_grad().data(), x.numel());
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: rank-2 operands required, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t kb = transpose_b ? b.dim(1) : b.dim(0);
  const std::size_t n = transpose_b ? b.dim(0) : b.dim(1);
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ: " + shape_str(a.shape()) +
                     (transpose_b ? " * T" : " * ") + shape_str(b.shape()));
  }
  Tensor out = Tensor::uninit({m, n});
  const Trans tb = transpose_b ? Trans::kYes : Trans::kNo;
  K().gemm(Trans::kNo, tb, m, n, k, 1.0, a.ptr(), k, b.ptr(), b.dim(1), 0.0, out.ptr(), n);
  detail::check_finite(out, "matmul");
  if (detail::should_record({&a, &b})) {
    detail::record({a, b}, out, [a, b, out, m, n, k, transpose_b]() mutable {
      const double* g = out.grad().data();
      if (a.requires_grad()) {
        // dA = dC * B^T   (or dC * B when b is stored transposed)
        K().gemm(Trans::kNo, transpose_b ? Trans::kNo : Trans::kYes, m, k, n, 1.0, g, n,
                 b.ptr(), b.dim(1), 1.0, a.ensure_grad().data(), k);
      }
      if (b.requires_grad()) {
        if (transpose_b) {
          // dB [n x k] = dC^T * A
          K().gemm(Trans::kYes, Trans::kNo, n, k, m, 1.0, g, n, a.ptr(), k, 1.0,
                   b.ensure_grad().data(), k);
        } else {
          // dB [k x n] = A^T * dC
          K().gemm(Trans::kYes, Trans::kNo, k, n, m, 1.0, a.ptr(), k, g, n, 1.0,
                   b.ensure_grad().data(), n);
        }
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  Tensor y = matmul(x, w);
  return bias.defined() ? add(y, bias) : y;
}

Tensor softmax(const Tensor& x, int axis) {
  const int rank = static_cast<int>(x.rank());
  const int ax = axis < 0 ? rank + axis : axis;
  if (ax < 0 || ax >= rank) throw ShapeError("softmax: axis out of range");
  std::size_t outer = 1, inner = 1;
  const std::size_t n = x.dim(static_cast<std::size_t>(ax));
  for (int i = 0; i < ax; ++i) outer *= x.dim(static_cast<std::size_t>(i));
  for (int i = ax + 1; i < rank; ++i) inner *= x.dim(static_cast<std::size_t>(i));

  Tensor out = Tensor::uninit(x.shape());
  const double* xp = x.ptr();
  double* yp = out.ptr();
  if (inner == 1) {
    for (std::size_t o = 0; o < outer; ++o) {
      const double* row = xp + o * n;
      double* yrow = yp + o * n;
      const double mx = K().max(row, n);
      for (std::size_t i = 0; i < n; ++i) yrow[i] = row[i] - mx;
      K().exp(yrow, yrow, n);
      K().scale(1.0 / K().sum(yrow, n), yrow, n);
    }
  } else {
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double mx = xp[base];
        for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, xp[base + i * inner]);
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          yp[base + i * inner] = std::exp(xp[base + i * inner] - mx);
          z += yp[base + i * inner];
        }
        for (std::size_t i = 0; i < n; ++i) yp[base + i * inner] /= z;
      }
    }
  }
  if (detail::should_record({&x})) {
    detail::record({x}, out, [x, out, outer, inner, n]() mutable {
      const double* y = out.ptr();
      const double* g = out.grad().data();
      double* gx = x.ensure_grad().data();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          double dotp = 0.0;
          for (std::size_t i = 0; i < n; ++i) dotp += g[base + i * inner] * y[base + i * inner];
          for (std::size_t i = 0; i < n; ++i) {
            gx[base + i * inner] += y[base + i * inner] * (g[base + i * inner] - dotp);
          }
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (!(eps > 0.0)) throw UsageError("layer_norm: eps must be positive");
  const std::size_t d = x.shape().back();
  if (gain.numel() != d || bias.numel() != d) {
    throw ShapeError("layer_norm: gain/bias must have the last-axis extent " + std::to_string(d));
  }
  const std::size_t rows = x.numel() / d;
  Tensor out = Tensor::uninit(x.shape());
  auto xhat = std::make_shared<Buffer>(x.numel());
  auto rstd = std::make_shared<Buffer>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.ptr() + r * d;
    const double mu = K().sum(xr, d) / static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    double* xh = xhat->data() + r * d;
    double* yr = out.ptr() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      xh[j] = (xr[j] - mu) * rs;
      yr[j] = xh[j] * gain.ptr()[j] + bias.ptr()[j];
    }
  }
  if (detail::should_record({&x, &gain, &bias})) {
    detail::record({x, gain, bias}, out, [x, gain, bias, out, xhat, rstd, rows, d]() mutable {
      const double* g = out.grad().data();
      if (gain.requires_grad()) {
        double* gg = gain.ensure_grad().data();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * (*xhat)[r * d + j];
        }
      }
      if (bias.requires_grad()) reduce_blocks(g, rows * d, d, bias.ensure_grad().data());
      if (x.requires_grad()) {
        double* gx = x.ensure_grad().data();
        Buffer dxh(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* xh = xhat->data() + r * d;
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            dxh[j] = g[r * d + j] * gain.ptr()[j];
            m1 += dxh[j];
            m2 += dxh[j] * xh[j];
          }
          m1 /= static_cast<double>(d);
          m2 /= static_cast<double>(d);
          const double rs = (*rstd)[r];
          for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += rs * (dxh[j] - m1 - xh[j] * m2);
        }
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = Tensor::scalar(K().sum(x.ptr(), x.numel()));
  if (detail::should_record({&x})) {
    detail::record({x}, out, [x, out]() mutable {
      const double g = out.grad()[0];
      Buffer& gx = x.ensure_grad();
      for (double& v : gx) v += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor out = Tensor::from(std::move(shape), x.data());
  if (detail::should_record({&x})) {
    detail::record({x}, out, [x, out]() mutable {
      K().axpy(1.0, out.grad().data(), x.ensure_grad().data(), x.numel());
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  const std::size_t n = x.dim(0);
  const std::size_t width = x.numel() / n;
  Shape shape = x.shape();
  shape[0] = rows.size();
  if (rows.empty()) throw ShapeError("gather_rows: empty row list");
  Tensor out = Tensor::uninit(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(x.ptr() + rows[i] * width, width, out.ptr() + i * width);
  }
  if (detail::should_record({&x})) {
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    detail::record({x}, out, [x, out, idx = std::move(idx), width]() mutable {
      const double* g = out.grad().data();
      double* gx = x.ensure_grad().data();
      for (std::size_t i = 0; i < idx.size(); ++i) K().axpy(1.0, g + i * width, gx + idx[i] * width, width);
    });
  }
  return out;
}

Tensor index_add_rows(std::size_t n_rows, const Tensor& src, std::span<const std::size_t> rows) {
  const std::size_t k = src.dim(0);
  if (rows.size() != k) throw ShapeError("index_add_rows: one index per source row required");
  const std::size_t width = src.numel() / k;
  Shape shape = src.shape();
  shape[0] = n_rows;
  Tensor out = Tensor::zeros(shape);
  for (std::size_t i = 0; i < k; ++i) {
    if (rows[i] >= n_rows) throw ShapeError("index_add_rows: row index out of range");
    K().axpy(1.0, src.ptr() + i * width, out.ptr() + rows[i] * width, width);
  }
  if (detail::should_record({&src})) {
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    detail::record({src}, out, [src, out, idx = std::move(idx), width]() mutable {
      const double* g = out.grad().data();
      double* gs = src.ensure_grad().data();
      for (std::size_t i = 0; i < idx.size(); ++i) K().axpy(1.0, g + idx[i] * width, gs + i * width, width);
    });
  }
  return out;
}

Tensor scale_rows(const Tensor& x, const Tensor& w) {
  const std::size_t n = x.dim(0);
  if (w.numel() != n) {
    throw ShapeError("scale_rows: weights " + shape_str(w.shape()) + " for rows of " +
                     shape_str(x.shape()));
  }
  const std::size_t width = x.numel() / n;
  Tensor out = Tensor::uninit(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = w.ptr()[i];
    const double* xr = x.ptr() + i * width;
    double* yr = out.ptr() + i * width;
    for (std::size_t j = 0; j < width; ++j) yr[j] = wi * xr[j];
  }
  if (detail::should_record({&x, &w})) {
    detail::record({x, w}, out, [x, w, out, n, width]() mutable {
      const double* g = out.grad().data();
      if (x.requires_grad()) {
        double* gx = x.ensure_grad().data();
        for (std::size_t i = 0; i < n; ++i) K().axpy(w.ptr()[i], g + i * width, gx + i * width, width);
      }
      if (w.requires_grad()) {
        double* gw = w.ensure_grad().data();
        for (std::size_t i = 0; i < n; ++i) gw[i] += K().dot(g + i * width, x.ptr() + i * width, width);
      }
    });
  }
  return out;
}

Tensor gather_cols(const Tensor& x, std::span<const std::size_t> cols, std::size_t k) {
  if (x.rank() != 2) throw ShapeError("gather_cols: rank-2 input required");
  const std::size_t n = x.dim(0);
  const std::size_t m = x.dim(1);
  if (cols.size() != n * k) throw ShapeError("gather_cols: need n*k column indices");
  Tensor out = Tensor::uninit({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (cols[i * k + j] >= m) throw ShapeError("gather_cols: column index out of range");
      out.ptr()[i * k + j] = x.ptr()[i * m + cols[i * k + j]];
    }
  }
  if (detail::should_record({&x})) {
    std::vector<std::size_t> idx(cols.begin(), cols.end());
    detail::record({x}, out, [x, out, idx = std::move(idx), n, m, k]() mutable {
      const double* g = out.grad().data();
      double* gx = x.ensure_grad().data();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) gx[i * m + idx[i * k + j]] += g[i * k + j];
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin >= end || end > x.dim(0)) throw ShapeError("slice_rows: bad range");
  const std::size_t width = x.numel() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = end - begin;
  Tensor out = Tensor::from(shape, x.data().subspan(begin * width, (end - begin) * width));
  if (detail::should_record({&x})) {
    detail::record({x}, out, [x, out, begin, width]() mutable {
      K().axpy(1.0, out.grad().data(), x.ensure_grad().data() + begin * width, out.numel());
    });
  }
  (void)width;
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  Shape shape = parts.front().shape();
  const std::size_t width = parts.front().numel() / shape[0];
  std::size_t rows = 0;
  for (const Tensor& p : parts) {
    if (p.numel() / p.dim(0) != width || p.rank() != shape.size()) {
      throw ShapeError("concat_rows: trailing shapes differ");
    }
    rows += p.dim(0);
  }
  shape[0] = rows;
  Tensor out = Tensor::uninit(shape);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    std::copy_n(p.ptr(), p.numel(), out.ptr() + off);
    off += p.numel();
  }
  if (detail::should_record(parts)) {
    detail::record(parts, out, [parts, out]() mutable {
      const double* g = out.grad().data();
      std::size_t o = 0;
      for (const Tensor& p : parts) {
        if (p.requires_grad()) K().axpy(1.0, g + o, p.ensure_grad().data(), p.numel());
        o += p.numel();
      }
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() != 2 || begin >= end || end > x.dim(1)) throw ShapeError("slice_cols: bad range");
  const std::size_t n = x.dim(0);
  const std::size_t m = x.dim(1);
  const std::size_t w = end - begin;
  Tensor out = Tensor::uninit({n, w});
  for (std::size_t i = 0; i < n; ++i) std::copy_n(x.ptr() + i * m + begin, w, out.ptr() + i * w);
  if (detail::should_record({&x})) {
    detail::record({x}, out, [x, out, n, m, w, begin]() mutable {
      const double* g = out.grad().data();
      double* gx = x.ensure_grad().data();
      for (std::size_t i = 0; i < n; ++i) K().axpy(1.0, g + i * w, gx + i * m + begin, w);
    });
  }
  return out;
}

Tensor chunk_mean(const Tensor& x, std::size_t chunk) {
  if (chunk == 0) throw UsageError("chunk_mean: chunk size must be >= 1");
  if (x.rank() != 2) throw ShapeError("chunk_mean: rank-2 input required");
  const std::size_t len = x.dim(0);
  const std::size_t d = x.dim(1);
  const std::size_t n_chunks = (len + chunk - 1) / chunk;
  Tensor out = Tensor::zeros({n_chunks, d});
  for (std::size_t c = 0; c < n_chunks; ++c) {
    const std::size_t lo = c * chunk;
    const std::size_t hi = std::min(len, lo + chunk);
    double* oc = out.ptr() + c * d;
    for (std::size_t t = lo; t < hi; ++t) K().axpy(1.0, x.ptr() + t * d, oc, d);
    K().scale(1.0 / static_cast<double>(hi - lo), oc, d);
  }
  if (detail::should_record({&x})) {
    detail::record({x}, out, [x, out, chunk, len, d, n_chunks]() mutable {
      const double* g = out.grad().data();
      double* gx = x.ensure_grad().data();
      for (std::size_t c = 0; c < n_chunks; ++c) {
        const std::size_t lo = c * chunk;
        const std::size_t hi = std::min(len, lo + chunk);
        const double inv = 1.0 / static_cast<double>(hi - lo);
        for (std::size_t t = lo; t < hi; ++t) K().axpy(inv, g + c * d, gx + t * d, d);
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [n x V]");
  const std::size_t n = logits.dim(0);
  const std::size_t vocab = logits.dim(1);
  if (targets.size() != n) throw ShapeError("cross_entropy: one target per logits row");
  std::size_t count = 0;
  for (std::int64_t t : targets) {
    if (t < 0) continue;
    if (static_cast<std::size_t>(t) >= vocab) throw InputError("cross_entropy: target out of vocab");
    ++count;
  }
  if (count == 0) throw UsageError("cross_entropy: empty supervision mask");
  auto probs = std::make_shared<Buffer>(count * vocab);
  std::vector<std::size_t> rows;
  rows.reserve(count);
  double total = 0.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] < 0) continue;
    const double* row = logits.ptr() + i * vocab;
    double* p = probs->data() + k * vocab;
    const double mx = K().max(row, vocab);
    for (std::size_t j = 0; j < vocab; ++j) p[j] = row[j] - mx;
    K().exp(p, p, vocab);
    const double z = K().sum(p, vocab);
    total += std::log(z) + mx - row[targets[i]];
    K().scale(1.0 / z, p, vocab);
    rows.push_back(i);
    ++k;
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(count));
  if (detail::should_record({&logits})) {
    std::vector<std::int64_t> tg(targets.begin(), targets.end());
    detail::record({logits}, out, [logits, out, probs, rows = std::move(rows), tg = std::move(tg),
                                   vocab, count]() mutable {
      const double g = out.grad()[0] / static_cast<double>(count);
      double* gl = logits.ensure_grad().data();
      for (std::size_t r = 0; r < rows.size(); ++r) {
        double* gr = gl + rows[r] * vocab;
        K().axpy(g, probs->data() + r * vocab, gr, vocab);
        gr[tg[rows[r]]] -= g;
      }
    });
  }
  return out;
}

}  // namespace hydra::ops
