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

#include <cmath>
#include <limits>

#include "hydra/kernels.hpp"

namespace hydra::kernels {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

double sum(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double max(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

bool all_finite(const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i])) return false;
  }
  return true;
}

void exp_(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

void sigmoid(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    // Branch keeps exp's argument non-positive.
    if (x[i] >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-x[i]));
    } else {
      const double e = std::exp(x[i]);
      out[i] = e / (1.0 + e);
    }
  }
}

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double beta, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    if (beta == 0.0) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    } else if (beta != 1.0) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta == Trans::kNo ? a[i * lda + p] : a[p * lda + i];
      const double s = alpha * av;
      if (tb == Trans::kNo) {
        const double* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += s * b[j * ldb + p];
      }
    }
  }
}

void rows_dot(const double* base, std::size_t stride, std::size_t rows,
              const double* q, std::size_t len, double* out) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot(base + r * stride, q, len);
}

void rows_axpy(const double* base, std::size_t stride, std::size_t rows,
               const double* w, double* out, std::size_t len) {
  for (std::size_t r = 0; r < rows; ++r) axpy(w[r], base + r * stride, out, len);
}

void scan_forward(const double* u, const double* a, const double* h0, double* h,
                  std::size_t len, std::size_t d) {
  for (std::size_t t = 0; t < len; ++t) {
    const double* prev = t == 0 ? h0 : h + (t - 1) * d;
    const double* ut = u + t * d;
    double* ht = h + t * d;
    for (std::size_t j = 0; j < d; ++j) {
      ht[j] = a[j] * prev[j] + (1.0 - a[j]) * ut[j];
    }
  }
}

void scan_backward(const double* u, const double* a, const double* h0,
                   const double* h, double* dh, double* du, double* da,
                   double* dh0, std::size_t len, std::size_t d) {
  for (std::size_t t = len; t-- > 0;) {
    double* g = dh + t * d;
    const double* prev = t == 0 ? h0 : h + (t - 1) * d;
    const double* ut = u + t * d;
    double* dut = du + t * d;
    double* carry = t == 0 ? dh0 : dh + (t - 1) * d;
    for (std::size_t j = 0; j < d; ++j) {
      dut[j] += (1.0 - a[j]) * g[j];
      da[j] += g[j] * (prev[j] - ut[j]);
      carry[j] += a[j] * g[j];
    }
  }
}

}  // namespace

namespace detail {

const KernelTable& scalar_table() {
  static const KernelTable table{
      Isa::kScalar, dot,  axpy,     scale,    add,          mul,
      sum,          max,  all_finite, exp_,   sigmoid,      gemm,
      rows_dot,     rows_axpy,      scan_forward, scan_backward,
  };
  return table;
}

}  // namespace detail
}  // namespace hydra::kernels
