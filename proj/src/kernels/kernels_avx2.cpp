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

// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma
// and is only entered after dispatch has confirmed CPU support.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "hydra/kernels.hpp"

namespace hydra::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double alpha, double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) x[i] *= alpha;
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double max(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  if (n >= 4) {
    __m256d acc = _mm256_set1_pd(m);
    for (; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    m = std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
  }
  for (; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

bool all_finite(const double* x, std::size_t n) {
  // x - x is 0 for finite x and NaN for inf/NaN.
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    acc = _mm256_add_pd(acc, _mm256_sub_pd(v, v));
  }
  if (_mm256_movemask_pd(_mm256_cmp_pd(acc, acc, _CMP_UNORD_Q)) != 0) return false;
  for (; i < n; ++i) {
    if (!std::isfinite(x[i])) return false;
  }
  return true;
}

// exp on [-708, 709]: Cody-Waite reduction by ln2 and a degree-13 Taylor
// polynomial on |r| <= ln2/2. Lanes outside the range (or NaN) are
// reported through the return mask so callers can fall back to std::exp.
inline __m256d exp_core(__m256d x, int* bad_mask) {
  const __m256d lo = _mm256_set1_pd(-708.0);
  const __m256d hi = _mm256_set1_pd(709.0);
  const __m256d in_range = _mm256_and_pd(_mm256_cmp_pd(x, lo, _CMP_GE_OQ),
                                         _mm256_cmp_pd(x, hi, _CMP_LE_OQ));
  *bad_mask = (~_mm256_movemask_pd(in_range)) & 0xF;
  x = _mm256_blendv_pd(_mm256_setzero_pd(), x, in_range);

  const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
  const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
  r = _mm256_fnmadd_pd(n, ln2_lo, r);

  static constexpr double kInvFact[14] = {
      1.0,
      1.0,
      1.0 / 2.0,
      1.0 / 6.0,
      1.0 / 24.0,
      1.0 / 120.0,
      1.0 / 720.0,
      1.0 / 5040.0,
      1.0 / 40320.0,
      1.0 / 362880.0,
      1.0 / 3628800.0,
      1.0 / 39916800.0,
      1.0 / 479001600.0,
      1.0 / 6227020800.0,
  };
  __m256d p = _mm256_set1_pd(kInvFact[13]);
  for (int k = 12; k >= 0; --k) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kInvFact[k]));

  const __m128i ni = _mm256_cvtpd_epi32(n);
  __m256i bits = _mm256_cvtepi32_epi64(ni);
  bits = _mm256_add_epi64(bits, _mm256_set1_epi64x(1023));
  bits = _mm256_slli_epi64(bits, 52);
  return _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
}

void exp_(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    int bad = 0;
    alignas(32) double in[4];
    const __m256d xv = _mm256_loadu_pd(x + i);
    _mm256_store_pd(in, xv);
    const __m256d v = exp_core(xv, &bad);
    _mm256_storeu_pd(out + i, v);
    if (bad != 0) {
      for (int l = 0; l < 4; ++l) {
        if (bad & (1 << l)) out[i + l] = std::exp(in[l]);
      }
    }
  }
  for (; i < n; ++i) out[i] = std::exp(x[i]);
}

void sigmoid(const double* x, double* out, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d sign = _mm256_set1_pd(-0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    alignas(32) double in[4];
    _mm256_store_pd(in, v);
    const __m256d neg_abs = _mm256_or_pd(v, sign);
    int bad = 0;
    const __m256d e = exp_core(neg_abs, &bad);
    const __m256d inv = _mm256_div_pd(one, _mm256_add_pd(one, e));
    const __m256d pos = _mm256_cmp_pd(v, _mm256_setzero_pd(), _CMP_GE_OQ);
    _mm256_storeu_pd(out + i, _mm256_blendv_pd(_mm256_mul_pd(e, inv), inv, pos));
    if (bad != 0) {
      for (int l = 0; l < 4; ++l) {
        if (!(bad & (1 << l))) continue;
        const double xv = in[l];
        if (xv >= 0.0) {
          out[i + l] = 1.0 / (1.0 + std::exp(-xv));
        } else {
          const double ev = std::exp(xv);
          out[i + l] = ev / (1.0 + ev);
        }
      }
    }
  }
  for (; i < n; ++i) {
    if (x[i] >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-x[i]));
    } else {
      const double e = std::exp(x[i]);
      out[i] = e / (1.0 + e);
    }
  }
}

// ---------------------------------------------------------------------------
// GEMM: transposed operands are packed into thread-local scratch so the
// core only handles C += alpha * A * B with row-major A (m x k), B (k x n).

constexpr std::size_t kKc = 256;

template <int MR>
inline void micro_8(std::size_t kc, double alpha, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  __m256d acc[MR][2];
  for (int r = 0; r < MR; ++r) acc[r][0] = acc[r][1] = _mm256_setzero_pd();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
    for (int r = 0; r < MR; ++r) {
      const __m256d av = _mm256_broadcast_sd(a + r * lda + p);
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  const __m256d va = _mm256_set1_pd(alpha);
  for (int r = 0; r < MR; ++r) {
    double* cr = c + r * ldc;
    _mm256_storeu_pd(cr, _mm256_fmadd_pd(va, acc[r][0], _mm256_loadu_pd(cr)));
    _mm256_storeu_pd(cr + 4, _mm256_fmadd_pd(va, acc[r][1], _mm256_loadu_pd(cr + 4)));
  }
}

template <int MR>
inline void micro_4(std::size_t kc, double alpha, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  __m256d acc[MR];
  for (int r = 0; r < MR; ++r) acc[r] = _mm256_setzero_pd();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    for (int r = 0; r < MR; ++r) {
      acc[r] = _mm256_fmadd_pd(_mm256_broadcast_sd(a + r * lda + p), b0, acc[r]);
    }
  }
  const __m256d va = _mm256_set1_pd(alpha);
  for (int r = 0; r < MR; ++r) {
    double* cr = c + r * ldc;
    _mm256_storeu_pd(cr, _mm256_fmadd_pd(va, acc[r], _mm256_loadu_pd(cr)));
  }
}

template <int MR>
inline void micro_1(std::size_t kc, double alpha, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (int r = 0; r < MR; ++r) {
    double s = 0.0;
    for (std::size_t p = 0; p < kc; ++p) s += a[r * lda + p] * b[p * ldb];
    c[r * ldc] += alpha * s;
  }
}

template <int MR>
void row_panel(std::size_t n, std::size_t kc, double alpha, const double* a,
               std::size_t lda, const double* b, std::size_t ldb, double* c,
               std::size_t ldc) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) micro_8<MR>(kc, alpha, a, lda, b + j, ldb, c + j, ldc);
  for (; j + 4 <= n; j += 4) micro_4<MR>(kc, alpha, a, lda, b + j, ldb, c + j, ldc);
  for (; j < n; ++j) micro_1<MR>(kc, alpha, a, lda, b + j, ldb, c + j, ldc);
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, double alpha,
             const double* a, std::size_t lda, const double* b, std::size_t ldb,
             double* c, std::size_t ldc) {
  for (std::size_t p0 = 0; p0 < k; p0 += kKc) {
    const std::size_t kc = std::min(kKc, k - p0);
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      row_panel<4>(n, kc, alpha, a + i * lda + p0, lda, b + p0 * ldb, ldb, c + i * ldc, ldc);
    }
    for (; i < m; ++i) {
      row_panel<1>(n, kc, alpha, a + i * lda + p0, lda, b + p0 * ldb, ldb, c + i * ldc, ldc);
    }
  }
}

void transpose_into(const double* src, std::size_t rows, std::size_t cols,
                    std::size_t ld, std::vector<double>& dst) {
  dst.resize(rows * cols);
  constexpr std::size_t kB = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kB) {
    for (std::size_t c0 = 0; c0 < cols; c0 += kB) {
      const std::size_t r1 = std::min(rows, r0 + kB);
      const std::size_t c1 = std::min(cols, c0 + kB);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t cc = c0; cc < c1; ++cc) dst[cc * rows + r] = src[r * ld + cc];
      }
    }
  }
}

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double beta, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    if (beta == 0.0) {
      std::fill(crow, crow + n, 0.0);
    } else if (beta != 1.0) {
      scale(beta, crow, n);
    }
  }
  if (m == 0 || n == 0 || k == 0) return;
  thread_local std::vector<double> pack_a;
  thread_local std::vector<double> pack_b;
  const double* ap = a;
  std::size_t lda_eff = lda;
  if (ta == Trans::kYes) {
    transpose_into(a, k, m, lda, pack_a);  // stored k x m -> m x k
    ap = pack_a.data();
    lda_eff = k;
  }
  const double* bp = b;
  std::size_t ldb_eff = ldb;
  if (tb == Trans::kYes) {
    transpose_into(b, n, k, ldb, pack_b);  // stored n x k -> k x n
    bp = pack_b.data();
    ldb_eff = n;
  }
  gemm_nn(m, n, k, alpha, ap, lda_eff, bp, ldb_eff, c, ldc);
}

void rows_dot(const double* base, std::size_t stride, std::size_t rows,
              const double* q, std::size_t len, double* out) {
  std::size_t r = 0;
  const std::size_t vec_len = len & ~std::size_t{3};
  for (; r + 4 <= rows; r += 4) {
    const double* k0 = base + r * stride;
    const double* k1 = k0 + stride;
    const double* k2 = k1 + stride;
    const double* k3 = k2 + stride;
    __m256d a0 = _mm256_setzero_pd();
    __m256d a1 = _mm256_setzero_pd();
    __m256d a2 = _mm256_setzero_pd();
    __m256d a3 = _mm256_setzero_pd();
    for (std::size_t j = 0; j < vec_len; j += 4) {
      const __m256d qv = _mm256_loadu_pd(q + j);
      a0 = _mm256_fmadd_pd(_mm256_loadu_pd(k0 + j), qv, a0);
      a1 = _mm256_fmadd_pd(_mm256_loadu_pd(k1 + j), qv, a1);
      a2 = _mm256_fmadd_pd(_mm256_loadu_pd(k2 + j), qv, a2);
      a3 = _mm256_fmadd_pd(_mm256_loadu_pd(k3 + j), qv, a3);
    }
    // Transpose-and-add reduction of four accumulators into one vector.
    const __m256d s01 = _mm256_hadd_pd(a0, a1);
    const __m256d s23 = _mm256_hadd_pd(a2, a3);
    const __m256d lo = _mm256_permute2f128_pd(s01, s23, 0x20);
    const __m256d hi = _mm256_permute2f128_pd(s01, s23, 0x31);
    __m256d s = _mm256_add_pd(lo, hi);
    if (vec_len != len) {
      alignas(32) double tail[4] = {0.0, 0.0, 0.0, 0.0};
      for (std::size_t j = vec_len; j < len; ++j) {
        tail[0] += k0[j] * q[j];
        tail[1] += k1[j] * q[j];
        tail[2] += k2[j] * q[j];
        tail[3] += k3[j] * q[j];
      }
      s = _mm256_add_pd(s, _mm256_load_pd(tail));
    }
    _mm256_storeu_pd(out + r, s);
  }
  for (; r < rows; ++r) out[r] = dot(base + r * stride, q, len);
}

void rows_axpy(const double* base, std::size_t stride, std::size_t rows,
               const double* w, double* out, std::size_t len) {
  std::size_t j0 = 0;
  for (; j0 + 16 <= len; j0 += 16) {
    __m256d a0 = _mm256_loadu_pd(out + j0);
    __m256d a1 = _mm256_loadu_pd(out + j0 + 4);
    __m256d a2 = _mm256_loadu_pd(out + j0 + 8);
    __m256d a3 = _mm256_loadu_pd(out + j0 + 12);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* v = base + r * stride + j0;
      const __m256d wr = _mm256_broadcast_sd(w + r);
      a0 = _mm256_fmadd_pd(wr, _mm256_loadu_pd(v), a0);
      a1 = _mm256_fmadd_pd(wr, _mm256_loadu_pd(v + 4), a1);
      a2 = _mm256_fmadd_pd(wr, _mm256_loadu_pd(v + 8), a2);
      a3 = _mm256_fmadd_pd(wr, _mm256_loadu_pd(v + 12), a3);
    }
    _mm256_storeu_pd(out + j0, a0);
    _mm256_storeu_pd(out + j0 + 4, a1);
    _mm256_storeu_pd(out + j0 + 8, a2);
    _mm256_storeu_pd(out + j0 + 12, a3);
  }
  for (; j0 + 4 <= len; j0 += 4) {
    __m256d a0 = _mm256_loadu_pd(out + j0);
    for (std::size_t r = 0; r < rows; ++r) {
      a0 = _mm256_fmadd_pd(_mm256_broadcast_sd(w + r), _mm256_loadu_pd(base + r * stride + j0), a0);
    }
    _mm256_storeu_pd(out + j0, a0);
  }
  for (; j0 < len; ++j0) {
    double s = out[j0];
    for (std::size_t r = 0; r < rows; ++r) s += w[r] * base[r * stride + j0];
    out[j0] = s;
  }
}

void scan_forward(const double* u, const double* a, const double* h0, double* h,
                  std::size_t len, std::size_t d) {
  const __m256d one = _mm256_set1_pd(1.0);
  for (std::size_t t = 0; t < len; ++t) {
    const double* prev = t == 0 ? h0 : h + (t - 1) * d;
    const double* ut = u + t * d;
    double* ht = h + t * d;
    std::size_t j = 0;
    for (; j + 4 <= d; j += 4) {
      const __m256d av = _mm256_loadu_pd(a + j);
      const __m256d oma = _mm256_sub_pd(one, av);
      const __m256d in = _mm256_mul_pd(oma, _mm256_loadu_pd(ut + j));
      _mm256_storeu_pd(ht + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(prev + j), in));
    }
    for (; j < d; ++j) ht[j] = a[j] * prev[j] + (1.0 - a[j]) * ut[j];
  }
}

void scan_backward(const double* u, const double* a, const double* h0,
                   const double* h, double* dh, double* du, double* da,
                   double* dh0, std::size_t len, std::size_t d) {
  const __m256d one = _mm256_set1_pd(1.0);
  for (std::size_t t = len; t-- > 0;) {
    double* g = dh + t * d;
    const double* prev = t == 0 ? h0 : h + (t - 1) * d;
    const double* ut = u + t * d;
    double* dut = du + t * d;
    double* carry = t == 0 ? dh0 : dh + (t - 1) * d;
    std::size_t j = 0;
    for (; j + 4 <= d; j += 4) {
      const __m256d gv = _mm256_loadu_pd(g + j);
      const __m256d av = _mm256_loadu_pd(a + j);
      const __m256d uv = _mm256_loadu_pd(ut + j);
      _mm256_storeu_pd(dut + j, _mm256_fmadd_pd(_mm256_sub_pd(one, av), gv, _mm256_loadu_pd(dut + j)));
      _mm256_storeu_pd(da + j, _mm256_fmadd_pd(gv, _mm256_sub_pd(_mm256_loadu_pd(prev + j), uv),
                                               _mm256_loadu_pd(da + j)));
      _mm256_storeu_pd(carry + j, _mm256_fmadd_pd(av, gv, _mm256_loadu_pd(carry + j)));
    }
    for (; j < d; ++j) {
      dut[j] += (1.0 - a[j]) * g[j];
      da[j] += g[j] * (prev[j] - ut[j]);
      carry[j] += a[j] * g[j];
    }
  }
}

}  // namespace

namespace detail {

const KernelTable* avx2_table() {
  static const KernelTable table{
      Isa::kAvx2, dot,  axpy,     scale,    add,          mul,
      sum,        max,  all_finite, exp_,   sigmoid,      gemm,
      rows_dot,   rows_axpy,      scan_forward, scan_backward,
  };
  return &table;
}

}  // namespace detail
}  // namespace hydra::kernels
