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

#pragma once

// Data-parallel float64 kernels behind a runtime-selected dispatch table.
//
// Every kernel has a scalar reference implementation (kernels_scalar.cpp)
// and an AVX2+FMA variant (kernels_avx2.cpp, compiled with -mavx2 -mfma).
// The active table is chosen once from CPUID; HYDRA_KERNELS=scalar in the
// environment or set_isa() forces the reference path. Tests compare the
// two tables directly through table_for().

#include <cstddef>
#include <string_view>

namespace hydra::kernels {

enum class Isa { kScalar, kAvx2 };

enum class Trans { kNo, kYes };

struct KernelTable {
  Isa isa;

  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*scale)(double alpha, double* x, std::size_t n);
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  double (*max)(const double* x, std::size_t n);
  bool (*all_finite)(const double* x, std::size_t n);

  void (*exp)(const double* x, double* out, std::size_t n);
  void (*sigmoid)(const double* x, double* out, std::size_t n);

  // C[m x n] = alpha * op(A) * op(B) + beta * C, row-major, leading dims
  // are row strides of the stored (untransposed) matrices.
  void (*gemm)(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
               double alpha, const double* a, std::size_t lda, const double* b,
               std::size_t ldb, double beta, double* c, std::size_t ldc);

  // out[r] = <base + r*stride, q> for r in [0, rows), vectors of length len.
  void (*rows_dot)(const double* base, std::size_t stride, std::size_t rows,
                   const double* q, std::size_t len, double* out);
  // out += sum_r w[r] * (base + r*stride), vectors of length len.
  void (*rows_axpy)(const double* base, std::size_t stride, std::size_t rows,
                    const double* w, double* out, std::size_t len);

  // Diagonal linear recurrence h_t = a*h_{t-1} + (1-a)*u_t over [len x d];
  // h0 must point at d initial values.
  void (*scan_forward)(const double* u, const double* a, const double* h0,
                       double* h, std::size_t len, std::size_t d);
  // Reverse pass of scan_forward. dh is consumed (overwritten with the
  // running state gradient). du, da, dh0 are accumulated into.
  void (*scan_backward)(const double* u, const double* a, const double* h0,
                        const double* h, double* dh, double* du, double* da,
                        double* dh0, std::size_t len, std::size_t d);
};

const KernelTable& active();
const KernelTable& table_for(Isa isa);
bool isa_supported(Isa isa);
void set_isa(Isa isa);
std::string_view isa_name(Isa isa);

namespace detail {
const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when not compiled in
}  // namespace detail

}  // namespace hydra::kernels
