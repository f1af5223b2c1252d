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

// Differentiable tensor operations. Binary ops support trailing-dim
// broadcasting only: b's shape must equal a's shape, be a suffix of it,
// or be a single element.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hydra/tensor.hpp"

namespace hydra::ops {

enum class OpKind { kAdd, kSub, kMul, kSigmoid, kTanh, kExp, kLog, kRelu, kSilu };

// Single entry point over the elementwise family; b is required for the
// binary kinds and ignored for the unary ones.
Tensor elementwise(OpKind kind, const Tensor& a, const std::optional<Tensor>& b = std::nullopt);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);

Tensor scale(const Tensor& x, double alpha);
Tensor one_minus(const Tensor& x);

// [m x k] * [k x n]. With transpose_b, b is stored [n x k].
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);
// x [n x in] * w [in x out] (+ bias [out]).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = Tensor());

// Softmax along `axis` (negative counts from the end), max-subtracted.
Tensor softmax(const Tensor& x, int axis = -1);
// Normalizes over the last axis, then applies gain/bias (both [last dim]).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

// Rows of a rank-2 tensor (or entries of a rank-1 tensor).
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
// out[n_rows x d] = 0; out[rows[i]] += src[i]
Tensor index_add_rows(std::size_t n_rows, const Tensor& src, std::span<const std::size_t> rows);
// out[i, :] = w[i] * x[i, :] for x [n x d], w [n] or [n x 1].
Tensor scale_rows(const Tensor& x, const Tensor& w);
// out[i, j] = x[i, cols[i * k + j]] for x [n x m]; result [n x k].
Tensor gather_cols(const Tensor& x, std::span<const std::size_t> cols, std::size_t k);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_rows(const std::vector<Tensor>& parts);
// Column block [begin, end) of a rank-2 tensor.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
// Mean of consecutive row groups of size `chunk` (last group may be short).
Tensor chunk_mean(const Tensor& x, std::size_t chunk);

// Mean token cross-entropy over rows whose target is >= 0.
// logits [n x V], targets length n (-1 = unsupervised).
Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets);

}  // namespace hydra::ops
