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

// Multi-head scaled dot-product attention over an explicit sparsity
// pattern. Query row i sees the contiguous key range [lo[i], hi[i]) plus
// an optional list of extra key indices outside that range. Heads split the
// q/k width and the v width into equal column blocks. A row with no keys
// produces zeros.
//
// The backward pass keeps only the per-(row, head) log-normalizer and
// recomputes probabilities block by block.

#include <cstddef>
#include <vector>

#include "hydra/tensor.hpp"

namespace hydra {

struct AttentionPattern {
  std::size_t n_heads = 1;
  std::vector<std::size_t> lo;
  std::vector<std::size_t> hi;
  // CSR layout of extra keys: row i uses extra_keys[extra_offsets[i] ..
  // extra_offsets[i + 1]). Leave both empty when there are none.
  std::vector<std::size_t> extra_offsets;
  std::vector<std::size_t> extra_keys;

  std::size_t rows() const { return lo.size(); }
  std::size_t keys_for(std::size_t row) const;
  // Total (query, key) pairs, summed over rows.
  std::size_t pair_count() const;

  static AttentionPattern causal(std::size_t len, std::size_t n_heads);
  // Row i sees [i + 1 - min(i + 1, window + 1), i + 1).
  static AttentionPattern causal_window(std::size_t len, std::size_t window, std::size_t n_heads);
  // Every row sees [0, n_keys).
  static AttentionPattern full(std::size_t n_queries, std::size_t n_keys, std::size_t n_heads);
};

// q [Lq x Dk], k [Lk x Dk], v [Lk x Dv]. extra_bias, when given, has Lk
// entries and is added to the logit of key j whenever j is reached through
// the extra list (never for the contiguous range).
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionPattern& pattern,
              const Tensor& extra_bias = Tensor());

// Normalized weights of one (row, head) as (key index, weight) pairs, in
// range order then extra order. Inspection only; not recorded.
std::vector<std::pair<std::size_t, double>> attention_weights(
    const Tensor& q, const Tensor& k, const AttentionPattern& pattern, std::size_t row,
    std::size_t head, const Tensor& extra_bias = Tensor());

}  // namespace hydra
