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

// Product-key memory. A query splits into halves scored against two
// sub-key codebooks; the top-t sub-keys per side form t*t composite
// candidates (i, j) -> value row i*N + j, of which the best K_c are
// softmax-weighted into the retrieved value.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "hydra/params.hpp"
#include "hydra/tensor.hpp"

namespace hydra {

struct PkmStore {
  std::size_t n = 16;     // sub-keys per codebook
  std::size_t d_k = 32;   // query width (each half d_k / 2)
  std::size_t d_v = 0;
  std::size_t top_t = 4;  // candidates per side
  std::size_t keep = 4;   // composites kept (K_c)

  Tensor codebook1;   // [n x d_k/2]
  Tensor codebook2;   // [n x d_k/2]
  Tensor values;      // [n*n x d_v]
  Tensor query_proj;  // [d x d_k], applied to the normalized hidden state
  Tensor query_gain;  // [d]
  Tensor query_bias;  // [d]
  Tensor value_proj;  // [d_v x d], applied as m * value_proj

  static PkmStore init(std::size_t d, std::size_t n, std::size_t d_k, std::size_t d_v,
                       std::size_t top_t, std::size_t keep, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
  void validate() const;
};

struct PkmRetrieval {
  std::vector<std::pair<std::size_t, std::size_t>> indices;  // best first
  std::vector<double> scores;
  std::vector<double> weights;  // softmax over scores
  Tensor value;                 // [d_v]
};

PkmRetrieval pkm_query(const Tensor& q, const PkmStore& store);
// Scores all n*n composites; refuses stores with n*n > 1e6.
PkmRetrieval pkm_bruteforce(const Tensor& q, const PkmStore& store);

// h + beta * m * w_val for h [d] or [L x d], m [d_v] or [L x d_v], beta
// with one entry per row.
Tensor pkm_blend(const Tensor& h, const Tensor& m, const Tensor& beta, const Tensor& w_val);

// Differentiable batched retrieval: queries [L x d_k] -> values [L x d_v].
// Gradients reach the queries, both codebooks and the value table.
Tensor pkm_lookup(const Tensor& queries, const PkmStore& store);

// Full memory path: h + beta * lookup(LN(h) Wq) * value_proj.
Tensor pkm_layer(const Tensor& h, const PkmStore& store, const Tensor& beta);

}  // namespace hydra
