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

// Chunk-level top-k mixture of experts (k = min(2, E)).

#include <cstddef>
#include <string>
#include <vector>

#include "hydra/params.hpp"
#include "hydra/tensor.hpp"

namespace hydra {

// y = silu(x W1 + b1) W2 + b2
struct ExpertParams {
  Tensor w1;  // [d x hidden]
  Tensor b1;  // [hidden]
  Tensor w2;  // [hidden x d]
  Tensor b2;  // [d]
};

struct ExpertPool {
  std::size_t d = 0;
  std::size_t hidden = 0;
  std::size_t chunk_size = 64;
  std::vector<ExpertParams> experts;

  std::size_t n_experts() const { return experts.size(); }
  std::size_t top_k() const { return experts.size() < 2 ? experts.size() : 2; }
  static ExpertPool init(std::size_t n_experts, std::size_t d, std::size_t hidden,
                         std::size_t chunk_size, Rng& rng);
  void collect(const std::string& prefix, ParamList& out, Component component) const;
};

struct MoeRouting {
  std::vector<std::size_t> expert_ids;  // top_k distinct, best first
  Tensor weights;                       // [top_k], renormalized over the selection
  Tensor full_distribution;             // [E]
};

MoeRouting route_chunk(const Tensor& r_c, const Tensor& w_moe);

struct ChunkRoutes {
  std::vector<MoeRouting> chunks;
  Tensor distributions;  // [C x E] softmax over all experts
  Tensor weights;        // [C x k]
  std::vector<std::size_t> expert_ids;  // C * k, row-major
};

// Routes every row of r [C x m] at once; weights stay on the tape.
ChunkRoutes route_chunks(const Tensor& r, const Tensor& w_moe);

// FFN of a single expert over rows of x.
Tensor expert_ffn(const Tensor& x, const ExpertParams& e);

// Token t uses the routing of chunk t / chunk_size.
Tensor moe_forward(const Tensor& x, const ExpertPool& pool, const std::vector<MoeRouting>& routings);
Tensor moe_forward(const Tensor& x, const ExpertPool& pool, const ChunkRoutes& routes);

// E * sum_e mean_c(P[c, e]) * fractions[e].
Tensor load_balance_loss(const Tensor& all_distributions, const Tensor& fractions_dispatched);
// Fraction of (chunk, slot) assignments per expert.
Tensor dispatch_fractions(const std::vector<std::size_t>& expert_ids, std::size_t n_experts);

}  // namespace hydra
