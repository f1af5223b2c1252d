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

// Sparse global attention: causal local window plus selected global tokens.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hydra/attention.hpp"
#include "hydra/params.hpp"
#include "hydra/tensor.hpp"

namespace hydra {

struct SgaLayerParams {
  std::size_t d = 0;
  std::size_t n_heads = 4;
  std::size_t window = 64;
  std::size_t max_globals = 16;
  Tensor q_proj, k_proj, v_proj, out_proj;  // [d x d]
  Tensor saliency_proj;                     // [d]

  static SgaLayerParams init(std::size_t d, std::size_t n_heads, std::size_t window,
                             std::size_t max_globals, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct GlobalTokenSet {
  std::vector<std::size_t> indices;  // strictly increasing
  std::vector<double> scores;        // scores[i] belongs to indices[i]
};

// Saliency score h_t . saliency_proj per position.
std::vector<double> saliency_scores(const Tensor& h, const Tensor& saliency_proj);

// Top-K positions of the whole sequence by saliency, ties to the lower index.
GlobalTokenSet select_globals(const Tensor& h, const Tensor& saliency_proj, std::size_t k);

// Row t sees [max(0, t - w), t] plus every global g <= t outside that range.
AttentionPattern sga_pattern(std::size_t len, std::size_t window, const GlobalTokenSet& globals,
                             std::size_t n_heads);

// Causal selection used inside the model: the globals of row t are the
// top-K scores among positions strictly before its window, so no row's key
// set depends on later tokens. Only `rows` (ascending) get pattern rows.
AttentionPattern sga_causal_pattern(std::span<const double> scores, std::size_t window,
                                    std::size_t k, std::span<const std::size_t> rows,
                                    std::size_t n_heads);

Tensor sga_forward(const Tensor& h, const SgaLayerParams& params, const GlobalTokenSet& globals,
                   bool causal = true);

// Attention output for the query rows of `pattern` ([rows x d]); empty
// `rows` means every position. extra_bias is added to global-key logits.
Tensor sga_attend(const Tensor& h, const SgaLayerParams& params, std::span<const std::size_t> rows,
                  const AttentionPattern& pattern, const Tensor& extra_bias = Tensor());

// 4 * L * (w + g) * d: one multiply-add each for the score and the value
// accumulation per (query, key, channel).
double sga_cost(double len, double window, double globals, double d);

}  // namespace hydra
