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

#include "hydra/sga.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hydra/errors.hpp"
#include "hydra/kernels.hpp"
#include "hydra/ops.hpp"

namespace hydra {

SgaLayerParams SgaLayerParams::init(std::size_t d, std::size_t n_heads, std::size_t window,
                                    std::size_t max_globals, Rng& rng) {
  if (n_heads == 0 || d % n_heads != 0) throw UsageError("sga: d must be divisible by n_heads");
  if (window == 0) throw UsageError("sga: window must be >= 1");
  SgaLayerParams p;
  p.d = d;
  p.n_heads = n_heads;
  p.window = window;
  p.max_globals = max_globals;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  p.q_proj = param_normal({d, d}, s, rng);
  p.k_proj = param_normal({d, d}, s, rng);
  p.v_proj = param_normal({d, d}, s, rng);
  p.out_proj = param_normal({d, d}, s, rng);
  p.saliency_proj = param_normal({d}, s, rng);
  return p;
}

void SgaLayerParams::collect(const std::string& prefix, ParamList& out) const {
  out.add(prefix + "q_proj", q_proj, Component::kSga);
  out.add(prefix + "k_proj", k_proj, Component::kSga);
  out.add(prefix + "v_proj", v_proj, Component::kSga);
  out.add(prefix + "out_proj", out_proj, Component::kSga);
  out.add(prefix + "saliency_proj", saliency_proj, Component::kSga);
}

std::vector<double> saliency_scores(const Tensor& h, const Tensor& saliency_proj) {
  const std::size_t len = h.dim(0);
  const std::size_t d = h.dim(1);
  if (saliency_proj.numel() != d) throw ShapeError("saliency_scores: projection needs d entries");
  std::vector<double> scores(len);
  kernels::active().rows_dot(h.ptr(), d, len, saliency_proj.ptr(), d, scores.data());
  return scores;
}

GlobalTokenSet select_globals(const Tensor& h, const Tensor& saliency_proj, std::size_t k) {
  const std::vector<double> scores = saliency_scores(h, saliency_proj);
  if (k > scores.size()) throw UsageError("select_globals: K exceeds sequence length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                    });
  order.resize(k);
  std::sort(order.begin(), order.end());
  GlobalTokenSet set;
  set.indices = order;
  for (std::size_t i : order) set.scores.push_back(scores[i]);
  return set;
}

AttentionPattern sga_pattern(std::size_t len, std::size_t window, const GlobalTokenSet& globals,
                             std::size_t n_heads) {
  AttentionPattern p = AttentionPattern::causal_window(len, window, n_heads);
  p.extra_offsets.assign(1, 0);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t g : globals.indices) {
      if (g < p.lo[t]) p.extra_keys.push_back(g);
    }
    p.extra_offsets.push_back(p.extra_keys.size());
  }
  return p;
}

AttentionPattern sga_causal_pattern(std::span<const double> scores, std::size_t window,
                                    std::size_t k, std::span<const std::size_t> rows,
                                    std::size_t n_heads) {
  AttentionPattern p;
  p.n_heads = n_heads;
  p.extra_offsets.assign(1, 0);
  // best holds the current top-k candidate positions, best first.
  std::vector<std::size_t> best;
  auto better = [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::size_t admitted = 0;  // positions [0, admitted) have been offered
  std::vector<std::size_t> sorted_extra;
  for (std::size_t t : rows) {
    if (t >= scores.size()) throw ShapeError("sga_causal_pattern: row out of range");
    const std::size_t lo = t >= window ? t - window : 0;
    for (; admitted < lo; ++admitted) {
      if (k == 0) continue;
      auto pos = std::upper_bound(best.begin(), best.end(), admitted,
                                  [&](std::size_t a, std::size_t b) { return better(a, b); });
      if (best.size() < k) {
        best.insert(pos, admitted);
      } else if (pos != best.end()) {
        best.insert(pos, admitted);
        best.pop_back();
      }
    }
    p.lo.push_back(lo);
    p.hi.push_back(t + 1);
    sorted_extra = best;
    std::sort(sorted_extra.begin(), sorted_extra.end());
    p.extra_keys.insert(p.extra_keys.end(), sorted_extra.begin(), sorted_extra.end());
    p.extra_offsets.push_back(p.extra_keys.size());
  }
  return p;
}

Tensor sga_attend(const Tensor& h, const SgaLayerParams& params, std::span<const std::size_t> rows,
                  const AttentionPattern& pattern, const Tensor& extra_bias) {
  const Tensor hq = rows.empty() ? h : ops::gather_rows(h, rows);
  const Tensor q = ops::matmul(hq, params.q_proj);
  const Tensor k = ops::matmul(h, params.k_proj);
  const Tensor v = ops::matmul(h, params.v_proj);
  return ops::matmul(attend(q, k, v, pattern, extra_bias), params.out_proj);
}

Tensor sga_forward(const Tensor& h, const SgaLayerParams& params, const GlobalTokenSet& globals,
                   bool causal) {
  if (!causal) throw UsageError("sga_forward: only causal attention is supported");
  const AttentionPattern pattern = sga_pattern(h.dim(0), params.window, globals, params.n_heads);
  return sga_attend(h, params, {}, pattern);
}

double sga_cost(double len, double window, double globals, double d) {
  return 4.0 * len * (window + globals) * d;
}

}  // namespace hydra
