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

#include "hydra/cost_model.hpp"

#include <algorithm>
#include <cmath>

#include "hydra/model.hpp"

namespace hydra {
namespace {

constexpr double kLayerNormFlops = 8.0;  // per channel: mean, var, scale, shift
constexpr double kBytes = 8.0;

}  // namespace

double CostEstimate::flops() const {
  double s = 0.0;
  for (const auto& it : items) s += it.flops;
  return s;
}

double CostEstimate::bytes() const {
  double s = 0.0;
  for (const auto& it : items) s = std::max(s, it.bytes);
  return s;
}

double CostEstimate::flops_of(const std::string& component) const {
  for (const auto& it : items) {
    if (it.component == component) return it.flops;
  }
  return 0.0;
}

ActiveDecisions ActiveDecisions::all_off() {
  ActiveDecisions a;
  a.sga_fraction = 0.0;
  a.moe = false;
  a.workspace = false;
  a.pkm = false;
  return a;
}

CostEstimate cost_model(const ModelConfig& c, double len, const ActiveDecisions& active) {
  const double d = static_cast<double>(c.d);
  const double L = len;
  const double n_chunks = std::ceil(L / static_cast<double>(c.chunk_size));
  CostEstimate est;

  // Pre-norm, three projections, the scan and the output gate, every block.
  const double ssm_tok = kLayerNormFlops * d + 6.0 * d * d + 10.0 * d;
  est.items.push_back({"ssm", static_cast<double>(c.n_blocks) * L * ssm_tok, kBytes * L * 6.0 * d});

  const bool sga = c.n_sga_blocks() > 0 && active.sga_fraction > 0.0;
  const bool moe = c.n_moe_blocks() > 0 && active.moe;
  const bool ws = c.use_workspace && active.workspace;
  const bool pkm = c.use_pkm && active.pkm;
  if (!(sga || moe || ws || pkm)) return est;

  const double m = static_cast<double>(c.router_dim);
  const double e = static_cast<double>(c.n_experts);
  est.items.push_back(
      {"router", L * d + n_chunks * (2.0 * d * m + 2.0 * m * m + 2.0 * e * m + 10.0 * m),
       kBytes * n_chunks * (d + m)});

  if (sga) {
    const double f = std::clamp(active.sga_fraction, 0.0, 1.0);
    const double g = active.globals < 0.0 ? static_cast<double>(c.max_globals) : active.globals;
    const double w = static_cast<double>(c.window);
    // Keys, values and saliency for every token; queries, scores and the
    // output projection only for rows of active chunks.
    const double all_rows = 4.0 * d * d + 2.0 * d;
    const double on_rows = 4.0 * d * d + 4.0 * std::min(w + g, L) * d;
    est.items.push_back({"sga", static_cast<double>(c.n_sga_blocks()) * L * (all_rows + f * on_rows),
                         kBytes * L * 5.0 * d});
  }

  if (moe) {
    const double h = static_cast<double>(c.expert_hidden);
    const double k = std::min(2.0, e);
    const double per_tok = k * (4.0 * d * h + 6.0 * h + 4.0 * d);
    est.items.push_back({"moe", static_cast<double>(c.n_moe_blocks()) * L * per_tok,
                         kBytes * L * (2.0 * d + h)});
  }

  if (ws) {
    const double r = static_cast<double>(c.ws_rank);
    const double ds = r;
    const double s = static_cast<double>(c.ws_active);
    // Causal write: block c holds the slots after summaries [0, c).
    const double write_pairs = s * n_chunks * (n_chunks - 1.0) / 2.0;
    const double write = L * d + n_chunks * (2.0 * d * r + 2.0 * d * ds) +
                         n_chunks * s * 2.0 * ds * r + write_pairs * (2.0 * r + 2.0 * ds);
    const double read = L * (2.0 * d * r + s * (2.0 * r + 2.0 * d) + 2.0 * d) +
                        n_chunks * s * (2.0 * ds * r + 2.0 * ds * d);
    est.items.push_back({"workspace", write + read, kBytes * (L * (d + r) + n_chunks * s * d)});
  }

  if (pkm) {
    const double n = static_cast<double>(c.pkm_n);
    const double dk = static_cast<double>(c.pkm_dk);
    const double t = static_cast<double>(c.pkm_top_t);
    const double kc = static_cast<double>(c.pkm_keep);
    const double per_tok =
        kLayerNormFlops * d + 2.0 * d * dk + 2.0 * n * dk + t * t + 2.0 * kc * d + 2.0 * d * d + 2.0 * d;
    est.items.push_back({"pkm", L * per_tok, kBytes * L * 3.0 * d});
  }
  return est;
}

CostEstimate baseline_cost(const ModelConfig& c, double len, std::size_t ffn_hidden) {
  const double d = static_cast<double>(c.d);
  const double h = static_cast<double>(ffn_hidden > 0 ? ffn_hidden : matched_ffn_hidden(c));
  const double L = len;
  const double nb = static_cast<double>(c.n_blocks);
  CostEstimate est;
  // Row i attends to i + 1 keys: 4 d flops per (query, key) pair.
  est.items.push_back({"attention", nb * (L * (2.0 * kLayerNormFlops * d + 8.0 * d * d) +
                                          2.0 * d * L * (L + 1.0)),
                       kBytes * L * 6.0 * d});
  est.items.push_back({"ffn", nb * L * (4.0 * d * h + 6.0 * h + 2.0 * d), kBytes * L * (2.0 * d + h)});
  return est;
}

double head_flops(const ModelConfig& c, double len) {
  const double d = static_cast<double>(c.d);
  return len * (d + kLayerNormFlops * d + 2.0 * d * static_cast<double>(c.vocab));
}

double predicted_crossover(const ModelConfig& c, const ActiveDecisions& active,
                           std::size_t ffn_hidden) {
  const std::size_t hidden = ffn_hidden > 0 ? ffn_hidden : matched_ffn_hidden(c);
  auto baseline_wins = [&](double L) {
    return baseline_cost(c, L, hidden).flops() >= cost_model(c, L, active).flops();
  };
  if (baseline_wins(1.0)) return 1.0;
  double lo = 1.0;
  double hi = 2.0;
  while (!baseline_wins(hi)) {
    lo = hi;
    hi *= 2.0;
    if (hi > std::ldexp(1.0, 40)) return std::numeric_limits<double>::infinity();
  }
  while (hi - lo > 1.0) {
    const double mid = std::floor((lo + hi) / 2.0);
    (baseline_wins(mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace hydra
