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

#include "hydra/moe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hydra/errors.hpp"
#include "hydra/ops.hpp"
#include "hydra/stats.hpp"

namespace hydra {

ExpertPool ExpertPool::init(std::size_t n_experts, std::size_t d, std::size_t hidden,
                            std::size_t chunk_size, Rng& rng) {
  if (n_experts == 0) throw UsageError("moe: need at least one expert");
  if (chunk_size == 0) throw UsageError("moe: chunk_size must be >= 1");
  ExpertPool pool;
  pool.d = d;
  pool.hidden = hidden;
  pool.chunk_size = chunk_size;
  for (std::size_t e = 0; e < n_experts; ++e) {
    ExpertParams p;
    p.w1 = param_normal({d, hidden}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    p.b1 = param_full({hidden}, 0.0);
    p.w2 = param_normal({hidden, d}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    p.b2 = param_full({d}, 0.0);
    pool.experts.push_back(p);
  }
  return pool;
}

void ExpertPool::collect(const std::string& prefix, ParamList& out, Component component) const {
  for (std::size_t e = 0; e < experts.size(); ++e) {
    const std::string p = prefix + "expert" + std::to_string(e) + ".";
    out.add(p + "w1", experts[e].w1, component);
    out.add(p + "b1", experts[e].b1, component);
    out.add(p + "w2", experts[e].w2, component);
    out.add(p + "b2", experts[e].b2, component);
  }
}

namespace {

// Indices of the k largest entries, ties to the lower index, best first.
std::vector<std::size_t> top_indices(const double* p, std::size_t n, std::size_t k) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [p](std::size_t a, std::size_t b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });
  order.resize(k);
  return order;
}

}  // namespace

ChunkRoutes route_chunks(const Tensor& r, const Tensor& w_moe) {
  if (r.rank() != 2 || w_moe.rank() != 2 || r.dim(1) != w_moe.dim(1)) {
    throw ShapeError("route_chunks: r [C x m] and w_moe [E x m] required");
  }
  const std::size_t n_chunks = r.dim(0);
  const std::size_t n_experts = w_moe.dim(0);
  const std::size_t k = std::min<std::size_t>(2, n_experts);
  ChunkRoutes routes;
  const Tensor logits = ops::matmul(r, w_moe, /*transpose_b=*/true);
  routes.distributions = ops::softmax(logits, -1);
  for (std::size_t c = 0; c < n_chunks; ++c) {
    const auto top = top_indices(routes.distributions.ptr() + c * n_experts, n_experts, k);
    routes.expert_ids.insert(routes.expert_ids.end(), top.begin(), top.end());
  }
  // Renormalize over the selected experts: softmax of the selected logits.
  routes.weights = ops::softmax(ops::gather_cols(logits, routes.expert_ids, k), -1);
  for (std::size_t c = 0; c < n_chunks; ++c) {
    MoeRouting m;
    m.expert_ids.assign(routes.expert_ids.begin() + static_cast<std::ptrdiff_t>(c * k),
                        routes.expert_ids.begin() + static_cast<std::ptrdiff_t>((c + 1) * k));
    m.weights = Tensor::from({k}, std::span<const double>(routes.weights.ptr() + c * k, k));
    m.full_distribution =
        Tensor::from({n_experts}, std::span<const double>(routes.distributions.ptr() + c * n_experts, n_experts));
    routes.chunks.push_back(std::move(m));
  }
  return routes;
}

MoeRouting route_chunk(const Tensor& r_c, const Tensor& w_moe) {
  const Tensor r = ops::reshape(r_c, {1, r_c.numel()});
  ChunkRoutes routes = route_chunks(r, w_moe);
  MoeRouting m = routes.chunks.front();
  m.weights = ops::reshape(routes.weights, {routes.weights.numel()});
  m.full_distribution = ops::reshape(routes.distributions, {routes.distributions.numel()});
  return m;
}

Tensor expert_ffn(const Tensor& x, const ExpertParams& e) {
  return ops::linear(ops::silu(ops::linear(x, e.w1, e.b1)), e.w2, e.b2);
}

namespace {

Tensor dispatch(const Tensor& x, const ExpertPool& pool, const std::vector<std::size_t>& ids,
                const Tensor& flat_weights, std::size_t k) {
  if (x.rank() != 2 || x.dim(1) != pool.d) throw ShapeError("moe_forward: x must be [L x d]");
  const std::size_t len = x.dim(0);
  const std::size_t n_chunks = (len + pool.chunk_size - 1) / pool.chunk_size;
  if (ids.size() < n_chunks * k) throw ShapeError("moe_forward: fewer routings than chunks");
  std::vector<Tensor> outputs;
  std::vector<std::size_t> all_rows;
  for (std::size_t e = 0; e < pool.n_experts(); ++e) {
    std::vector<std::size_t> rows;
    std::vector<std::size_t> weight_idx;
    for (std::size_t c = 0; c < n_chunks; ++c) {
      for (std::size_t j = 0; j < k; ++j) {
        if (ids[c * k + j] != e) continue;
        const std::size_t hi = std::min(len, (c + 1) * pool.chunk_size);
        for (std::size_t t = c * pool.chunk_size; t < hi; ++t) {
          rows.push_back(t);
          weight_idx.push_back(c * k + j);
        }
      }
    }
    if (rows.empty()) continue;
    auto& st = stats::counters();
    st.expert_calls += 1;
    st.expert_token_evals += rows.size();
    const Tensor xe = rows.size() == len ? x : ops::gather_rows(x, rows);
    const Tensor ye = expert_ffn(xe, pool.experts[e]);
    outputs.push_back(ops::scale_rows(ye, ops::gather_rows(flat_weights, weight_idx)));
    all_rows.insert(all_rows.end(), rows.begin(), rows.end());
  }
  if (outputs.empty()) return Tensor::zeros({len, pool.d});
  return ops::index_add_rows(len, ops::concat_rows(outputs), all_rows);
}

}  // namespace

Tensor moe_forward(const Tensor& x, const ExpertPool& pool, const ChunkRoutes& routes) {
  const std::size_t k = pool.top_k();
  return dispatch(x, pool, routes.expert_ids, ops::reshape(routes.weights, {routes.weights.numel()}), k);
}

Tensor moe_forward(const Tensor& x, const ExpertPool& pool, const std::vector<MoeRouting>& routings) {
  const std::size_t k = pool.top_k();
  std::vector<std::size_t> ids;
  std::vector<Tensor> weights;
  for (const MoeRouting& r : routings) {
    if (r.expert_ids.size() != k) throw ShapeError("moe_forward: routing has wrong k");
    ids.insert(ids.end(), r.expert_ids.begin(), r.expert_ids.end());
    weights.push_back(r.weights);
  }
  if (weights.empty()) throw ShapeError("moe_forward: no routings");
  return dispatch(x, pool, ids, ops::concat_rows(weights), k);
}

Tensor load_balance_loss(const Tensor& all_distributions, const Tensor& fractions_dispatched) {
  if (all_distributions.rank() != 2) throw ShapeError("load_balance_loss: distributions [C x E]");
  const std::size_t n_chunks = all_distributions.dim(0);
  const std::size_t n_experts = all_distributions.dim(1);
  if (fractions_dispatched.numel() != n_experts) {
    throw ShapeError("load_balance_loss: one fraction per expert");
  }
  const Tensor ones = Tensor::full({1, n_chunks}, 1.0 / static_cast<double>(n_chunks));
  const Tensor mean_p = ops::matmul(ones, all_distributions);  // [1 x E]
  const Tensor f = ops::reshape(fractions_dispatched, {1, n_experts});
  return ops::scale(ops::sum(ops::mul(mean_p, f)), static_cast<double>(n_experts));
}

Tensor dispatch_fractions(const std::vector<std::size_t>& expert_ids, std::size_t n_experts) {
  Tensor f = Tensor::zeros({n_experts});
  if (expert_ids.empty()) return f;
  for (std::size_t e : expert_ids) {
    if (e >= n_experts) throw ShapeError("dispatch_fractions: expert id out of range");
    f.ptr()[e] += 1.0;
  }
  for (double& v : f.data()) v /= static_cast<double>(expert_ids.size());
  return f;
}

}  // namespace hydra
