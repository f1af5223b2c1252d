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

#include "hydra/workspace.hpp"

#include <cmath>

#include "hydra/attention.hpp"
#include "hydra/errors.hpp"
#include "hydra/ops.hpp"

namespace hydra {
namespace {

Tensor active_slots(const Workspace& ws, const WorkspaceParams& p) {
  return p.s_active == p.s_total ? ws.slots : ops::slice_rows(ws.slots, 0, p.s_active);
}

Tensor with_active(const Tensor& active, const Tensor& all, const WorkspaceParams& p) {
  if (p.s_active == p.s_total) return active;
  return ops::concat_rows({active, ops::slice_rows(all, p.s_active, p.s_total)});
}

std::vector<bool> static_mask(const WorkspaceParams& p) {
  std::vector<bool> mask(p.s_total, false);
  for (std::size_t i = 0; i < p.s_active; ++i) mask[i] = true;
  return mask;
}

}  // namespace

WorkspaceParams WorkspaceParams::init(std::size_t d, std::size_t d_slot, std::size_t s_total,
                                      std::size_t s_active, std::size_t rank, Rng& rng) {
  if (s_active == 0 || s_active > s_total) throw UsageError("workspace: need 1 <= s_active <= s_total");
  if (rank == 0 || d_slot == 0) throw UsageError("workspace: rank and slot width must be positive");
  WorkspaceParams p;
  p.d = d;
  p.d_slot = d_slot;
  p.s_total = s_total;
  p.s_active = s_active;
  p.rank = rank;
  auto s = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  p.init_slots = param_normal({s_total, d_slot}, 1.0, rng);
  p.write_q = param_normal({d_slot, rank}, s(d_slot), rng);
  p.write_k = param_normal({d, rank}, s(d), rng);
  p.write_v = param_normal({d, d_slot}, s(d), rng);
  p.read_q = param_normal({d, rank}, s(d), rng);
  p.read_k = param_normal({d_slot, rank}, s(d_slot), rng);
  p.read_v = param_normal({d_slot, d}, s(d_slot), rng);
  p.pool_queries = param_normal({s_active, rank}, 1.0, rng);
  p.pool_k = param_normal({d_slot, rank}, s(d_slot), rng);
  p.pool_v = param_normal({d_slot, d_slot}, s(d_slot), rng);
  return p;
}

void WorkspaceParams::collect(const std::string& prefix, ParamList& out) const {
  out.add(prefix + "init_slots", init_slots, Component::kWorkspace);
  out.add(prefix + "write_q", write_q, Component::kWorkspace);
  out.add(prefix + "write_k", write_k, Component::kWorkspace);
  out.add(prefix + "write_v", write_v, Component::kWorkspace);
  out.add(prefix + "read_q", read_q, Component::kWorkspace);
  out.add(prefix + "read_k", read_k, Component::kWorkspace);
  out.add(prefix + "read_v", read_v, Component::kWorkspace);
  out.add(prefix + "pool_queries", pool_queries, Component::kWorkspace);
  out.add(prefix + "pool_k", pool_k, Component::kWorkspace);
  out.add(prefix + "pool_v", pool_v, Component::kWorkspace);
}

std::size_t Workspace::active_count() const {
  std::size_t n = 0;
  for (bool b : active_mask) n += b ? 1 : 0;
  return n;
}

Workspace workspace_init(const WorkspaceParams& params) {
  return Workspace{params.init_slots, static_mask(params)};
}

Workspace workspace_write(const Tensor& chunk_summaries, const Workspace& ws,
                          const WorkspaceParams& params) {
  const Tensor active = active_slots(ws, params);
  const Tensor q = ops::matmul(active, params.write_q);
  const Tensor k = ops::matmul(chunk_summaries, params.write_k);
  const Tensor v = ops::matmul(chunk_summaries, params.write_v);
  const Tensor delta =
      attend(q, k, v, AttentionPattern::full(params.s_active, chunk_summaries.dim(0), 1));
  return Workspace{with_active(ops::add(active, delta), ws.slots, params), ws.active_mask};
}

Tensor workspace_read(const Tensor& h, const Workspace& ws, const Tensor& beta,
                      const WorkspaceParams& params) {
  if (beta.numel() != h.dim(0)) throw ShapeError("workspace_read: one beta per token");
  const Tensor active = active_slots(ws, params);
  const Tensor q = ops::matmul(h, params.read_q);
  const Tensor k = ops::matmul(active, params.read_k);
  const Tensor v = ops::matmul(active, params.read_v);
  const Tensor read = attend(q, k, v, AttentionPattern::full(h.dim(0), params.s_active, 1));
  return ops::add(h, ops::scale_rows(read, beta));
}

Workspace compress_segment(const Workspace& ws, const WorkspaceParams& params) {
  const Tensor active = active_slots(ws, params);
  const Tensor k = ops::matmul(active, params.pool_k);
  const Tensor v = ops::matmul(active, params.pool_v);
  const Tensor carry = attend(params.pool_queries, k, v,
                              AttentionPattern::full(params.s_active, params.s_active, 1));
  return Workspace{with_active(carry, params.init_slots, params), static_mask(params)};
}

Tensor workspace_write_prefix(const Tensor& chunk_summaries, const Tensor& active,
                              const WorkspaceParams& params) {
  const std::size_t n_chunks = chunk_summaries.dim(0);
  const std::size_t s = params.s_active;
  const Tensor q1 = ops::matmul(active, params.write_q);
  const std::vector<Tensor> q_parts(n_chunks, q1);
  const std::vector<Tensor> slot_parts(n_chunks, active);
  const Tensor k = ops::matmul(chunk_summaries, params.write_k);
  const Tensor v = ops::matmul(chunk_summaries, params.write_v);
  AttentionPattern pattern;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    for (std::size_t i = 0; i < s; ++i) {
      pattern.lo.push_back(0);
      pattern.hi.push_back(c);
    }
  }
  const Tensor delta = attend(ops::concat_rows(q_parts), k, v, pattern);
  return ops::add(ops::concat_rows(slot_parts), delta);
}

Tensor workspace_read_chunked(const Tensor& h, const Tensor& slot_states, const Tensor& beta,
                              std::size_t chunk_size, const WorkspaceParams& params) {
  const std::size_t len = h.dim(0);
  const std::size_t s = params.s_active;
  const std::size_t n_chunks = (len + chunk_size - 1) / chunk_size;
  if (slot_states.dim(0) != n_chunks * s) throw ShapeError("workspace_read_chunked: slot blocks");
  if (beta.numel() != len) throw ShapeError("workspace_read_chunked: one beta per token");
  const Tensor q = ops::matmul(h, params.read_q);
  const Tensor k = ops::matmul(slot_states, params.read_k);
  const Tensor v = ops::matmul(slot_states, params.read_v);
  AttentionPattern pattern;
  for (std::size_t t = 0; t < len; ++t) {
    const std::size_t c = t / chunk_size;
    pattern.lo.push_back(c * s);
    pattern.hi.push_back((c + 1) * s);
  }
  return ops::add(h, ops::scale_rows(attend(q, k, v, pattern), beta));
}

}  // namespace hydra
