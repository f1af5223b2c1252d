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

// Slot scratchpad written from chunk summaries and read by tokens through
// rank-r attention. The first s_active slots are the active ones.

#include <cstddef>
#include <string>
#include <vector>

#include "hydra/params.hpp"
#include "hydra/tensor.hpp"

namespace hydra {

struct WorkspaceParams {
  std::size_t d = 0;
  std::size_t d_slot = 0;
  std::size_t s_total = 32;
  std::size_t s_active = 8;
  std::size_t rank = 32;

  Tensor init_slots;    // [s_total x d_slot]
  Tensor write_q;       // [d_slot x r]
  Tensor write_k;       // [d x r]
  Tensor write_v;       // [d x d_slot]
  Tensor read_q;        // [d x r]
  Tensor read_k;        // [d_slot x r]
  Tensor read_v;        // [d_slot x d]
  Tensor pool_queries;  // [s_active x r]
  Tensor pool_k;        // [d_slot x r]
  Tensor pool_v;        // [d_slot x d_slot]

  static WorkspaceParams init(std::size_t d, std::size_t d_slot, std::size_t s_total,
                              std::size_t s_active, std::size_t rank, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct Workspace {
  Tensor slots;                   // [s_total x d_slot]
  std::vector<bool> active_mask;  // s_total entries

  std::size_t active_count() const;
};

Workspace workspace_init(const WorkspaceParams& params);

// Active slot i <- slot_i + attn(slot_i Wq, S Wk, S Wv) over all summaries S.
Workspace workspace_write(const Tensor& chunk_summaries, const Workspace& ws,
                          const WorkspaceParams& params);

// out_t = h_t + beta_t * attn(h_t Wq, M Wk, M Wv) over the active slots M.
Tensor workspace_read(const Tensor& h, const Workspace& ws, const Tensor& beta,
                      const WorkspaceParams& params);

// Active slots pooled into s_active carry-over slots; the rest reset to
// their initial values.
Workspace compress_segment(const Workspace& ws, const WorkspaceParams& params);

// Causal chunked use inside the model. Block c of the result (rows
// [c*S, (c+1)*S)) holds the active slots after writing summaries [0, c).
Tensor workspace_write_prefix(const Tensor& chunk_summaries, const Tensor& active_slots,
                              const WorkspaceParams& params);
// Token t reads the slot block of chunk t / chunk_size.
Tensor workspace_read_chunked(const Tensor& h, const Tensor& slot_states, const Tensor& beta,
                              std::size_t chunk_size, const WorkspaceParams& params);

}  // namespace hydra
