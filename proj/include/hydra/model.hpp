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

// Hydra decoder: embeddings, chunk router, tri-path blocks, mid-stack
// memories and a tied output head. Also the dense transformer baseline
// used for comparisons.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hydra/config.hpp"
#include "hydra/moe.hpp"
#include "hydra/params.hpp"
#include "hydra/pkm.hpp"
#include "hydra/sga.hpp"
#include "hydra/ssm.hpp"
#include "hydra/tensor.hpp"
#include "hydra/workspace.hpp"

namespace hydra {

// r_c = silu(s_c W1 + b1) W2 + b2, consumed by every gate family.
struct RouterParams {
  std::size_t d = 0;
  std::size_t m = 0;
  Tensor start;      // [1 x d] summary seen by chunk 0
  Tensor w1;         // [d x m]
  Tensor b1;         // [m]
  Tensor w2;         // [m x m]
  Tensor b2;         // [m]
  Tensor w_moe;      // [E x m]
  Tensor w_sga;      // [m]
  Tensor w_mem_ws;   // [m]
  Tensor w_mem_pkm;  // [m]

  static RouterParams init(std::size_t d, std::size_t m, std::size_t n_experts, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct RouterDecision {
  Tensor r;                  // [C x m]
  ChunkRoutes moe;           // empty when no MoE path runs
  Tensor p_sga;              // [C]
  std::vector<bool> sga_on;  // p_sga > tau
  Tensor beta_ws;            // [C]
  Tensor beta_pkm;           // [C]

  std::size_t n_chunks() const { return r.defined() ? r.dim(0) : 0; }
};

// Mean of each chunk of rows: [L x d] -> [ceil(L / chunk) x d].
Tensor chunk_summarize(const Tensor& h, std::size_t chunk_size);

// All gates from one r = f_router(summaries). MoE routes only if with_moe.
RouterDecision route(const Tensor& summaries, const RouterParams& params, double tau,
                     bool with_moe);

struct BlockParams {
  Tensor ln_gain, ln_bias;  // [d]
  Tensor g1, g2, g3;        // [1] path gates
  SsmLayerParams ssm;
  bool has_sga = false;
  SgaLayerParams sga;
  bool has_moe = false;
  ExpertPool moe;

  void collect(const std::string& prefix, ParamList& out) const;
};

struct BlockOptions {
  std::size_t chunk_size = 64;
  bool training = false;  // soft SGA gate (scale by p_c) vs hard threshold
  bool sga = true;
  bool moe = true;
};

// x + g1 SSM(LN x) + g2 SGA(LN x) + g3 MoE(LN x). Paths that are not
// scheduled, disabled or gated off contribute exactly zero.
Tensor tri_path_block(const Tensor& x, const BlockParams& block, const RouterDecision& decision,
                      const BlockOptions& options);

struct PathSchedule {
  bool sga = true;
  bool moe = true;
  bool memory = true;
};

struct ForwardOptions {
  bool training = false;
  PathSchedule paths;
  double tau = -1.0;  // negative: use the configured threshold
  // Output rows to project to logits; empty means every position.
  std::vector<std::size_t> logit_rows;
};

struct ForwardResult {
  Tensor logits;        // [rows x vocab]
  Tensor balance_loss;  // scalar, undefined when no MoE path ran
  RouterDecision decision;
  std::vector<std::size_t> token_chunk;  // chunk index of each position
};

class HydraModel {
 public:
  static HydraModel init(const ModelConfig& config);

  ForwardResult forward(std::span<const std::int64_t> tokens,
                        const ForwardOptions& options = {}) const;

  const ModelConfig& config() const { return config_; }
  ParamList& params() { return params_; }
  const ParamList& params() const { return params_; }

  Tensor embed;  // [vocab x d], tied with the output head
  Tensor pos;    // [max_len x d]
  RouterParams router;
  std::vector<BlockParams> blocks;
  WorkspaceParams workspace;
  PkmStore pkm;
  Tensor final_gain, final_bias;

 private:
  ModelConfig config_;
  ParamList params_;
};

Tensor hydra_forward(std::span<const std::int64_t> tokens, const HydraModel& model,
                     const ForwardOptions& options = {});

// ---- dense baseline ----

struct TransformerBlockParams {
  Tensor ln1_gain, ln1_bias;
  Tensor q_proj, k_proj, v_proj, out_proj;  // [d x d]
  Tensor ln2_gain, ln2_bias;
  ExpertParams ffn;
};

// Dense causal multi-head attention: (softmax(QK^T / sqrt(d_h)) V) W_o.
Tensor dense_causal_attention(const Tensor& h, const Tensor& q_proj, const Tensor& k_proj,
                              const Tensor& v_proj, const Tensor& out_proj, std::size_t n_heads);

class TransformerModel {
 public:
  // FFN width is config.baseline_ffn_hidden, or solved so the parameter
  // count matches a Hydra model of the same config.
  static TransformerModel init(const ModelConfig& config);

  Tensor forward(std::span<const std::int64_t> tokens,
                 std::span<const std::size_t> logit_rows = {}) const;

  const ModelConfig& config() const { return config_; }
  std::size_t ffn_hidden() const { return ffn_hidden_; }
  ParamList& params() { return params_; }
  const ParamList& params() const { return params_; }

  Tensor embed;
  Tensor pos;
  std::vector<TransformerBlockParams> blocks;
  Tensor final_gain, final_bias;

 private:
  ModelConfig config_;
  std::size_t ffn_hidden_ = 0;
  ParamList params_;
};

Tensor transformer_forward(std::span<const std::int64_t> tokens, const TransformerModel& model,
                           std::span<const std::size_t> logit_rows = {});

// Closed-form parameter counts (equal to ParamList::numel of an initialized model).
std::size_t hydra_param_count(const ModelConfig& config);
std::size_t transformer_param_count(const ModelConfig& config, std::size_t ffn_hidden);
// FFN width whose transformer count is closest to hydra_param_count.
std::size_t matched_ffn_hidden(const ModelConfig& config);

// Throws InputError for ids outside [0, vocab) and UsageError for empty
// input or more than max_len tokens.
void validate_tokens(std::span<const std::int64_t> tokens, const ModelConfig& config);

}  // namespace hydra
