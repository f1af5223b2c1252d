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

#include "hydra/model.hpp"

#include <cmath>
#include <numeric>

#include "hydra/attention.hpp"
#include "hydra/errors.hpp"
#include "hydra/ops.hpp"

namespace hydra {
namespace {

constexpr double kEmbedStd = 0.02;

double inv_sqrt(std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); }

std::vector<std::size_t> chunk_index(std::size_t len, std::size_t chunk) {
  std::vector<std::size_t> idx(len);
  for (std::size_t t = 0; t < len; ++t) idx[t] = t / chunk;
  return idx;
}

// Per-chunk values [C] expanded to one entry per token [L].
Tensor per_token(const Tensor& per_chunk, const std::vector<std::size_t>& token_chunk) {
  const Tensor col = ops::reshape(per_chunk, {per_chunk.numel(), 1});
  return ops::reshape(ops::gather_rows(col, token_chunk), {token_chunk.size()});
}

Tensor gate_logit(const Tensor& r, const Tensor& w) {
  const Tensor out = ops::matmul(r, ops::reshape(w, {w.numel(), 1}));
  return ops::reshape(ops::sigmoid(out), {r.dim(0)});
}

Tensor embed_tokens(std::span<const std::int64_t> tokens, const Tensor& embed,
                    const Tensor& pos) {
  std::vector<std::size_t> ids(tokens.begin(), tokens.end());
  return ops::add(ops::gather_rows(embed, ids), ops::slice_rows(pos, 0, tokens.size()));
}

Tensor output_head(const Tensor& x, const Tensor& gain, const Tensor& bias, const Tensor& embed,
                   std::span<const std::size_t> logit_rows) {
  Tensor h = ops::layer_norm(x, gain, bias);
  if (!logit_rows.empty()) h = ops::gather_rows(h, logit_rows);
  return ops::matmul(h, embed, /*transpose_b=*/true);
}

ExpertParams dense_ffn_init(std::size_t d, std::size_t hidden, Rng& rng) {
  ExpertParams e;
  e.w1 = param_normal({d, hidden}, inv_sqrt(d), rng);
  e.b1 = param_full({hidden}, 0.0);
  e.w2 = param_normal({hidden, d}, inv_sqrt(hidden), rng);
  e.b2 = param_full({d}, 0.0);
  return e;
}

}  // namespace

void validate_tokens(std::span<const std::int64_t> tokens, const ModelConfig& config) {
  if (tokens.empty()) throw UsageError("forward: empty token sequence");
  if (tokens.size() > config.max_len) {
    throw UsageError("forward: sequence length " + std::to_string(tokens.size()) +
                     " exceeds max_len " + std::to_string(config.max_len));
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= config.vocab) {
      throw InputError("forward: token " + std::to_string(tokens[i]) + " at position " +
                       std::to_string(i) + " outside vocab of " + std::to_string(config.vocab));
    }
  }
}

// ---- router ----

RouterParams RouterParams::init(std::size_t d, std::size_t m, std::size_t n_experts, Rng& rng) {
  RouterParams p;
  p.d = d;
  p.m = m;
  p.start = param_normal({1, d}, kEmbedStd, rng);
  p.w1 = param_normal({d, m}, inv_sqrt(d), rng);
  p.b1 = param_full({m}, 0.0);
  p.w2 = param_normal({m, m}, inv_sqrt(m), rng);
  p.b2 = param_full({m}, 0.0);
  p.w_moe = param_normal({n_experts, m}, inv_sqrt(m), rng);
  p.w_sga = param_normal({m}, inv_sqrt(m), rng);
  p.w_mem_ws = param_normal({m}, inv_sqrt(m), rng);
  p.w_mem_pkm = param_normal({m}, inv_sqrt(m), rng);
  return p;
}

void RouterParams::collect(const std::string& prefix, ParamList& out) const {
  out.add(prefix + "start", start, Component::kRouter);
  out.add(prefix + "w1", w1, Component::kRouter);
  out.add(prefix + "b1", b1, Component::kRouter);
  out.add(prefix + "w2", w2, Component::kRouter);
  out.add(prefix + "b2", b2, Component::kRouter);
  out.add(prefix + "w_moe", w_moe, Component::kRouter);
  out.add(prefix + "w_sga", w_sga, Component::kRouter);
  out.add(prefix + "w_mem_ws", w_mem_ws, Component::kRouter);
  out.add(prefix + "w_mem_pkm", w_mem_pkm, Component::kRouter);
}

Tensor chunk_summarize(const Tensor& h, std::size_t chunk_size) {
  if (h.rank() != 2 || h.dim(0) == 0) throw ShapeError("chunk_summarize: expected [L x d], L >= 1");
  return ops::chunk_mean(h, chunk_size);
}

RouterDecision route(const Tensor& summaries, const RouterParams& params, double tau,
                     bool with_moe) {
  RouterDecision dec;
  dec.r = ops::linear(ops::silu(ops::linear(summaries, params.w1, params.b1)), params.w2,
                      params.b2);
  if (with_moe) dec.moe = route_chunks(dec.r, params.w_moe);
  dec.p_sga = gate_logit(dec.r, params.w_sga);
  dec.sga_on.resize(dec.p_sga.numel());
  for (std::size_t c = 0; c < dec.sga_on.size(); ++c) dec.sga_on[c] = dec.p_sga.at(c) > tau;
  dec.beta_ws = gate_logit(dec.r, params.w_mem_ws);
  dec.beta_pkm = gate_logit(dec.r, params.w_mem_pkm);
  return dec;
}

// ---- tri-path block ----

void BlockParams::collect(const std::string& prefix, ParamList& out) const {
  out.add(prefix + "ln_gain", ln_gain, Component::kBackbone);
  out.add(prefix + "ln_bias", ln_bias, Component::kBackbone);
  out.add(prefix + "g1", g1, Component::kBackbone);
  out.add(prefix + "g2", g2, Component::kSga);
  out.add(prefix + "g3", g3, Component::kMoe);
  ssm.collect(prefix + "ssm.", out);
  if (has_sga) sga.collect(prefix + "sga.", out);
  if (has_moe) moe.collect(prefix + "moe.", out, Component::kMoe);
}

Tensor tri_path_block(const Tensor& x, const BlockParams& block, const RouterDecision& decision,
                      const BlockOptions& options) {
  const std::size_t len = x.dim(0);
  const Tensor ln = ops::layer_norm(x, block.ln_gain, block.ln_bias);
  Tensor out = ops::add(x, ops::mul(ssm_scan(ln, block.ssm), block.g1));

  if (block.has_sga && options.sga) {
    const std::vector<std::size_t> token_chunk = chunk_index(len, options.chunk_size);
    std::vector<std::size_t> rows;
    for (std::size_t t = 0; t < len; ++t) {
      if (options.training || decision.sga_on.at(token_chunk[t])) rows.push_back(t);
    }
    if (!rows.empty()) {
      const SgaLayerParams& p = block.sga;
      const Tensor scores = ops::reshape(
          ops::matmul(ln, ops::reshape(p.saliency_proj, {p.d, 1})), {len});
      const AttentionPattern pattern = sga_causal_pattern(scores.data(), p.window, p.max_globals,
                                                          rows, p.n_heads);
      const bool all_rows = rows.size() == len;
      Tensor a = sga_attend(ln, p, all_rows ? std::span<const std::size_t>() : rows, pattern,
                            scores);
      std::vector<std::size_t> row_chunk(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) row_chunk[i] = token_chunk[rows[i]];
      a = ops::scale_rows(a, per_token(decision.p_sga, row_chunk));
      if (!all_rows) a = ops::index_add_rows(len, a, rows);
      out = ops::add(out, ops::mul(a, block.g2));
    }
  }

  if (block.has_moe && options.moe) {
    out = ops::add(out, ops::mul(moe_forward(ln, block.moe, decision.moe), block.g3));
  }
  return out;
}

// ---- Hydra ----

HydraModel HydraModel::init(const ModelConfig& config) {
  config.validate();
  HydraModel m;
  m.config_ = config;
  const std::size_t d = config.d;
  Rng rng = Rng::stream(config.seed, "hydra-init");

  m.embed = param_normal({config.vocab, d}, kEmbedStd, rng);
  m.pos = param_normal({config.max_len, d}, kEmbedStd, rng);
  m.router = RouterParams::init(d, config.router_dim, config.n_experts, rng);
  m.blocks.resize(config.n_blocks);
  for (std::size_t b = 0; b < config.n_blocks; ++b) {
    BlockParams& blk = m.blocks[b];
    blk.ln_gain = param_full({d}, 1.0);
    blk.ln_bias = param_full({d}, 0.0);
    blk.g1 = param_full({1}, 1.0);
    blk.g2 = param_full({1}, 0.0);
    blk.g3 = param_full({1}, 0.0);
    blk.ssm = SsmLayerParams::init(d, rng);
    blk.has_sga = config.has_sga(b);
    if (blk.has_sga) {
      blk.sga = SgaLayerParams::init(d, config.n_heads, config.window, config.max_globals, rng);
    }
    blk.has_moe = config.has_moe(b);
    if (blk.has_moe) {
      blk.moe = ExpertPool::init(config.n_experts, d, config.expert_hidden, config.chunk_size, rng);
    }
  }
  // Memory outputs start at zero so the initial network is the SSM stack.
  if (config.use_workspace) {
    m.workspace = WorkspaceParams::init(d, config.ws_rank, config.ws_slots, config.ws_active,
                                        config.ws_rank, rng);
    m.workspace.read_v = param_full({config.ws_rank, d}, 0.0);
  }
  if (config.use_pkm) {
    m.pkm = PkmStore::init(d, config.pkm_n, config.pkm_dk, d, config.pkm_top_t, config.pkm_keep,
                           rng);
    m.pkm.value_proj = param_full({d, d}, 0.0);
  }
  m.final_gain = param_full({d}, 1.0);
  m.final_bias = param_full({d}, 0.0);

  ParamList& ps = m.params_;
  ps.add("embed", m.embed, Component::kEmbedding);
  ps.add("pos", m.pos, Component::kEmbedding);
  m.router.collect("router.", ps);
  for (std::size_t b = 0; b < m.blocks.size(); ++b) {
    m.blocks[b].collect("block" + std::to_string(b) + ".", ps);
  }
  if (config.use_workspace) m.workspace.collect("workspace.", ps);
  if (config.use_pkm) m.pkm.collect("pkm.", ps);
  ps.add("final_gain", m.final_gain, Component::kBackbone);
  ps.add("final_bias", m.final_bias, Component::kBackbone);
  return m;
}

ForwardResult HydraModel::forward(std::span<const std::int64_t> tokens,
                                  const ForwardOptions& options) const {
  const ModelConfig& cfg = config_;
  validate_tokens(tokens, cfg);
  const std::size_t len = tokens.size();
  const double tau = options.tau < 0.0 ? cfg.sga_threshold : options.tau;

  const bool run_sga = options.paths.sga && cfg.n_sga_blocks() > 0;
  const bool run_moe = options.paths.moe && cfg.n_moe_blocks() > 0;
  const bool run_ws = options.paths.memory && cfg.use_workspace;
  const bool run_pkm = options.paths.memory && cfg.use_pkm;

  ForwardResult res;
  res.token_chunk = chunk_index(len, cfg.chunk_size);
  Tensor x = embed_tokens(tokens, embed, pos);

  if (run_sga || run_moe || run_ws || run_pkm) {
    // Chunk c is routed on the summary of chunk c - 1 so that no position
    // is influenced by tokens after it.
    const Tensor s = chunk_summarize(x, cfg.chunk_size);
    const std::size_t n_chunks = s.dim(0);
    const Tensor shifted =
        n_chunks == 1 ? router.start
                      : ops::concat_rows({router.start, ops::slice_rows(s, 0, n_chunks - 1)});
    res.decision = route(shifted, router, tau, run_moe);
  }

  BlockOptions bopt;
  bopt.chunk_size = cfg.chunk_size;
  bopt.training = options.training;
  bopt.sga = run_sga;
  bopt.moe = run_moe;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    x = tri_path_block(x, blocks[b], res.decision, bopt);
    if (b + 1 != cfg.memory_after) continue;
    if (run_ws) {
      const Tensor summaries = chunk_summarize(x, cfg.chunk_size);
      const Tensor active = ops::slice_rows(workspace.init_slots, 0, workspace.s_active);
      const Tensor states = workspace_write_prefix(summaries, active, workspace);
      x = workspace_read_chunked(x, states, per_token(res.decision.beta_ws, res.token_chunk),
                                 cfg.chunk_size, workspace);
    }
    if (run_pkm) x = pkm_layer(x, pkm, per_token(res.decision.beta_pkm, res.token_chunk));
  }

  if (run_moe) {
    res.balance_loss = load_balance_loss(
        res.decision.moe.distributions,
        dispatch_fractions(res.decision.moe.expert_ids, cfg.n_experts));
  }
  res.logits = output_head(x, final_gain, final_bias, embed, options.logit_rows);
  return res;
}

Tensor hydra_forward(std::span<const std::int64_t> tokens, const HydraModel& model,
                     const ForwardOptions& options) {
  return model.forward(tokens, options).logits;
}

// ---- dense baseline ----

Tensor dense_causal_attention(const Tensor& h, const Tensor& q_proj, const Tensor& k_proj,
                              const Tensor& v_proj, const Tensor& out_proj, std::size_t n_heads) {
  const Tensor q = ops::matmul(h, q_proj);
  const Tensor k = ops::matmul(h, k_proj);
  const Tensor v = ops::matmul(h, v_proj);
  return ops::matmul(attend(q, k, v, AttentionPattern::causal(h.dim(0), n_heads)), out_proj);
}

TransformerModel TransformerModel::init(const ModelConfig& config) {
  config.validate();
  TransformerModel m;
  m.config_ = config;
  m.ffn_hidden_ =
      config.baseline_ffn_hidden > 0 ? config.baseline_ffn_hidden : matched_ffn_hidden(config);
  const std::size_t d = config.d;
  Rng rng = Rng::stream(config.seed, "baseline-init");

  m.embed = param_normal({config.vocab, d}, kEmbedStd, rng);
  m.pos = param_normal({config.max_len, d}, kEmbedStd, rng);
  m.blocks.resize(config.n_blocks);
  for (auto& blk : m.blocks) {
    blk.ln1_gain = param_full({d}, 1.0);
    blk.ln1_bias = param_full({d}, 0.0);
    blk.q_proj = param_normal({d, d}, inv_sqrt(d), rng);
    blk.k_proj = param_normal({d, d}, inv_sqrt(d), rng);
    blk.v_proj = param_normal({d, d}, inv_sqrt(d), rng);
    blk.out_proj = param_normal({d, d}, inv_sqrt(d), rng);
    blk.ln2_gain = param_full({d}, 1.0);
    blk.ln2_bias = param_full({d}, 0.0);
    blk.ffn = dense_ffn_init(d, m.ffn_hidden_, rng);
  }
  m.final_gain = param_full({d}, 1.0);
  m.final_bias = param_full({d}, 0.0);

  ParamList& ps = m.params_;
  ps.add("embed", m.embed, Component::kEmbedding);
  ps.add("pos", m.pos, Component::kEmbedding);
  for (std::size_t b = 0; b < m.blocks.size(); ++b) {
    const std::string pre = "block" + std::to_string(b) + ".";
    const TransformerBlockParams& blk = m.blocks[b];
    ps.add(pre + "ln1_gain", blk.ln1_gain, Component::kDense);
    ps.add(pre + "ln1_bias", blk.ln1_bias, Component::kDense);
    ps.add(pre + "q_proj", blk.q_proj, Component::kDense);
    ps.add(pre + "k_proj", blk.k_proj, Component::kDense);
    ps.add(pre + "v_proj", blk.v_proj, Component::kDense);
    ps.add(pre + "out_proj", blk.out_proj, Component::kDense);
    ps.add(pre + "ln2_gain", blk.ln2_gain, Component::kDense);
    ps.add(pre + "ln2_bias", blk.ln2_bias, Component::kDense);
    ps.add(pre + "ffn.w1", blk.ffn.w1, Component::kDense);
    ps.add(pre + "ffn.b1", blk.ffn.b1, Component::kDense);
    ps.add(pre + "ffn.w2", blk.ffn.w2, Component::kDense);
    ps.add(pre + "ffn.b2", blk.ffn.b2, Component::kDense);
  }
  ps.add("final_gain", m.final_gain, Component::kDense);
  ps.add("final_bias", m.final_bias, Component::kDense);
  return m;
}

Tensor TransformerModel::forward(std::span<const std::int64_t> tokens,
                                 std::span<const std::size_t> logit_rows) const {
  validate_tokens(tokens, config_);
  Tensor x = embed_tokens(tokens, embed, pos);
  for (const auto& blk : blocks) {
    const Tensor a = ops::layer_norm(x, blk.ln1_gain, blk.ln1_bias);
    x = ops::add(x, dense_causal_attention(a, blk.q_proj, blk.k_proj, blk.v_proj, blk.out_proj,
                                           config_.n_heads));
    x = ops::add(x, expert_ffn(ops::layer_norm(x, blk.ln2_gain, blk.ln2_bias), blk.ffn));
  }
  return output_head(x, final_gain, final_bias, embed, logit_rows);
}

Tensor transformer_forward(std::span<const std::int64_t> tokens, const TransformerModel& model,
                           std::span<const std::size_t> logit_rows) {
  return model.forward(tokens, logit_rows);
}

// ---- parameter accounting ----

std::size_t hydra_param_count(const ModelConfig& c) {
  const std::size_t d = c.d, m = c.router_dim, e = c.n_experts, h = c.expert_hidden;
  std::size_t n = c.vocab * d + c.max_len * d + 2 * d;
  n += d + d * m + m + m * m + m + e * m + 3 * m;
  for (std::size_t b = 0; b < c.n_blocks; ++b) {
    n += 2 * d + 3 + d + 3 * d * d;
    if (c.has_sga(b)) n += 4 * d * d + d;
    if (c.has_moe(b)) n += e * (2 * d * h + h + d);
  }
  if (c.use_workspace) {
    const std::size_t r = c.ws_rank, s = r;
    n += c.ws_slots * s + s * r + d * r + d * s + d * r + s * r + s * d + c.ws_active * r +
         s * r + s * s;
  }
  if (c.use_pkm) n += c.pkm_n * c.pkm_dk + c.pkm_n * c.pkm_n * d + d * c.pkm_dk + 2 * d + d * d;
  return n;
}

std::size_t transformer_param_count(const ModelConfig& c, std::size_t ffn_hidden) {
  const std::size_t d = c.d;
  const std::size_t per_block = 4 * d + 4 * d * d + 2 * d * ffn_hidden + ffn_hidden + d;
  return c.vocab * d + c.max_len * d + 2 * d + c.n_blocks * per_block;
}

std::size_t matched_ffn_hidden(const ModelConfig& c) {
  const double target = static_cast<double>(hydra_param_count(c));
  const double base = static_cast<double>(transformer_param_count(c, 0));
  const double per_unit = static_cast<double>(c.n_blocks * (2 * c.d + 1));
  const double h = std::round((target - base) / per_unit);
  return h < 1.0 ? 1 : static_cast<std::size_t>(h);
}

}  // namespace hydra
