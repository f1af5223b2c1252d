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

// Model hyperparameters and their plain-text key=value form.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>

namespace hydra {

struct ModelConfig {
  std::size_t vocab = 64;
  std::size_t d = 256;
  std::size_t n_blocks = 12;
  std::size_t max_len = 16384;
  std::size_t chunk_size = 64;
  std::size_t router_dim = 64;
  std::size_t n_experts = 4;
  std::size_t expert_hidden = 1024;
  std::size_t n_heads = 4;
  std::size_t window = 64;
  std::size_t max_globals = 16;
  std::size_t sga_period = 3;  // SGA path in blocks b with (b + 1) % period == 0
  std::size_t moe_period = 2;  // MoE path in blocks b with (b + 1) % period == 0
  double sga_threshold = 0.5;
  std::size_t ws_slots = 32;
  std::size_t ws_active = 8;
  std::size_t ws_rank = 32;
  std::size_t pkm_n = 16;
  std::size_t pkm_dk = 32;
  std::size_t pkm_top_t = 4;
  std::size_t pkm_keep = 4;
  std::size_t memory_after = 6;       // memories apply after this many blocks
  std::size_t baseline_ffn_hidden = 0;  // 0 = solve for a parameter match
  bool use_sga = true;
  bool use_moe = true;
  bool use_workspace = true;
  bool use_pkm = true;
  std::uint64_t seed = 0;

  bool has_sga(std::size_t block) const { return use_sga && (block + 1) % sga_period == 0; }
  bool has_moe(std::size_t block) const { return use_moe && (block + 1) % moe_period == 0; }
  std::size_t n_sga_blocks() const;
  std::size_t n_moe_blocks() const;

  void validate() const;

  // Throws UsageError on unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  static ModelConfig load(const std::string& path);
};

// Parses "key = value" lines; '#' starts a comment. Used for config files.
std::map<std::string, std::string> parse_key_values(const std::string& text);

}  // namespace hydra
