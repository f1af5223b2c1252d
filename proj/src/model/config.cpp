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

#include "hydra/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "hydra/errors.hpp"

namespace hydra {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw UsageError("config: bad value '" + value + "' for " + key);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw UsageError("config: bad boolean '" + value + "' for " + key);
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// One accessor table drives set() and to_map().
struct Field {
  const char* key;
  std::function<void(ModelConfig&, const std::string&)> set;
  std::function<std::string(const ModelConfig&)> get;
};

#define HYDRA_SIZE_FIELD(name)                                                          \
  Field {                                                                               \
    #name, [](ModelConfig& c, const std::string& v) {                                   \
      c.name = parse_number<std::size_t>(#name, v);                                     \
    },                                                                                  \
        [](const ModelConfig& c) { return std::to_string(c.name); }                     \
  }
#define HYDRA_BOOL_FIELD(name)                                                          \
  Field {                                                                               \
    #name, [](ModelConfig& c, const std::string& v) { c.name = parse_bool(#name, v); }, \
        [](const ModelConfig& c) { return std::string(c.name ? "true" : "false"); }     \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      HYDRA_SIZE_FIELD(vocab),
      HYDRA_SIZE_FIELD(d),
      HYDRA_SIZE_FIELD(n_blocks),
      HYDRA_SIZE_FIELD(max_len),
      HYDRA_SIZE_FIELD(chunk_size),
      HYDRA_SIZE_FIELD(router_dim),
      HYDRA_SIZE_FIELD(n_experts),
      HYDRA_SIZE_FIELD(expert_hidden),
      HYDRA_SIZE_FIELD(n_heads),
      HYDRA_SIZE_FIELD(window),
      HYDRA_SIZE_FIELD(max_globals),
      HYDRA_SIZE_FIELD(sga_period),
      HYDRA_SIZE_FIELD(moe_period),
      Field{"sga_threshold",
            [](ModelConfig& c, const std::string& v) {
              c.sga_threshold = parse_number<double>("sga_threshold", v);
            },
            [](const ModelConfig& c) { return fmt_double(c.sga_threshold); }},
      HYDRA_SIZE_FIELD(ws_slots),
      HYDRA_SIZE_FIELD(ws_active),
      HYDRA_SIZE_FIELD(ws_rank),
      HYDRA_SIZE_FIELD(pkm_n),
      HYDRA_SIZE_FIELD(pkm_dk),
      HYDRA_SIZE_FIELD(pkm_top_t),
      HYDRA_SIZE_FIELD(pkm_keep),
      HYDRA_SIZE_FIELD(memory_after),
      HYDRA_SIZE_FIELD(baseline_ffn_hidden),
      HYDRA_BOOL_FIELD(use_sga),
      HYDRA_BOOL_FIELD(use_moe),
      HYDRA_BOOL_FIELD(use_workspace),
      HYDRA_BOOL_FIELD(use_pkm),
      Field{"seed",
            [](ModelConfig& c, const std::string& v) {
              c.seed = parse_number<std::uint64_t>("seed", v);
            },
            [](const ModelConfig& c) { return std::to_string(c.seed); }},
  };
  return table;
}

#undef HYDRA_SIZE_FIELD
#undef HYDRA_BOOL_FIELD

}  // namespace

std::size_t ModelConfig::n_sga_blocks() const {
  std::size_t n = 0;
  for (std::size_t b = 0; b < n_blocks; ++b) n += has_sga(b) ? 1 : 0;
  return n;
}

std::size_t ModelConfig::n_moe_blocks() const {
  std::size_t n = 0;
  for (std::size_t b = 0; b < n_blocks; ++b) n += has_moe(b) ? 1 : 0;
  return n;
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw UsageError(std::string("config: ") + msg);
  };
  require(vocab >= 2, "vocab must be >= 2");
  require(d >= 2 && n_blocks >= 1 && max_len >= 1, "d, n_blocks, max_len must be positive");
  require(chunk_size >= 1, "chunk_size must be >= 1");
  require(n_heads >= 1 && d % n_heads == 0, "d must be divisible by n_heads");
  require(window >= 1, "window must be >= 1");
  require(sga_period >= 1 && moe_period >= 1, "periods must be >= 1");
  require(n_experts >= 1 && expert_hidden >= 1 && router_dim >= 1, "MoE sizes must be positive");
  require(sga_threshold > 0.0 && sga_threshold < 1.0, "sga_threshold must lie in (0, 1)");
  require(ws_active >= 1 && ws_active <= ws_slots && ws_rank >= 1, "workspace sizes");
  require(pkm_dk >= 2 && pkm_dk % 2 == 0, "pkm_dk must be even");
  require(pkm_top_t >= 1 && pkm_top_t <= pkm_n, "pkm_top_t must lie in [1, pkm_n]");
  require(pkm_keep >= 1 && pkm_keep <= pkm_top_t * pkm_top_t, "pkm_keep must lie in [1, t^2]");
  require(memory_after >= 1 && memory_after <= n_blocks, "memory_after must lie in [1, n_blocks]");
}

void ModelConfig::set(const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  throw UsageError("config: unknown key '" + key + "'");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  std::map<std::string, std::string> m;
  for (const Field& f : fields()) m[f.key] = f.get(*this);
  return m;
}

std::string ModelConfig::to_text() const {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  for (const auto& [k, v] : parse_key_values(text)) c.set(k, v);
  return c;
}

ModelConfig ModelConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

}  // namespace hydra
