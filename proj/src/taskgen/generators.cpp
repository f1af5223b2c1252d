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

#include <algorithm>
#include <numeric>

#include "hydra/errors.hpp"
#include "hydra/rng.hpp"
#include "hydra/taskgen.hpp"

namespace hydra {
namespace {

std::string var_name(std::size_t i, std::size_t n_vars) {
  if (n_vars <= 26) return std::string(1, static_cast<char>('A' + i));
  return "v" + std::to_string(i);
}

}  // namespace

std::vector<std::int64_t> TaskSample::dense_targets() const {
  std::vector<std::int64_t> out(tokens.size(), -1);
  for (std::size_t i = 0; i < targets.size(); ++i) out.at(target_positions.at(i)) = targets[i];
  return out;
}

std::int64_t VocabSpec::add(const std::string& symbol) {
  if (contains(symbol)) throw UsageError("vocab: duplicate symbol '" + symbol + "'");
  const auto id = static_cast<std::int64_t>(symbols_.size());
  symbols_.push_back(symbol);
  ids_.emplace(symbol, id);
  return id;
}

std::int64_t VocabSpec::id(const std::string& symbol) const {
  auto it = ids_.find(symbol);
  if (it == ids_.end()) throw UsageError("vocab: unknown symbol '" + symbol + "'");
  return it->second;
}

const std::string& VocabSpec::symbol(std::int64_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
    throw UsageError("vocab: id " + std::to_string(id) + " out of range");
  }
  return symbols_[static_cast<std::size_t>(id)];
}

// ---- logic ----

VocabSpec logic_vocab(std::size_t n_vars) {
  VocabSpec v;
  for (std::size_t i = 0; i < n_vars; ++i) v.add(var_name(i, n_vars));
  v.add("->");
  v.add(";");
  v.add("?");
  return v;
}

TaskSample gen_logic_chain(std::size_t n_vars, std::size_t chain_len, std::uint64_t seed,
                           std::size_t n_distractors) {
  if (chain_len < 1 || n_vars <= chain_len) {
    throw UsageError("gen_logic_chain: need 1 <= chain_len < n_vars");
  }
  const std::size_t off_chain = n_vars - chain_len - 1;
  if (n_distractors > 0 && off_chain < 2) {
    throw UsageError("gen_logic_chain: distractors need two variables off the chain");
  }
  Rng rng(seed);
  std::vector<std::int64_t> vars(n_vars);
  std::iota(vars.begin(), vars.end(), 0);
  rng.shuffle(vars);

  std::vector<std::pair<std::int64_t, std::int64_t>> clauses;
  for (std::size_t i = 0; i < chain_len; ++i) clauses.emplace_back(vars[i], vars[i + 1]);
  for (std::size_t k = 0; k < n_distractors; ++k) {
    const std::size_t a = chain_len + 1 + rng.below(off_chain);
    std::size_t b = chain_len + 1 + rng.below(off_chain - 1);
    if (b >= a) ++b;
    clauses.emplace_back(vars[a], vars[b]);
  }
  rng.shuffle(clauses);

  const auto n = static_cast<std::int64_t>(n_vars);
  const std::int64_t arrow = n, sep = n + 1, query = n + 2;
  TaskSample s;
  for (auto [x, y] : clauses) s.tokens.insert(s.tokens.end(), {x, arrow, y, sep});
  s.tokens.insert(s.tokens.end(), {query, vars[0]});
  s.targets = {vars[chain_len]};
  s.target_positions = {s.tokens.size() - 1};
  s.meta = {{"task", "logic"},
            {"chain_length", std::to_string(chain_len)},
            {"n_vars", std::to_string(n_vars)},
            {"vocab", std::to_string(n_vars + 3)}};
  return s;
}

// ---- random ----

TaskSample gen_random_tokens(std::size_t len, std::size_t vocab, std::uint64_t seed) {
  if (len == 0 || vocab == 0) throw UsageError("gen_random_tokens: len and vocab must be > 0");
  Rng rng(seed);
  TaskSample s;
  s.tokens.resize(len);
  for (auto& t : s.tokens) t = static_cast<std::int64_t>(rng.below(vocab));
  s.meta = {{"task", "random"}, {"vocab", std::to_string(vocab)}};
  return s;
}

// ---- QA ----

std::vector<Fact> fact_table(std::size_t n_facts, const QaOptions& o) {
  if (n_facts == 0 || o.n_attributes == 0 || o.n_values == 0) {
    throw UsageError("fact_table: sizes must be > 0");
  }
  Rng rng = Rng::stream(0, "fact-table");
  std::vector<Fact> out(n_facts);
  for (std::size_t i = 0; i < n_facts; ++i) {
    out[i] = {i / o.n_attributes, i % o.n_attributes, static_cast<std::size_t>(rng.below(o.n_values))};
  }
  return out;
}

VocabSpec qa_vocab(std::size_t n_facts, const QaOptions& o) {
  VocabSpec v;
  const std::size_t n_entities = (n_facts + o.n_attributes - 1) / o.n_attributes;
  for (std::size_t i = 0; i < n_entities; ++i) v.add("e" + std::to_string(i));
  for (std::size_t i = 0; i < o.n_attributes; ++i) v.add("a" + std::to_string(i));
  for (std::size_t i = 0; i < o.n_values; ++i) v.add("val" + std::to_string(i));
  v.add("fact");
  v.add("ask");
  return v;
}

TaskSample gen_qa_openclosed(std::size_t n_facts, bool open_book, std::uint64_t seed,
                             const QaOptions& o) {
  const std::vector<Fact> table = fact_table(n_facts, o);
  const VocabSpec v = qa_vocab(n_facts, o);
  auto fact_tokens = [&](const Fact& f) {
    return std::vector<std::int64_t>{v.id("fact"), v.id("e" + std::to_string(f.entity)),
                                     v.id("a" + std::to_string(f.attribute)),
                                     v.id("val" + std::to_string(f.value))};
  };
  Rng rng(seed);
  const std::size_t asked = rng.below(n_facts);
  // Distractors are drawn from a separate stream so the asked fact does
  // not depend on the mode.
  Rng extra = Rng::stream(seed, "distractors");
  TaskSample s;
  if (open_book) {
    std::vector<std::size_t> shown = {asked};
    for (std::size_t k = 0; k < o.n_distractor_facts && n_facts > 1; ++k) {
      std::size_t other = extra.below(n_facts - 1);
      if (other >= asked) ++other;
      shown.push_back(other);
    }
    extra.shuffle(shown);
    for (std::size_t i : shown) {
      const auto t = fact_tokens(table[i]);
      s.tokens.insert(s.tokens.end(), t.begin(), t.end());
    }
  }
  const Fact& f = table[asked];
  s.tokens.insert(s.tokens.end(), {v.id("ask"), v.id("e" + std::to_string(f.entity)),
                                   v.id("a" + std::to_string(f.attribute))});
  s.targets = {v.id("val" + std::to_string(f.value))};
  s.target_positions = {s.tokens.size() - 1};
  s.meta = {{"task", "qa"},
            {"is_open_book", open_book ? "1" : "0"},
            {"fact", std::to_string(asked)},
            {"vocab", std::to_string(v.size())}};
  return s;
}

// ---- distant premise ----

VocabSpec premise_vocab() {
  VocabSpec v;
  for (std::size_t i = 0; i < kPremiseFillers; ++i) v.add("w" + std::to_string(i));
  for (std::size_t i = 0; i < kPremiseColors; ++i) v.add("color" + std::to_string(i));
  v.add("key");
  v.add("?");
  return v;
}

TaskSample gen_distant_premise(std::size_t len, std::size_t premise_pos, std::uint64_t seed) {
  if (premise_pos + kPremiseLen + kPremiseQueryLen > len) {
    throw UsageError("gen_distant_premise: premise must end before the query");
  }
  const auto key = static_cast<std::int64_t>(kPremiseFillers + kPremiseColors);
  Rng rng(seed);
  const auto color = static_cast<std::int64_t>(kPremiseFillers + rng.below(kPremiseColors));
  TaskSample s;
  s.tokens.resize(len);
  for (auto& t : s.tokens) t = static_cast<std::int64_t>(rng.below(kPremiseFillers));
  s.tokens[premise_pos] = key;
  s.tokens[premise_pos + 1] = color;
  s.tokens[len - 1] = key + 1;
  s.targets = {color};
  s.target_positions = {len - 1};
  s.meta = {{"task", "premise"},
            {"premise_position", std::to_string(premise_pos)},
            {"vocab", std::to_string(kPremiseFillers + kPremiseColors + 2)}};
  return s;
}

// ---- multi-domain arithmetic ----

VocabSpec multidomain_vocab(std::size_t n_domains) {
  VocabSpec v;
  for (std::size_t d = 0; d < n_domains; ++d) {
    v.add("tag" + std::to_string(d));
    for (std::size_t k = 0; k < kDomainBase; ++k) {
      v.add("d" + std::to_string(d) + "_" + std::to_string(k));
    }
  }
  v.add("+");
  v.add("-");
  v.add("*");
  v.add("=");
  return v;
}

std::int64_t domain_answer(std::size_t domain, std::int64_t a, std::int64_t b) {
  const auto base = static_cast<std::int64_t>(kDomainBase);
  std::int64_t r = 0;
  switch (domain % 3) {
    case 0: r = a + b; break;
    case 1: r = a - b; break;
    default: r = a * b; break;
  }
  r += static_cast<std::int64_t>(domain / 3);
  return ((r % base) + base) % base;
}

TaskSample gen_multidomain(std::size_t n_domains, std::size_t len, std::uint64_t seed) {
  if (n_domains < 2 || n_domains > 8) throw UsageError("gen_multidomain: n_domains in [2, 8]");
  if (len < kProblemLen) throw UsageError("gen_multidomain: len < problem length");
  const auto stride = static_cast<std::int64_t>(kDomainBase + 1);
  const auto ops_base = static_cast<std::int64_t>(n_domains) * stride;
  Rng rng(seed);
  const std::size_t domain = rng.below(n_domains);
  const std::int64_t tag = static_cast<std::int64_t>(domain) * stride;
  const std::int64_t op = ops_base + static_cast<std::int64_t>(domain % 3);
  const std::int64_t eq = ops_base + 3;
  TaskSample s;
  for (std::size_t p = 0; p < len / kProblemLen; ++p) {
    const auto a = static_cast<std::int64_t>(rng.below(kDomainBase));
    const auto b = static_cast<std::int64_t>(rng.below(kDomainBase));
    const std::int64_t ans = tag + 1 + domain_answer(domain, a, b);
    s.tokens.insert(s.tokens.end(), {tag, tag + 1 + a, op, tag + 1 + b, eq, ans});
    s.targets.push_back(ans);
    s.target_positions.push_back(s.tokens.size() - 2);
  }
  s.meta = {{"task", "multidomain"},
            {"domain_id", std::to_string(domain)},
            {"vocab", std::to_string(static_cast<std::size_t>(ops_base) + 4)}};
  return s;
}

std::uint64_t split_seed(std::uint64_t base, Split split, std::size_t index) {
  if (index >= (std::size_t{1} << 31)) throw UsageError("split_seed: index too large");
  return (base << 32) + 2 * index + (split == Split::kEval ? 1 : 0);
}

}  // namespace hydra
