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

// Seeded generators for the synthetic task families and a whitespace
// tokenized text corpus. Every generator is a pure function of its
// arguments: the same (params, seed) gives the same sample everywhere.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace hydra {

// A prompt plus supervised positions: logits at target_positions[i] must
// predict targets[i].
struct TaskSample {
  std::vector<std::int64_t> tokens;
  std::vector<std::int64_t> targets;
  std::vector<std::size_t> target_positions;
  std::map<std::string, std::string> meta;

  std::int64_t target() const { return targets.at(0); }
  // Per-position targets (-1 where unsupervised), the form cross_entropy takes.
  std::vector<std::int64_t> dense_targets() const;
};

// Bijective symbol <-> id table; ids follow insertion order.
class VocabSpec {
 public:
  std::int64_t add(const std::string& symbol);
  std::int64_t id(const std::string& symbol) const;  // UsageError if unknown
  bool contains(const std::string& symbol) const { return ids_.count(symbol) != 0; }
  const std::string& symbol(std::int64_t id) const;
  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, std::int64_t> ids_;
};

// ---- implication chains ----
// Clause "x -> y ;" is four tokens; the prompt ends with "? q". The target
// is the terminal consequent reachable from q.

VocabSpec logic_vocab(std::size_t n_vars);
// Distractor implications only link variables off the queried chain.
TaskSample gen_logic_chain(std::size_t n_vars, std::size_t chain_len, std::uint64_t seed,
                           std::size_t n_distractors = 0);

// ---- uniform random tokens (throughput only, no targets) ----

TaskSample gen_random_tokens(std::size_t len, std::size_t vocab, std::uint64_t seed);

// ---- open/closed-book QA over a fixed fact table ----

struct QaOptions {
  std::size_t n_attributes = 4;
  std::size_t n_values = 16;
  std::size_t n_distractor_facts = 1;  // extra facts in open-book prompts
};

struct Fact {
  std::size_t entity, attribute, value;
};

// Fact i is (entity i / n_attributes, attribute i % n_attributes, value
// drawn from a fixed table stream), so every call sees the same table.
std::vector<Fact> fact_table(std::size_t n_facts, const QaOptions& options = {});
VocabSpec qa_vocab(std::size_t n_facts, const QaOptions& options = {});
// Open book: "fact e a v" clauses (the asked fact plus distractors, shuffled)
// then "ask e a". Closed book: "ask e a" only. The seed picks the fact
// independently of the mode.
TaskSample gen_qa_openclosed(std::size_t n_facts, bool open_book, std::uint64_t seed,
                             const QaOptions& options = {});

// ---- distant premise ----
// "key color" at premise_pos, uniform filler elsewhere, "?" as the last
// token; the target is the color.

inline constexpr std::size_t kPremiseFillers = 32;
inline constexpr std::size_t kPremiseColors = 8;
inline constexpr std::size_t kPremiseLen = 2;
inline constexpr std::size_t kPremiseQueryLen = 1;

VocabSpec premise_vocab();
TaskSample gen_distant_premise(std::size_t len, std::size_t premise_pos, std::uint64_t seed);

// ---- multi-domain modular arithmetic ----
// Each problem is "tag_i a op b =" followed by its answer; all problems in
// a sample share one domain. Domain i computes (a op_i b + i / 3) mod base
// with op_i = [+, -, *][i % 3] and its own operand tokens.

inline constexpr std::size_t kDomainBase = 10;
inline constexpr std::size_t kProblemLen = 6;

VocabSpec multidomain_vocab(std::size_t n_domains);
// len >= kProblemLen; the sample holds len / kProblemLen problems.
TaskSample gen_multidomain(std::size_t n_domains, std::size_t len, std::uint64_t seed);
std::int64_t domain_answer(std::size_t domain, std::int64_t a, std::int64_t b);

// ---- plain-text corpus ----

struct TextCorpus {
  VocabSpec vocab;  // id 0 is "<unk>", then words by descending frequency
  std::vector<std::int64_t> ids;

  // Non-overlapping windows of context_len tokens with next-token targets;
  // the very last position of the corpus has no target.
  std::vector<TaskSample> windows(std::size_t context_len) const;
  std::string detokenize(std::span<const std::int64_t> ids) const;
};

// IoError if the file can't be read, InputError if it has no words.
TextCorpus load_text_corpus(const std::string& path, std::size_t max_vocab = 4096);

// ---- splits and sample files ----

enum class Split { kTrain, kEval };

// Train seeds are even and eval seeds odd, so the splits never share a
// sample seed for index < 2^31.
std::uint64_t split_seed(std::uint64_t base, Split split, std::size_t index);

// One sample per line, tab-separated fields:
//   tokens=<ints>  target=<ints>  positions=<ints>  meta=<k:v,k:v>
std::string format_sample(const TaskSample& sample);
TaskSample parse_sample(const std::string& line);  // InputError on malformed lines
void write_samples(const std::string& path, const std::vector<TaskSample>& samples);
std::vector<TaskSample> read_samples(const std::string& path);

}  // namespace hydra
