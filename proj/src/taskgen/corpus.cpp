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
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "hydra/errors.hpp"
#include "hydra/taskgen.hpp"

namespace hydra {
namespace {

std::vector<std::int64_t> parse_ints(const std::string& field, const std::string& line) {
  std::vector<std::int64_t> out;
  const char* p = field.data();
  const char* end = p + field.size();
  while (p < end) {
    while (p < end && *p == ' ') ++p;
    if (p == end) break;
    std::int64_t v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc()) throw InputError("sample: bad integer in '" + line + "'");
    out.push_back(v);
    p = next;
  }
  return out;
}

template <class T>
std::string join_ints(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

TextCorpus load_text_corpus(const std::string& path, std::size_t max_vocab) {
  if (max_vocab < 2) throw UsageError("load_text_corpus: max_vocab must be >= 2");
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus '" + path + "'");
  std::vector<std::string> words;
  std::string w;
  while (in >> w) words.push_back(w);
  if (in.bad()) throw IoError("error reading corpus '" + path + "'");
  if (words.empty()) throw InputError("corpus '" + path + "' has no words");

  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& x : words) ++freq[x];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > max_vocab - 1) ranked.resize(max_vocab - 1);

  TextCorpus c;
  c.vocab.add("<unk>");
  for (const auto& [word, n] : ranked) c.vocab.add(word);
  c.ids.reserve(words.size());
  for (const auto& x : words) c.ids.push_back(c.vocab.contains(x) ? c.vocab.id(x) : 0);
  return c;
}

std::vector<TaskSample> TextCorpus::windows(std::size_t context_len) const {
  if (context_len == 0) throw UsageError("windows: context_len must be > 0");
  std::vector<TaskSample> out;
  const std::size_t n = ids.size() / context_len;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    TaskSample s;
    const std::size_t begin = k * context_len;
    s.tokens.assign(ids.begin() + static_cast<std::ptrdiff_t>(begin),
                    ids.begin() + static_cast<std::ptrdiff_t>(begin + context_len));
    for (std::size_t i = 0; i < context_len && begin + i + 1 < ids.size(); ++i) {
      s.targets.push_back(ids[begin + i + 1]);
      s.target_positions.push_back(i);
    }
    s.meta = {{"task", "text"}, {"vocab", std::to_string(vocab.size())}};
    out.push_back(std::move(s));
  }
  return out;
}

std::string TextCorpus::detokenize(std::span<const std::int64_t> tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += vocab.symbol(tokens[i]);
  }
  return out;
}

// ---- sample files ----

std::string format_sample(const TaskSample& s) {
  std::string meta;
  for (const auto& [k, v] : s.meta) {
    if (k.find_first_of(":,\t\n") != std::string::npos ||
        v.find_first_of(":,\t\n") != std::string::npos) {
      throw UsageError("sample meta may not contain ':', ',', tabs or newlines");
    }
    if (!meta.empty()) meta += ',';
    meta += k + ':' + v;
  }
  return "tokens=" + join_ints(s.tokens) + "\ttarget=" + join_ints(s.targets) +
         "\tpositions=" + join_ints(s.target_positions) + "\tmeta=" + meta;
}

TaskSample parse_sample(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, '\t')) fields.push_back(f);
  const char* names[] = {"tokens=", "target=", "positions=", "meta="};
  if (fields.size() != 4) throw InputError("sample: expected 4 fields in '" + line + "'");
  for (int i = 0; i < 4; ++i) {
    if (fields[i].rfind(names[i], 0) != 0) {
      throw InputError("sample: expected field '" + std::string(names[i]) + "'");
    }
    fields[i].erase(0, std::char_traits<char>::length(names[i]));
  }
  TaskSample s;
  s.tokens = parse_ints(fields[0], line);
  s.targets = parse_ints(fields[1], line);
  for (std::int64_t p : parse_ints(fields[2], line)) {
    if (p < 0 || static_cast<std::size_t>(p) >= s.tokens.size()) {
      throw InputError("sample: target position out of range");
    }
    s.target_positions.push_back(static_cast<std::size_t>(p));
  }
  if (s.targets.size() != s.target_positions.size()) {
    throw InputError("sample: target/position count mismatch");
  }
  std::stringstream ms(fields[3]);
  while (std::getline(ms, f, ',')) {
    const auto colon = f.find(':');
    if (colon == std::string::npos) throw InputError("sample: bad meta entry '" + f + "'");
    s.meta[f.substr(0, colon)] = f.substr(colon + 1);
  }
  return s;
}

void write_samples(const std::string& path, const std::vector<TaskSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (const auto& s : samples) out << format_sample(s) << '\n';
  if (!out) throw IoError("error writing '" + path + "'");
}

std::vector<TaskSample> read_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::vector<TaskSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_sample(line));
  }
  return out;
}

}  // namespace hydra
