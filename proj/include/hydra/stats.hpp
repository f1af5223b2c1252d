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

// Per-thread operation counters used to verify conditional-compute claims
// (how many expert FFNs ran, how many PKM composites were scored).

#include <cstdint>

namespace hydra::stats {

struct Counters {
  std::uint64_t expert_token_evals = 0;  // token x expert FFN applications
  std::uint64_t expert_calls = 0;        // batched expert invocations
  std::uint64_t pkm_queries = 0;
  std::uint64_t pkm_composites_scored = 0;
  std::uint64_t attention_pairs = 0;     // (query, key) logits evaluated
};

Counters& counters();
void reset();

}  // namespace hydra::stats
