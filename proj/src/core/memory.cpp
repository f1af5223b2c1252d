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

#include "hydra/memory.hpp"

namespace hydra::memory {

Counters& counters() {
  thread_local Counters c;
  return c;
}

void reset_peak() { counters().peak_bytes = counters().current_bytes; }

std::size_t current_bytes() { return counters().current_bytes; }

std::size_t peak_bytes() { return counters().peak_bytes; }

namespace detail {

void on_alloc(std::size_t bytes) {
  Counters& c = counters();
  c.current_bytes += bytes;
  ++c.allocations;
  if (c.current_bytes > c.peak_bytes) c.peak_bytes = c.current_bytes;
}

void on_free(std::size_t bytes) {
  Counters& c = counters();
  c.current_bytes = bytes > c.current_bytes ? 0 : c.current_bytes - bytes;
}

}  // namespace detail
}  // namespace hydra::memory
