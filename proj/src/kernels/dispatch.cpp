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

#include <atomic>
#include <cstdlib>
#include <string>

#include "hydra/kernels.hpp"

namespace hydra::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* initial_table() {
  const char* env = std::getenv("HYDRA_KERNELS");
  if (env != nullptr && std::string(env) == "scalar") return &detail::scalar_table();
  if (detail::avx2_table() != nullptr && cpu_has_avx2()) return detail::avx2_table();
  return &detail::scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

bool isa_supported(Isa isa) {
  if (isa == Isa::kScalar) return true;
  return detail::avx2_table() != nullptr && cpu_has_avx2();
}

const KernelTable& table_for(Isa isa) {
  if (isa == Isa::kAvx2 && isa_supported(Isa::kAvx2)) return *detail::avx2_table();
  return detail::scalar_table();
}

void set_isa(Isa isa) { current().store(&table_for(isa), std::memory_order_relaxed); }

std::string_view isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

}  // namespace hydra::kernels
