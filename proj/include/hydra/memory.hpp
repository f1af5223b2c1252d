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

// Instrumented allocation accounting for tensor storage. Every tensor data
// and gradient buffer goes through CountingAllocator, so the high-water mark
// reported here is the peak tensor footprint of this process (not OS RSS).
// Counters are per thread; benchmarks run on a single thread.

#include <cstddef>
#include <new>
#include <vector>

namespace hydra::memory {

struct Counters {
  std::size_t current_bytes = 0;
  std::size_t peak_bytes = 0;
  std::size_t allocations = 0;
};

Counters& counters();

// Starts a fresh measurement window: peak := current.
void reset_peak();
std::size_t current_bytes();
std::size_t peak_bytes();

namespace detail {
void on_alloc(std::size_t bytes);
void on_free(std::size_t bytes);
}  // namespace detail

template <class T>
struct CountingAllocator {
  using value_type = T;

  CountingAllocator() noexcept = default;
  template <class U>
  CountingAllocator(const CountingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    detail::on_alloc(n * sizeof(T));
    return static_cast<T*>(::operator new(n * sizeof(T)));
  }
  void deallocate(T* p, std::size_t n) noexcept {
    detail::on_free(n * sizeof(T));
    ::operator delete(p);
  }

  // Default-initialize on resize/construct so large buffers are not zeroed
  // twice; callers that need zeros pass an explicit value.
  template <class U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(static_cast<Args&&>(args)...);
  }

  template <class U>
  bool operator==(const CountingAllocator<U>&) const noexcept {
    return true;
  }
};

}  // namespace hydra::memory

namespace hydra {
using Buffer = std::vector<double, memory::CountingAllocator<double>>;
}  // namespace hydra
