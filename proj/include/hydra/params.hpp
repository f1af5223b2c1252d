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

// Named parameter registry shared by the optimizer, checkpointing and the
// curriculum (which freezes parameters by component).

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "hydra/rng.hpp"
#include "hydra/tensor.hpp"

namespace hydra {

enum class Component { kEmbedding, kBackbone, kSga, kMoe, kRouter, kWorkspace, kPkm, kDense };

std::string_view component_name(Component c);

struct Param {
  std::string name;
  Tensor value;
  Component component;
};

class ParamList {
 public:
  void add(std::string name, Tensor value, Component component);
  const std::vector<Param>& items() const { return items_; }
  std::vector<Param>& items() { return items_; }
  std::size_t numel() const;
  std::size_t numel(Component c) const;
  const Param* find(std::string_view name) const;
  void zero_grads();

 private:
  std::vector<Param> items_;
};

// Leaf parameters: N(0, stddev^2) entries, or a constant fill.
Tensor param_normal(Shape shape, double stddev, Rng& rng);
Tensor param_full(Shape shape, double value);

}  // namespace hydra
