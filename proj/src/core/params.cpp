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

#include "hydra/params.hpp"

#include "hydra/errors.hpp"

namespace hydra {

std::string_view component_name(Component c) {
  switch (c) {
    case Component::kEmbedding: return "embedding";
    case Component::kBackbone: return "backbone";
    case Component::kSga: return "sga";
    case Component::kMoe: return "moe";
    case Component::kRouter: return "router";
    case Component::kWorkspace: return "workspace";
    case Component::kPkm: return "pkm";
    case Component::kDense: return "dense";
  }
  return "unknown";
}

void ParamList::add(std::string name, Tensor value, Component component) {
  if (find(name) != nullptr) throw UsageError("duplicate parameter name: " + name);
  value.set_requires_grad(true);
  items_.push_back(Param{std::move(name), std::move(value), component});
}

std::size_t ParamList::numel() const {
  std::size_t n = 0;
  for (const Param& p : items_) n += p.value.numel();
  return n;
}

std::size_t ParamList::numel(Component c) const {
  std::size_t n = 0;
  for (const Param& p : items_) {
    if (p.component == c) n += p.value.numel();
  }
  return n;
}

const Param* ParamList::find(std::string_view name) const {
  for (const Param& p : items_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void ParamList::zero_grads() {
  for (Param& p : items_) p.value.clear_grad();
}

Tensor param_normal(Shape shape, double stddev, Rng& rng) {
  Tensor t = Tensor::uninit(std::move(shape));
  for (double& v : t.data()) v = stddev * rng.normal();
  t.set_requires_grad(true);
  return t;
}

Tensor param_full(Shape shape, double value) { return Tensor::full(std::move(shape), value, true); }

}  // namespace hydra
