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

// Analytic forward-pass cost of the block stacks, itemized by component.
// FLOPs count a multiply-add as 2. Bytes estimate the largest live
// activation set in float64 for a single sequence. The embedding lookup and
// tied output head are identical in both models and reported separately.

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "hydra/config.hpp"

namespace hydra {

struct CostItem {
  std::string component;
  double flops = 0.0;
  double bytes = 0.0;
};

struct CostEstimate {
  std::vector<CostItem> items;
  double flops() const;
  double bytes() const;
  // 0 when the component is absent.
  double flops_of(const std::string& component) const;
};

struct ActiveDecisions {
  double sga_fraction = 1.0;  // share of chunks with the attention path on
  double globals = -1.0;      // global tokens per query; negative: config max
  bool moe = true;
  bool workspace = true;
  bool pkm = true;

  static ActiveDecisions all_off();
};

// Hydra stack at length L. With all_off() only the "ssm" item remains.
CostEstimate cost_model(const ModelConfig& config, double len, const ActiveDecisions& active);

// Dense transformer stack; ffn_hidden 0 means the parameter-matched width.
CostEstimate baseline_cost(const ModelConfig& config, double len, std::size_t ffn_hidden = 0);

double head_flops(const ModelConfig& config, double len);

// Smallest integer L >= 1 at which the baseline estimate is at least
// Hydra's. Infinity if no such L up to 2^40.
double predicted_crossover(const ModelConfig& config, const ActiveDecisions& active,
                           std::size_t ffn_hidden = 0);

}  // namespace hydra
