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

// Diagonal input-gated linear recurrence:
//   u_t = x_t W_in,  h_t = a * h_{t-1} + (1 - a) * u_t,  a = sigmoid(decay_logits)
//   y_t = (h_t W_out) * silu(x_t W_gate)
// Projections act on row vectors (x_t is a row of x).

#include <cstddef>
#include <string>

#include "hydra/params.hpp"
#include "hydra/tensor.hpp"

namespace hydra {

struct SsmLayerParams {
  std::size_t d = 0;
  Tensor decay_logits;  // [d]
  Tensor input_proj;    // [d x d]
  Tensor gate_proj;     // [d x d]
  Tensor output_proj;   // [d x d]

  // Decay logits spaced uniformly so a spans [0.9, 0.999].
  static SsmLayerParams init(std::size_t d, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct SsmResult {
  Tensor y;        // [L x d]
  Tensor h_final;  // [1 x d]
};

// Differentiable recurrence h_t = a*h_{t-1} + (1-a)*u_t over rows of u.
// a has d entries; h0 (optional) has d entries. Returns all states [L x d].
Tensor linear_scan(const Tensor& u, const Tensor& a, const Tensor& h0 = Tensor());

Tensor ssm_scan(const Tensor& x, const SsmLayerParams& params);
SsmResult ssm_state_carry(const SsmLayerParams& params, const Tensor& x, const Tensor& h_init);

}  // namespace hydra
