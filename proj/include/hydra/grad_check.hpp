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

// Central-difference gradient checking against the tape.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "hydra/tensor.hpp"

namespace hydra {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t n_checked = 0;
  std::string worst;  // "input[k][i]" of the largest relative error
  bool passed = false;
};

struct GradCheckOptions {
  double h = 1e-6;
  double tol = 1e-4;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-7;
  // Check at most this many evenly spaced entries per input (0 = all).
  std::size_t max_per_input = 0;
};

// f must rebuild its scalar output from the current contents of `inputs`.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options = {});

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h,
                           double tol);

}  // namespace hydra
