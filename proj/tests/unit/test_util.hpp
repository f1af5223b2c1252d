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

#include <cstdint>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "hydra/grad_check.hpp"
#include "hydra/ops.hpp"
#include "hydra/rng.hpp"

namespace hydra::testutil {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  Tensor t = Tensor::uninit(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  t.set_requires_grad(requires_grad);
  return t;
}

// Fixed random weights so that every output entry reaches the loss.
inline Tensor weighted_sum(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  Tensor w = random_tensor(y.shape(), rng);
  return ops::sum(ops::mul(y, w));
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

inline void expect_grad(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                        double tol = 1e-4, std::size_t max_per_input = 0,
                        double floor = 1e-7) {
  GradCheckOptions opt;
  opt.tol = tol;
  opt.max_per_input = max_per_input;
  opt.floor = floor;
  const GradCheckReport rep = grad_check(f, std::move(inputs), opt);
  EXPECT_TRUE(rep.passed) << "max rel error " << rep.max_rel_error << " at " << rep.worst << " abs " << rep.max_abs_error;
}

}  // namespace hydra::testutil
