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

#include <gtest/gtest.h>

#include <cmath>

#include "hydra/errors.hpp"
#include "hydra/moe.hpp"
#include "hydra/stats.hpp"
#include "test_util.hpp"

namespace hydra {
namespace {

using testutil::expect_grad;
using testutil::max_abs_diff;
using testutil::random_tensor;
using testutil::weighted_sum;

Tensor column(std::initializer_list<double> logits) {
  return Tensor::from({logits.size(), 1}, logits);
}

TEST(RouteChunk, TwoExpertsAlwaysBothChosen) {
  const MoeRouting r = route_chunk(Tensor::from({1}, {1.0}), column({0.3, -0.4}));
  EXPECT_EQ(r.expert_ids, (std::vector<std::size_t>{0, 1}));
  EXPECT_NEAR(r.weights.at(0), r.full_distribution.at(0), 1e-15);
  EXPECT_NEAR(r.weights.at(1), r.full_distribution.at(1), 1e-15);
}

// Pair-renormalized mass of logit 10 against 0, evaluated to 20 digits.
TEST(RouteChunk, DominantLogitRenormalizedOverPair) {
  const MoeRouting r = route_chunk(Tensor::from({1}, {1.0}), column({10.0, 0.0, 0.0, 0.0}));
  EXPECT_EQ(r.expert_ids, (std::vector<std::size_t>{0, 1}));
  EXPECT_NEAR(r.weights.at(0), 0.99995460213129756561, 1e-15);
  EXPECT_NEAR(r.weights.at(0) + r.weights.at(1), 1.0, 1e-9);
}

TEST(RouteChunk, UniformLogitsTieBreakToLowIndices) {
  const MoeRouting r = route_chunk(Tensor::from({1}, {1.0}), column({0.0, 0.0, 0.0, 0.0}));
  EXPECT_EQ(r.expert_ids, (std::vector<std::size_t>{0, 1}));
  EXPECT_DOUBLE_EQ(r.weights.at(0), 0.5);
  EXPECT_DOUBLE_EQ(r.weights.at(1), 0.5);
}

TEST(RouteChunk, PermutingExpertRowsPermutesSelection) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor r = random_tensor({6}, rng);
    const Tensor w = random_tensor({5, 6}, rng);
    std::vector<std::size_t> perm = {3, 0, 4, 1, 2};  // new row i is old row perm[i]
    const Tensor wp = ops::gather_rows(w, perm);
    const MoeRouting a = route_chunk(r, w);
    const MoeRouting b = route_chunk(r, wp);
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_EQ(perm[b.expert_ids[j]], a.expert_ids[j]);
      EXPECT_DOUBLE_EQ(b.weights.at(j), a.weights.at(j));
    }
  }
}

TEST(MoeForward, SingleExpertIsDenseFfn) {
  Rng rng(2);
  const ExpertPool pool = ExpertPool::init(1, 6, 10, 4, rng);
  const Tensor x = random_tensor({9, 6}, rng);
  std::vector<MoeRouting> routes(3, route_chunk(Tensor::from({1}, {0.0}), column({0.0})));
  const Tensor got = moe_forward(x, pool, routes);
  EXPECT_LT(max_abs_diff(got, expert_ffn(x, pool.experts[0])), 1e-14);
}

TEST(MoeForward, IdenticalRoutingEqualsWeightedDensePasses) {
  Rng rng(3);
  const ExpertPool pool = ExpertPool::init(4, 6, 10, 4, rng);
  const Tensor x = random_tensor({10, 6}, rng);
  const MoeRouting r = route_chunk(random_tensor({3}, rng), random_tensor({4, 3}, rng));
  const Tensor got = moe_forward(x, pool, std::vector<MoeRouting>(3, r));
  const Tensor y0 = expert_ffn(x, pool.experts[r.expert_ids[0]]);
  const Tensor y1 = expert_ffn(x, pool.experts[r.expert_ids[1]]);
  const Tensor expected =
      ops::add(ops::scale(y0, r.weights.at(0)), ops::scale(y1, r.weights.at(1)));
  EXPECT_LT(max_abs_diff(got, expected), 1e-12);
}

TEST(MoeForward, ZeroInputZeroBiasGivesZero) {
  Rng rng(4);
  ExpertPool pool = ExpertPool::init(4, 6, 10, 4, rng);
  for (auto& e : pool.experts) {
    e.b1 = Tensor::zeros({10});
    e.b2 = Tensor::zeros({6});
  }
  const ChunkRoutes routes = route_chunks(random_tensor({2, 3}, rng), random_tensor({4, 3}, rng));
  const Tensor y = moe_forward(Tensor::zeros({7, 6}), pool, routes);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(MoeForward, TwoExpertEvaluationsPerTokenForAnyPoolSize) {
  Rng rng(5);
  for (std::size_t n_experts : {2u, 4u, 8u}) {
    const ExpertPool pool = ExpertPool::init(n_experts, 6, 8, 4, rng);
    const Tensor x = random_tensor({22, 6}, rng);
    const ChunkRoutes routes =
        route_chunks(random_tensor({6, 3}, rng), random_tensor({n_experts, 3}, rng));
    stats::reset();
    moe_forward(x, pool, routes);
    EXPECT_EQ(stats::counters().expert_token_evals, 2u * 22u) << "E=" << n_experts;
  }
}

TEST(MoeForward, GradientsThroughSoftRoutingWeights) {
  Rng rng(6);
  ExpertPool pool = ExpertPool::init(4, 4, 6, 3, rng);
  Tensor x = random_tensor({8, 4}, rng);
  Tensor r = random_tensor({3, 5}, rng);
  Tensor w = random_tensor({4, 5}, rng);
  Tensor w1 = pool.experts[0].w1;
  Tensor b2 = pool.experts[1].b2;
  GradCheckOptions opt;
  opt.tol = 1e-3;
  const GradCheckReport rep = grad_check(
      [&]() { return weighted_sum(moe_forward(x, pool, route_chunks(r, w))); }, {x, r, w, w1, b2},
      opt);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error << " at " << rep.worst;
}

TEST(LoadBalance, UniformRoutingGivesOne) {
  const Tensor p = Tensor::full({3, 4}, 0.25);
  const Tensor f = Tensor::full({4}, 0.25);
  EXPECT_NEAR(load_balance_loss(p, f).item(), 1.0, 1e-15);
}

TEST(LoadBalance, CollapsedRoutingHandValue) {
  // Both chunks put 0.7 on expert 0 and every assignment goes there:
  // 4 * (0.7 * 1) = 2.8.
  const Tensor p = Tensor::from({2, 4}, {0.7, 0.1, 0.1, 0.1, 0.7, 0.1, 0.1, 0.1});
  const Tensor f = Tensor::from({4}, {1.0, 0.0, 0.0, 0.0});
  EXPECT_NEAR(load_balance_loss(p, f).item(), 2.8, 1e-15);
}

TEST(LoadBalance, SingleExpertAlwaysOne) {
  const Tensor p = Tensor::full({5, 1}, 1.0);
  EXPECT_DOUBLE_EQ(load_balance_loss(p, dispatch_fractions({0, 0, 0}, 1)).item(), 1.0);
}

TEST(LoadBalance, DispatchFractionsCountAssignments) {
  const Tensor f = dispatch_fractions({0, 1, 0, 2, 0, 1}, 4);
  EXPECT_DOUBLE_EQ(f.at(0), 0.5);
  EXPECT_DOUBLE_EQ(f.at(1), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(f.at(2), 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(f.at(3), 0.0);
  EXPECT_THROW(dispatch_fractions({5}, 4), ShapeError);
}

TEST(LoadBalance, GradientReachesRouter) {
  Rng rng(7);
  Tensor r = random_tensor({5, 3}, rng);
  Tensor w = random_tensor({4, 3}, rng);
  expect_grad(
      [&]() {
        const ChunkRoutes routes = route_chunks(r, w);
        return load_balance_loss(routes.distributions, dispatch_fractions(routes.expert_ids, 4));
      },
      {r, w});
}

}  // namespace
}  // namespace hydra
