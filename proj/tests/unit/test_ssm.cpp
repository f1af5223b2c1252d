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
#include "hydra/ssm.hpp"
#include "test_util.hpp"

namespace hydra {
namespace {

using testutil::expect_grad;
using testutil::max_abs_diff;
using testutil::random_tensor;
using testutil::weighted_sum;

SsmLayerParams random_params(std::size_t d, Rng& rng) {
  SsmLayerParams p = SsmLayerParams::init(d, rng);
  return p;
}

SsmLayerParams hand_params() {
  SsmLayerParams p;
  p.d = 2;
  p.decay_logits = Tensor::from({2}, {0.0, std::log(3.0)});  // a = [0.5, 0.75]
  p.input_proj = Tensor::from({2, 2}, {1.0, 0.5, -0.5, 1.0});
  p.gate_proj = Tensor::from({2, 2}, {0.2, 0.1, 0.0, -0.3});
  p.output_proj = Tensor::from({2, 2}, {1.0, 2.0, 0.0, 1.0});
  return p;
}

TEST(Ssm, ZeroInputGivesZeroOutput) {
  Rng rng(1);
  const SsmLayerParams p = random_params(8, rng);
  const Tensor y = ssm_scan(Tensor::zeros({5, 8}), p);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Ssm, SingleStepIsScaledInput) {
  Rng rng(2);
  const SsmLayerParams p = random_params(4, rng);
  const Tensor x = random_tensor({1, 4}, rng);
  const SsmResult r = ssm_state_carry(p, x, Tensor());
  const Tensor u = ops::matmul(x, p.input_proj);
  for (std::size_t j = 0; j < 4; ++j) {
    const double a = 1.0 / (1.0 + std::exp(-p.decay_logits.at(j)));
    EXPECT_NEAR(r.h_final.at(j), (1.0 - a) * u.at(j), 1e-15);
  }
}

// Values from a 30-digit unrolled evaluation of the three steps.
TEST(Ssm, ThreeStepHandOracle) {
  const Tensor x = Tensor::from({3, 2}, {1.0, 2.0, -1.0, 0.5, 0.3, -0.7});
  const Tensor y = ssm_scan(x, hand_params());
  const double expected[6] = {0.0,
                              -0.11798145899942044404,
                              0.05627075033594026421,
                              0.085512402170742557807,
                              0.00038624662621455704699,
                              0.032113570626705189};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(y.at(i), expected[i], 1e-15) << i;
}

TEST(Ssm, ZeroInitialStateMatchesScan) {
  Rng rng(3);
  const SsmLayerParams p = random_params(6, rng);
  const Tensor x = random_tensor({9, 6}, rng);
  const Tensor y1 = ssm_scan(x, p);
  const Tensor y2 = ssm_state_carry(p, x, Tensor::zeros({6})).y;
  EXPECT_EQ(max_abs_diff(y1, y2), 0.0);
}

TEST(Ssm, SplitInvarianceAtEverySplitPoint) {
  Rng rng(4);
  const SsmLayerParams p = random_params(8, rng);
  const std::size_t len = 40;
  const Tensor x = random_tensor({len, 8}, rng);
  const Tensor full = ssm_scan(x, p);
  for (std::size_t k = 1; k < len; ++k) {
    const SsmResult left = ssm_state_carry(p, ops::slice_rows(x, 0, k), Tensor());
    const SsmResult right = ssm_state_carry(p, ops::slice_rows(x, k, len), left.h_final);
    const Tensor joined = ops::concat_rows({left.y, right.y});
    EXPECT_LE(max_abs_diff(joined, full), 1e-12) << "split at " << k;
  }
}

TEST(Ssm, HomogeneousSolutionDecaysGeometrically) {
  Rng rng(5);
  const SsmLayerParams p = random_params(4, rng);
  const Tensor v = random_tensor({4}, rng);
  const Tensor h = linear_scan(Tensor::zeros({6, 4}), ops::sigmoid(p.decay_logits), v);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double a = 1.0 / (1.0 + std::exp(-p.decay_logits.at(j)));
      EXPECT_NEAR(h.at(t, j), std::pow(a, static_cast<double>(t + 1)) * v.at(j), 1e-14);
    }
  }
}

TEST(Ssm, DecayInitSpansConfiguredRange) {
  Rng rng(6);
  const SsmLayerParams p = random_params(16, rng);
  const Tensor a = ops::sigmoid(p.decay_logits);
  EXPECT_NEAR(a.at(0), 0.9, 1e-12);
  EXPECT_NEAR(a.at(15), 0.999, 1e-12);
  for (std::size_t i = 1; i < 16; ++i) EXPECT_GT(a.at(i), a.at(i - 1));
}

TEST(Ssm, BoundedStateOnLongScan) {
  Rng rng(7);
  const std::size_t d = 8, len = 16384;
  const SsmLayerParams p = random_params(d, rng);
  const Tensor x = random_tensor({len, d}, rng);
  const Tensor u = ops::matmul(x, p.input_proj);
  const Tensor a = ops::sigmoid(p.decay_logits);
  const Tensor h = linear_scan(u, a);
  // |h| never exceeds the largest |u| seen, since h is a convex mix.
  double umax = 0.0;
  for (double v : u.data()) umax = std::max(umax, std::abs(v));
  for (double v : h.data()) {
    ASSERT_TRUE(std::isfinite(v));
    ASSERT_LE(std::abs(v), umax + 1e-12);
  }
}

TEST(Ssm, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  SsmLayerParams p = random_params(4, rng);
  Tensor x = random_tensor({7, 4}, rng);
  Tensor h0 = random_tensor({4}, rng);
  expect_grad([&]() { return weighted_sum(ssm_state_carry(p, x, h0).y); },
              {x, h0, p.decay_logits, p.input_proj, p.gate_proj, p.output_proj});
}

TEST(Ssm, ShapeMismatchThrows) {
  Rng rng(9);
  const SsmLayerParams p = random_params(4, rng);
  EXPECT_THROW(ssm_scan(Tensor::zeros({3, 5}), p), ShapeError);
  EXPECT_THROW(linear_scan(Tensor::zeros({3, 4}), Tensor::zeros({3})), ShapeError);
}

}  // namespace
}  // namespace hydra
