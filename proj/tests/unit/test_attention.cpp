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
#include <vector>

#include "hydra/attention.hpp"
#include "hydra/errors.hpp"
#include "hydra/grad_check.hpp"
#include "hydra/ops.hpp"
#include "hydra/rng.hpp"

namespace hydra {
namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t = Tensor::uninit(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-2.0, 2.0);
  return t;
}

// Direct per-row evaluation over the explicit key list.
std::vector<double> oracle(const Tensor& q, const Tensor& k, const Tensor& v,
                           const AttentionPattern& p, const Tensor& bias) {
  const std::size_t lq = q.dim(0), dk = q.dim(1), dv = v.dim(1), heads = p.n_heads;
  const std::size_t hk = dk / heads, hv = dv / heads;
  std::vector<double> out(lq * dv, 0.0);
  for (std::size_t i = 0; i < lq; ++i) {
    std::vector<std::pair<std::size_t, double>> keys;
    for (std::size_t j = p.lo[i]; j < p.hi[i]; ++j) keys.emplace_back(j, 0.0);
    if (!p.extra_offsets.empty()) {
      for (std::size_t e = p.extra_offsets[i]; e < p.extra_offsets[i + 1]; ++e) {
        const std::size_t j = p.extra_keys[e];
        keys.emplace_back(j, bias.defined() ? bias.at(j) : 0.0);
      }
    }
    if (keys.empty()) continue;
    for (std::size_t h = 0; h < heads; ++h) {
      std::vector<double> s;
      for (auto [j, b] : keys) {
        double dot = 0;
        for (std::size_t c = 0; c < hk; ++c) dot += q.at(i, h * hk + c) * k.at(j, h * hk + c);
        s.push_back(dot / std::sqrt(static_cast<double>(hk)) + b);
      }
      double mx = s[0];
      for (double x : s) mx = std::max(mx, x);
      double z = 0;
      for (double& x : s) z += (x = std::exp(x - mx));
      for (std::size_t n = 0; n < keys.size(); ++n) {
        for (std::size_t c = 0; c < hv; ++c) {
          out[i * dv + h * hv + c] += s[n] / z * v.at(keys[n].first, h * hv + c);
        }
      }
    }
  }
  return out;
}

AttentionPattern mixed_pattern(std::size_t lq, std::size_t lk, Rng& rng) {
  AttentionPattern p;
  p.n_heads = 2;
  p.extra_offsets.push_back(0);
  for (std::size_t i = 0; i < lq; ++i) {
    const std::size_t a = rng.below(lk);
    const std::size_t b = a + rng.below(lk - a + 1);
    p.lo.push_back(i % 7 == 3 ? 0 : a);
    p.hi.push_back(i % 7 == 3 ? 0 : b);
    for (std::size_t j = 0; j < lk; ++j) {
      const bool in_range = j >= p.lo.back() && j < p.hi.back();
      if (!in_range && rng.uniform() < 0.15) p.extra_keys.push_back(j);
    }
    p.extra_offsets.push_back(p.extra_keys.size());
  }
  return p;
}

TEST(Attend, MatchesOracleOnMixedPatterns) {
  Rng rng(21);
  for (std::size_t lq : {1u, 5u, 40u, 70u}) {
    const std::size_t lk = 45;
    Tensor q = random_tensor({lq, 8}, rng);
    Tensor k = random_tensor({lk, 8}, rng);
    Tensor v = random_tensor({lk, 6}, rng);
    Tensor bias = random_tensor({lk}, rng);
    AttentionPattern p = mixed_pattern(lq, lk, rng);
    Tensor out = attend(q, k, v, p, bias);
    auto ref = oracle(q, k, v, p, bias);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.at(i), ref[i], 1e-12);
  }
}

TEST(Attend, DenseCausalMatchesOracle) {
  Rng rng(22);
  const std::size_t len = 64;
  Tensor q = random_tensor({len, 8}, rng);
  Tensor k = random_tensor({len, 8}, rng);
  Tensor v = random_tensor({len, 8}, rng);
  AttentionPattern p = AttentionPattern::causal(len, 4);
  Tensor out = attend(q, k, v, p);
  auto ref = oracle(q, k, v, p, Tensor());
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.at(i), ref[i], 1e-12);
}

TEST(Attend, EmptyRowsGiveZeros) {
  Rng rng(23);
  Tensor q = random_tensor({3, 4}, rng);
  Tensor k = random_tensor({2, 4}, rng);
  AttentionPattern p;
  p.lo = {0, 0, 0};
  p.hi = {0, 2, 0};
  Tensor out = attend(q, k, k, p);
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_EQ(out.at(0, c), 0.0);
    EXPECT_EQ(out.at(2, c), 0.0);
  }
}

TEST(Attend, GradientsMatchFiniteDifferences) {
  Rng rng(24);
  const std::size_t lq = 37, lk = 41;
  Tensor q = random_tensor({lq, 4}, rng);
  Tensor k = random_tensor({lk, 4}, rng);
  Tensor v = random_tensor({lk, 6}, rng);
  Tensor bias = random_tensor({lk}, rng);
  AttentionPattern p = mixed_pattern(lq, lk, rng);
  Tensor w = random_tensor({lq, 6}, rng);
  auto rep = grad_check([&]() { return ops::sum(ops::mul(attend(q, k, v, p, bias), w)); },
                        {q, k, v, bias});
  EXPECT_TRUE(rep.passed) << rep.max_rel_error << " at " << rep.worst;
}

TEST(Attend, WeightsSumToOne) {
  Rng rng(25);
  Tensor q = random_tensor({30, 8}, rng);
  Tensor k = random_tensor({30, 8}, rng);
  AttentionPattern p = mixed_pattern(30, 30, rng);
  for (std::size_t i = 0; i < 30; ++i) {
    auto w = attention_weights(q, k, p, i, 1);
    if (w.empty()) continue;
    double s = 0;
    for (auto& e : w) s += e.second;
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Attend, RejectsExtraInsideRange) {
  Tensor x = Tensor::zeros({2, 2});
  AttentionPattern p;
  p.lo = {0, 0};
  p.hi = {1, 2};
  p.extra_offsets = {0, 1, 1};
  p.extra_keys = {0};
  EXPECT_THROW(attend(x, x, x, p), ShapeError);
}

}  // namespace
}  // namespace hydra
