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

#include <algorithm>
#include <cmath>

#include "hydra/errors.hpp"
#include "hydra/pkm.hpp"
#include "hydra/stats.hpp"
#include "test_util.hpp"

namespace hydra {
namespace {

using testutil::expect_grad;
using testutil::max_abs_diff;
using testutil::random_tensor;
using testutil::weighted_sum;

PkmStore make_store(std::size_t n, std::size_t d_k, std::size_t t, std::size_t keep,
                    std::uint64_t seed, std::size_t d = 6, std::size_t d_v = 5) {
  Rng rng(seed);
  return PkmStore::init(d, n, d_k, d_v, t, keep, rng);
}

bool same_retrieval(const PkmRetrieval& a, const PkmRetrieval& b) {
  return a.indices == b.indices && a.weights == b.weights && max_abs_diff(a.value, b.value) == 0.0;
}

// True when every exhaustive top-K_c composite has both sub-keys inside
// its side's top-t, recomputed here from scratch.
bool guard_holds(const Tensor& q, const PkmStore& st, const PkmRetrieval& exhaustive) {
  const std::size_t half = st.d_k / 2;
  auto side_rank = [&](const Tensor& book, std::size_t off, std::size_t idx) {
    std::vector<double> s(st.n, 0.0);
    for (std::size_t i = 0; i < st.n; ++i) {
      for (std::size_t c = 0; c < half; ++c) s[i] += q.at(off + c) * book.at(i, c);
    }
    std::size_t rank = 0;
    for (std::size_t i = 0; i < st.n; ++i) rank += (s[i] > s[idx] || (s[i] == s[idx] && i < idx));
    return rank;
  };
  for (auto [i, j] : exhaustive.indices) {
    if (side_rank(st.codebook1, 0, i) >= st.top_t || side_rank(st.codebook2, half, j) >= st.top_t) {
      return false;
    }
  }
  return true;
}

TEST(PkmQuery, AllSubKeysCandidatesEqualsExhaustive) {
  const PkmStore st = make_store(6, 8, 6, 4, 1);
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor q = random_tensor({8}, rng);
    EXPECT_TRUE(same_retrieval(pkm_query(q, st), pkm_bruteforce(q, st)));
  }
}

TEST(PkmQuery, OneHotCodebooksRankAlignedCompositeFirst) {
  PkmStore st = make_store(16, 32, 4, 4, 3);
  st.codebook1 = Tensor::zeros({16, 16});
  st.codebook2 = Tensor::zeros({16, 16});
  for (std::size_t i = 0; i < 16; ++i) {
    st.codebook1.ptr()[i * 16 + i] = 1.0;
    st.codebook2.ptr()[i * 16 + i] = 1.0;
  }
  Tensor q = Tensor::zeros({32});
  q.ptr()[3] = 1.0;
  q.ptr()[16 + 7] = 1.0;
  const PkmRetrieval r = pkm_query(q, st);
  EXPECT_EQ(r.indices.front(), (std::pair<std::size_t, std::size_t>{3, 7}));
}

TEST(PkmQuery, SingleKeptCompositeReturnsItsValueRow) {
  const PkmStore st = make_store(8, 8, 3, 1, 4);
  Rng rng(5);
  const Tensor q = random_tensor({8}, rng);
  const PkmRetrieval r = pkm_query(q, st);
  ASSERT_EQ(r.indices.size(), 1u);
  EXPECT_EQ(r.weights[0], 1.0);
  const std::size_t row = r.indices[0].first * 8 + r.indices[0].second;
  for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(r.value.at(c), st.values.at(row, c));
}

TEST(PkmQuery, WeightsAreSoftmaxOverKeptScores) {
  const PkmStore st = make_store(16, 32, 4, 4, 6);
  Rng rng(7);
  const PkmRetrieval r = pkm_query(random_tensor({32}, rng), st);
  double z = 0.0;
  for (double s : r.scores) z += std::exp(s);
  double total = 0.0;
  for (std::size_t k = 0; k < r.scores.size(); ++k) {
    EXPECT_NEAR(r.weights[k], std::exp(r.scores[k]) / z, 1e-14);
    total += r.weights[k];
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(PkmQuery, ScoresAreSumsOfSubKeyProducts) {
  const PkmStore st = make_store(16, 32, 4, 4, 8);
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor q = random_tensor({32}, rng);
    const PkmRetrieval r = pkm_query(q, st);
    for (std::size_t k = 0; k < r.indices.size(); ++k) {
      const auto [i, j] = r.indices[k];
      double s = 0.0;
      for (std::size_t c = 0; c < 16; ++c) {
        s += q.at(c) * st.codebook1.at(i, c) + q.at(16 + c) * st.codebook2.at(j, c);
      }
      EXPECT_NEAR(r.scores[k], s, 1e-12);
    }
  }
}

TEST(PkmQuery, ScoresExactlyTSquaredComposites) {
  const PkmStore st = make_store(16, 32, 4, 4, 10);
  Rng rng(11);
  stats::reset();
  for (int i = 0; i < 25; ++i) pkm_query(random_tensor({32}, rng), st);
  EXPECT_EQ(stats::counters().pkm_queries, 25u);
  EXPECT_EQ(stats::counters().pkm_composites_scored, 25u * 16u);
  stats::reset();
  pkm_lookup(random_tensor({9, 32}, rng), st);
  EXPECT_EQ(stats::counters().pkm_composites_scored, 9u * 16u);
}

TEST(PkmBruteforce, AgreesWheneverGuardHolds) {
  // t < K_c, so the guard sometimes fails.
  const PkmStore st = make_store(16, 8, 2, 3, 12);
  Rng rng(13);
  std::size_t guarded = 0, agree = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Tensor q = random_tensor({8}, rng);
    const PkmRetrieval ex = pkm_bruteforce(q, st);
    const PkmRetrieval fa = pkm_query(q, st);
    if (guard_holds(q, st, ex)) {
      ++guarded;
      EXPECT_TRUE(same_retrieval(ex, fa));
    }
    agree += same_retrieval(ex, fa) ? 1 : 0;
  }
  EXPECT_GT(guarded, 0u);
  EXPECT_GE(agree, guarded);
  RecordProperty("agreement_rate", std::to_string(static_cast<double>(agree) / 1000.0));
}

TEST(PkmBruteforce, AlwaysAgreesWhenTAtLeastKept) {
  const PkmStore st = make_store(16, 32, 4, 4, 14);
  Rng rng(15);
  for (int trial = 0; trial < 1000; ++trial) {
    const Tensor q = random_tensor({32}, rng);
    ASSERT_TRUE(same_retrieval(pkm_query(q, st), pkm_bruteforce(q, st)));
  }
}

TEST(PkmBruteforce, ConstructedDisagreement) {
  // Side 1 scores 10, 9, 8.5; side 2 scores 10, 0, 0. Exhaustive top-3 is
  // (0,0), (1,0), (2,0), but sub-key 2 is outside side 1's top-2.
  PkmStore st = make_store(3, 2, 2, 3, 16);
  st.codebook1 = Tensor::from({3, 1}, {10.0, 9.0, 8.5});
  st.codebook2 = Tensor::from({3, 1}, {10.0, 0.0, 0.0});
  const Tensor q = Tensor::from({2}, {1.0, 1.0});
  const PkmRetrieval ex = pkm_bruteforce(q, st);
  const PkmRetrieval fa = pkm_query(q, st);
  EXPECT_EQ(ex.indices[2], (std::pair<std::size_t, std::size_t>{2, 0}));
  EXPECT_EQ(fa.indices[2], (std::pair<std::size_t, std::size_t>{0, 1}));
  EXPECT_FALSE(guard_holds(q, st, ex));
}

TEST(PkmBruteforce, SingleCompositeStore) {
  const PkmStore st = make_store(1, 4, 1, 1, 17);
  Rng rng(18);
  const Tensor q = random_tensor({4}, rng);
  EXPECT_TRUE(same_retrieval(pkm_query(q, st), pkm_bruteforce(q, st)));
}

TEST(PkmBruteforce, RefusesHugeStores) {
  PkmStore st;
  st.n = 1001;
  st.d_k = 2;
  st.d_v = 1;
  st.top_t = 1;
  st.keep = 1;
  st.codebook1 = Tensor::zeros({1001, 1});
  st.codebook2 = Tensor::zeros({1001, 1});
  EXPECT_THROW(pkm_bruteforce(Tensor::zeros({2}), st), UsageError);
}

TEST(PkmBlend, GateEndpointsAndMidpoint) {
  Rng rng(19);
  const Tensor h = random_tensor({4}, rng);
  const Tensor m = random_tensor({4}, rng);
  Tensor eye = Tensor::zeros({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.ptr()[i * 5] = 1.0;
  const Tensor closed = pkm_blend(h, m, Tensor::from({1}, {0.0}), eye);
  const Tensor open = pkm_blend(h, m, Tensor::from({1}, {1.0}), eye);
  const Tensor half = pkm_blend(h, m, Tensor::from({1}, {0.5}), eye);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(closed.at(i), h.at(i));
    EXPECT_EQ(open.at(i), h.at(i) + m.at(i));
    EXPECT_NEAR(half.at(i), 0.5 * (closed.at(i) + open.at(i)), 1e-15);
  }
}

TEST(PkmLookup, RowsMatchSingleQueries) {
  const PkmStore st = make_store(8, 8, 3, 4, 20);
  Rng rng(21);
  const Tensor qs = random_tensor({6, 8}, rng);
  const Tensor out = pkm_lookup(qs, st);
  for (std::size_t t = 0; t < 6; ++t) {
    const PkmRetrieval r = pkm_query(ops::reshape(ops::slice_rows(qs, t, t + 1), {8}), st);
    for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(out.at(t, c), r.value.at(c), 1e-15);
  }
}

TEST(PkmLookup, GradientsReachQueriesCodebooksAndValues) {
  PkmStore st = make_store(6, 8, 3, 3, 22);
  Rng rng(23);
  Tensor qs = random_tensor({5, 8}, rng);
  expect_grad([&]() { return weighted_sum(pkm_lookup(qs, st)); },
              {qs, st.codebook1, st.codebook2, st.values}, 1e-4, 0, 1e-6);
  Tensor h = random_tensor({5, 6}, rng);
  Tensor beta = random_tensor({5}, rng, 0.0, 1.0);
  expect_grad([&]() { return weighted_sum(pkm_layer(h, st, beta)); },
              {h, beta, st.query_proj, st.query_gain, st.query_bias, st.value_proj});
}

TEST(PkmStore, ValidateRejectsBadSizes) {
  Rng rng(24);
  EXPECT_THROW(PkmStore::init(4, 4, 7, 4, 2, 2, rng), UsageError);
  EXPECT_THROW(PkmStore::init(4, 4, 8, 4, 5, 2, rng), UsageError);
  EXPECT_THROW(PkmStore::init(4, 4, 8, 4, 2, 5, rng), UsageError);
}

}  // namespace
}  // namespace hydra
