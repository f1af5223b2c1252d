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

#include "hydra/attention.hpp"
#include "hydra/errors.hpp"
#include "hydra/workspace.hpp"
#include "test_util.hpp"

namespace hydra {
namespace {

using testutil::expect_grad;
using testutil::max_abs_diff;
using testutil::random_tensor;
using testutil::weighted_sum;

WorkspaceParams make_params(std::size_t d, std::size_t s_total, std::size_t s_active,
                            std::size_t rank, std::uint64_t seed) {
  Rng rng(seed);
  return WorkspaceParams::init(d, rank, s_total, s_active, rank, rng);
}

TEST(WorkspaceWrite, ZeroValuesLeaveSlotsUnchanged) {
  WorkspaceParams p = make_params(6, 5, 3, 4, 1);
  const Workspace ws = workspace_init(p);
  const Workspace out = workspace_write(Tensor::zeros({3, 6}), ws, p);
  EXPECT_EQ(max_abs_diff(out.slots, ws.slots), 0.0);
}

TEST(WorkspaceWrite, SingleSummaryGetsFullWeight) {
  WorkspaceParams p = make_params(6, 5, 3, 4, 2);
  Rng rng(3);
  const Tensor s = random_tensor({1, 6}, rng);
  const Workspace ws = workspace_init(p);
  const Workspace out = workspace_write(s, ws, p);
  const Tensor v = ops::matmul(s, p.write_v);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t c = 0; c < 4; ++c) {
      const double delta = i < 3 ? v.at(0, c) : 0.0;
      EXPECT_NEAR(out.slots.at(i, c), ws.slots.at(i, c) + delta, 1e-14);
    }
  }
}

TEST(WorkspaceWrite, UpdatesAccumulate) {
  WorkspaceParams p = make_params(6, 4, 4, 4, 4);
  Rng rng(5);
  const Tensor s = random_tensor({3, 6}, rng);
  const Workspace once = workspace_write(s, workspace_init(p), p);
  const Workspace twice = workspace_write(s, once, p);
  EXPECT_GT(max_abs_diff(once.slots, twice.slots), 1e-6);
}

TEST(WorkspaceWrite, StaysFiniteAndMaskBounded) {
  WorkspaceParams p = make_params(8, 32, 8, 8, 6);
  Rng rng(7);
  Workspace ws = workspace_init(p);
  for (int step = 0; step < 200; ++step) {
    ws = workspace_write(random_tensor({4, 8}, rng), ws, p);
    ASSERT_LE(ws.active_count(), p.s_active);
  }
  for (double v : ws.slots.data()) ASSERT_TRUE(std::isfinite(v));
}

TEST(WorkspaceRead, ClosedGateIsExactIdentity) {
  WorkspaceParams p = make_params(6, 5, 3, 4, 8);
  Rng rng(9);
  const Tensor h = random_tensor({7, 6}, rng);
  const Tensor out = workspace_read(h, workspace_init(p), Tensor::zeros({7}), p);
  EXPECT_EQ(max_abs_diff(out, h), 0.0);
}

TEST(WorkspaceRead, OneActiveSlotIgnoresQuery) {
  WorkspaceParams p = make_params(6, 5, 1, 4, 10);
  Rng rng(11);
  const Tensor h = random_tensor({4, 6}, rng);
  const Workspace ws = workspace_init(p);
  const Tensor out = workspace_read(h, ws, Tensor::full({4}, 1.0), p);
  const Tensor v = ops::matmul(ops::slice_rows(ws.slots, 0, 1), p.read_v);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(out.at(t, c), h.at(t, c) + v.at(0, c), 1e-14);
  }
}

TEST(WorkspaceRead, AlignedQueryDominatedByMatchingSlot) {
  WorkspaceParams p = make_params(2, 2, 2, 2, 12);
  p.read_q = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
  p.read_k = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
  p.read_v = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
  Workspace ws = workspace_init(p);
  ws.slots = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
  // Logit gap 7.5 / sqrt(2) > 5.
  const Tensor h = Tensor::from({1, 2}, {7.5, 0.0});
  const auto w = attention_weights(ops::matmul(h, p.read_q), ops::matmul(ws.slots, p.read_k),
                                   AttentionPattern::full(1, 2, 1), 0, 0);
  EXPECT_GT(w[0].second, 0.9);
  const Tensor out = workspace_read(h, ws, Tensor::full({1}, 1.0), p);
  EXPECT_NEAR(out.at(0, 0) - 7.5, w[0].second, 1e-14);
  EXPECT_NEAR(out.at(0, 1), w[1].second, 1e-14);
}

TEST(CompressSegment, SingleActiveSlotCarriesItsProjection) {
  WorkspaceParams p = make_params(6, 4, 1, 4, 13);
  Rng rng(14);
  Workspace ws = workspace_init(p);
  ws = workspace_write(random_tensor({2, 6}, rng), ws, p);
  const Workspace out = compress_segment(ws, p);
  const Tensor expected = ops::matmul(ops::slice_rows(ws.slots, 0, 1), p.pool_v);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(out.slots.at(0, c), expected.at(0, c), 1e-14);
  // Inactive slots are reset to their initial values.
  EXPECT_EQ(max_abs_diff(ops::slice_rows(out.slots, 1, 4), ops::slice_rows(p.init_slots, 1, 4)),
            0.0);
}

TEST(CompressSegment, IdenticalSlotsPoolToTheirProjection) {
  WorkspaceParams p = make_params(6, 3, 2, 4, 15);
  Workspace ws = workspace_init(p);
  ws.slots = Tensor::from({3, 4}, {0.5, -1.0, 2.0, 0.25, 0.5, -1.0, 2.0, 0.25, 9.0, 9.0, 9.0, 9.0});
  const Workspace out = compress_segment(ws, p);
  const Tensor proj = ops::matmul(ops::slice_rows(ws.slots, 0, 1), p.pool_v);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(out.slots.at(i, c), proj.at(0, c), 1e-14);
  }
}

TEST(CompressSegment, NotIdempotent) {
  WorkspaceParams p = make_params(6, 6, 3, 4, 16);
  Rng rng(17);
  Workspace ws = workspace_init(p);
  ws.slots = random_tensor({6, 4}, rng);
  const Workspace once = compress_segment(ws, p);
  const Workspace twice = compress_segment(once, p);
  EXPECT_GT(max_abs_diff(once.slots, twice.slots), 1e-6);
}

TEST(WorkspacePrefix, EachBlockEqualsWriteOfEarlierSummaries) {
  WorkspaceParams p = make_params(6, 5, 3, 4, 18);
  Rng rng(19);
  const Tensor summaries = random_tensor({4, 6}, rng);
  const Tensor active = ops::slice_rows(p.init_slots, 0, 3);
  const Tensor states = workspace_write_prefix(summaries, active, p);
  ASSERT_EQ(states.dim(0), 12u);
  EXPECT_EQ(max_abs_diff(ops::slice_rows(states, 0, 3), active), 0.0);
  for (std::size_t c = 1; c < 4; ++c) {
    const Workspace w = workspace_write(ops::slice_rows(summaries, 0, c), workspace_init(p), p);
    EXPECT_LT(max_abs_diff(ops::slice_rows(states, 3 * c, 3 * c + 3), ops::slice_rows(w.slots, 0, 3)),
              1e-14)
        << "chunk " << c;
  }
}

TEST(WorkspacePrefix, ChunkedReadUsesOwnChunkState) {
  WorkspaceParams p = make_params(6, 5, 3, 4, 20);
  Rng rng(21);
  const std::size_t len = 10, chunk = 4;
  const Tensor h = random_tensor({len, 6}, rng);
  const Tensor beta = random_tensor({len}, rng, 0.0, 1.0);
  const Tensor summaries = ops::chunk_mean(h, chunk);
  const Tensor states =
      workspace_write_prefix(summaries, ops::slice_rows(p.init_slots, 0, 3), p);
  const Tensor out = workspace_read_chunked(h, states, beta, chunk, p);
  for (std::size_t t = 0; t < len; ++t) {
    const std::size_t c = t / chunk;
    Workspace ws = workspace_init(p);
    ws.slots = ops::concat_rows({ops::slice_rows(states, 3 * c, 3 * c + 3),
                                 ops::slice_rows(p.init_slots, 3, 5)});
    const Tensor one = workspace_read(ops::slice_rows(h, t, t + 1), ws,
                                      Tensor::from({1}, {beta.at(t)}), p);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(out.at(t, j), one.at(0, j), 1e-14);
  }
}

TEST(Workspace, GradientsReachEveryProjectionAndSlots) {
  WorkspaceParams p = make_params(4, 4, 3, 3, 22);
  Rng rng(23);
  Tensor h = random_tensor({7, 4}, rng);
  Tensor beta = random_tensor({7}, rng, 0.0, 1.0);
  expect_grad(
      [&]() {
        const Tensor summaries = ops::chunk_mean(h, 3);
        const Tensor states =
            workspace_write_prefix(summaries, ops::slice_rows(p.init_slots, 0, 3), p);
        return weighted_sum(workspace_read_chunked(h, states, beta, 3, p));
      },
      {h, beta, p.init_slots, p.write_q, p.write_k, p.write_v, p.read_q, p.read_k, p.read_v});
  expect_grad(
      [&]() {
        Workspace ws = workspace_init(p);
        return weighted_sum(compress_segment(ws, p).slots);
      },
      {p.init_slots, p.pool_queries, p.pool_k, p.pool_v});
}

TEST(Workspace, InitRejectsBadSizes) {
  Rng rng(24);
  EXPECT_THROW(WorkspaceParams::init(4, 4, 2, 3, 4, rng), UsageError);
  EXPECT_THROW(WorkspaceParams::init(4, 4, 2, 0, 4, rng), UsageError);
}

}  // namespace
}  // namespace hydra
