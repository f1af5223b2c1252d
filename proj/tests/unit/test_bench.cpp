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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hydra/bench.hpp"
#include "hydra/errors.hpp"

namespace hydra {
namespace {

std::vector<BenchRecord> synthetic(const std::string& variant, double a, double p) {
  std::vector<BenchRecord> out;
  for (std::size_t len : {1024u, 2048u, 4096u, 8192u, 16384u}) {
    BenchRecord r;
    r.variant = variant;
    r.seq_len = len;
    const double seconds = a * std::pow(static_cast<double>(len), p);
    r.tokens_per_sec = static_cast<double>(len) / seconds;
    r.ms_per_token = 1000.0 * seconds / static_cast<double>(len);
    r.n_repeats = 5;
    out.push_back(r);
  }
  return out;
}

ModelConfig small_config() {
  ModelConfig c;
  c.vocab = 32;
  c.d = 16;
  c.n_blocks = 2;
  c.max_len = 512;
  c.chunk_size = 16;
  c.router_dim = 8;
  c.expert_hidden = 32;
  c.n_heads = 2;
  c.window = 16;
  c.max_globals = 4;
  c.sga_period = 2;
  c.moe_period = 2;
  c.ws_slots = 8;
  c.ws_active = 4;
  c.ws_rank = 8;
  c.pkm_n = 4;
  c.pkm_dk = 8;
  c.memory_after = 1;
  return c;
}

TEST(FitScaling, PerfectLinearAndQuadratic) {
  const ScalingFit lin = fit_scaling(synthetic("a", 3e-6, 1.0));
  EXPECT_NEAR(lin.exponent, 1.0, 0.01);
  EXPECT_NEAR(lin.r2, 1.0, 1e-12);
  EXPECT_NEAR(lin.coefficient, 3e-6, 1e-15);
  const ScalingFit quad = fit_scaling(synthetic("b", 1e-9, 2.0));
  EXPECT_NEAR(quad.exponent, 2.0, 0.01);
  EXPECT_THROW(fit_scaling({synthetic("a", 1, 1)[0], synthetic("a", 1, 1)[1]}), UsageError);
  auto mixed = synthetic("a", 1, 1);
  mixed.push_back(synthetic("b", 1, 1)[0]);
  EXPECT_THROW(fit_scaling(mixed), UsageError);
}

// Reference throughput columns with a clear sub-quadratic trend, fitted
// independently in double precision: exponents 1.3537789008 and
// 1.7315606440.
TEST(FitScaling, ReferenceThroughputTrends) {
  const std::size_t lens[] = {1024, 2048, 4096, 8192, 16384};
  const double hydra_tps[] = {305136, 400868, 338962, 218846, 121181};
  const double base_tps[] = {290243, 201458, 129811, 72801, 38254};
  std::vector<BenchRecord> h, b;
  for (int i = 0; i < 5; ++i) {
    h.push_back({"hydra", lens[i], hydra_tps[i], 0, 0, 5, 0});
    b.push_back({"transformer", lens[i], base_tps[i], 0, 0, 5, 0});
  }
  const ScalingFit fh = fit_scaling(h), fb = fit_scaling(b);
  EXPECT_NEAR(fh.exponent, 1.3537789008031043, 1e-9);
  EXPECT_NEAR(fb.exponent, 1.7315606439926259, 1e-9);
  EXPECT_GE(fb.exponent, 1.5);
  EXPECT_LE(fb.exponent, 2.0);
  EXPECT_GE(fh.exponent, 1.0);
  EXPECT_LE(fh.exponent, 1.4);
  const auto cross = measured_crossover(h, b);
  ASSERT_TRUE(cross.has_value());
  EXPECT_LE(*cross, 2048u);
}

TEST(Crossover, MeasuredRequiresStayingAhead) {
  auto fast = synthetic("h", 1e-4, 1.0);
  auto slow = synthetic("t", 1e-8, 2.0);
  // slow time at L: 1e-8 L^2 ; fast 1e-4 L -> equal at L = 1e4.
  EXPECT_EQ(measured_crossover(fast, slow), std::optional<std::size_t>(16384));
  fast[4].tokens_per_sec = 1.0;
  EXPECT_EQ(measured_crossover(fast, slow), std::nullopt);
  EXPECT_NEAR(fitted_crossover(fit_scaling(synthetic("h", 1e-4, 1.0)), fit_scaling(slow)), 1e4,
              1e-6);
  EXPECT_EQ(fitted_crossover(fit_scaling(synthetic("h", 1e-9, 1.0)), fit_scaling(slow)), 1.0);
  EXPECT_TRUE(std::isinf(fitted_crossover(fit_scaling(synthetic("h", 1.0, 2.5)), fit_scaling(slow))));
}

TEST(Report, CsvRoundTripAndHeaderOnly) {
  auto recs = synthetic("transformer", 1e-8, 2.0);
  auto h = synthetic("hydra", 1e-5, 1.0);
  recs.insert(recs.end(), h.begin(), h.end());
  recs[0].peak_mem_mb = 12.345678901234567;
  recs[3].stddev = 1.0 / 3.0;
  const auto back = parse_bench_csv(bench_csv(recs));
  ASSERT_EQ(back.size(), recs.size());
  EXPECT_EQ(back.front().variant, "hydra");  // sorted by variant, then length
  for (const auto& r : recs) EXPECT_NE(std::find(back.begin(), back.end(), r), back.end());
  EXPECT_EQ(bench_csv({}), "variant,seq_len,tokens_per_sec,ms_per_token,peak_mem_mb,n_repeats,stddev\n");
  EXPECT_THROW(parse_bench_csv("bad header\n"), InputError);
}

TEST(Report, EmitWritesCsvAndPlotData) {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string csv = (dir / "hydra_bench_test.csv").string();
  const std::string plot = (dir / "hydra_bench_plot.csv").string();
  const auto recs = synthetic("hydra", 1e-5, 1.0);
  emit_report(recs, {fit_scaling(recs)}, csv, plot);
  std::ifstream in(csv);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(parse_bench_csv(ss.str()), recs);
  std::ifstream pin(plot);
  std::string line;
  std::getline(pin, line);
  EXPECT_EQ(line, "series,x,y");
  std::size_t n = 0;
  while (std::getline(pin, line)) ++n;
  EXPECT_EQ(n, 15u);
  std::remove(csv.c_str());
  std::remove(plot.c_str());
  EXPECT_THROW(emit_report(recs, {}, "/nonexistent_dir/x.csv", plot), IoError);
}

TEST(Throughput, RecordInvariantsAndErrors) {
  const HydraModel m = HydraModel::init(small_config());
  const BenchRecord r = measure_throughput(m, 64, 3);
  EXPECT_EQ(r.variant, "hydra");
  EXPECT_EQ(r.n_repeats, 3u);
  EXPECT_GT(r.tokens_per_sec, 0.0);
  EXPECT_NEAR(r.ms_per_token, 1000.0 / r.tokens_per_sec, 1e-9);
  EXPECT_GT(r.peak_mem_mb, 0.0);
  EXPECT_THROW(measure_throughput(m, 64, 1), UsageError);
  EXPECT_THROW(measure_throughput(m, 513, 3), UsageError);
  const BenchRecord one = measure_throughput(m, 1, 3);
  EXPECT_GT(one.tokens_per_sec, 0.0);
  const TransformerModel t = TransformerModel::init(small_config());
  EXPECT_EQ(measure_throughput(t, 32, 3).variant, "transformer");
}

TEST(PeakMemory, ScalesWithWidthAndIsSmallForEmptyWork) {
  ModelConfig c = small_config();
  c.d = 32;
  const double narrow = measure_peak_memory(HydraModel::init(c), 256);
  c.d = 64;
  const double wide = measure_peak_memory(HydraModel::init(c), 256);
  EXPECT_GE(wide / narrow, 1.9);
  const double idle = measure_peak_memory([](std::span<const std::int64_t>) {}, 4, 1);
  EXPECT_LT(idle, 0.01);
}

}  // namespace
}  // namespace hydra
