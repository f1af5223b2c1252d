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

// Forward-pass throughput, allocator peak memory and log-log scaling fits.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hydra/model.hpp"

namespace hydra {

// CSV columns, in order:
//   variant,seq_len,tokens_per_sec,ms_per_token,peak_mem_mb,n_repeats,stddev
struct BenchRecord {
  std::string variant;
  std::size_t seq_len = 0;
  double tokens_per_sec = 0.0;  // seq_len / median repeat time
  double ms_per_token = 0.0;
  double peak_mem_mb = 0.0;     // allocator high-water mark, MiB
  std::size_t n_repeats = 0;
  double stddev = 0.0;          // of per-repeat tokens/sec

  bool operator==(const BenchRecord&) const = default;
};

inline constexpr std::size_t kBenchWarmup = 2;
inline constexpr std::size_t kMinRepeats = 3;

using ForwardFn = std::function<void(std::span<const std::int64_t>)>;

// Times `forward` on seeded uniform tokens: kBenchWarmup discarded runs,
// then `repeats` timed runs with recording suspended. The peak column is
// filled from a separate fresh-counter pass.
BenchRecord measure_throughput(const std::string& variant, const ForwardFn& forward,
                               std::size_t vocab, std::size_t len, std::size_t repeats,
                               std::uint64_t seed = 0);
BenchRecord measure_throughput(const HydraModel& model, std::size_t len, std::size_t repeats,
                               std::uint64_t seed = 0);
BenchRecord measure_throughput(const TransformerModel& model, std::size_t len,
                               std::size_t repeats, std::uint64_t seed = 0);

// High-water mark in MiB of tensor storage during one forward pass,
// parameters included.
double measure_peak_memory(const ForwardFn& forward, std::size_t vocab, std::size_t len);
double measure_peak_memory(const HydraModel& model, std::size_t len);
double measure_peak_memory(const TransformerModel& model, std::size_t len);

// time(L) = coefficient * L^exponent fitted by least squares in log-log space.
struct ScalingFit {
  std::string variant;
  double exponent = 0.0;
  double coefficient = 0.0;
  double r2 = 0.0;
  std::size_t n_points = 0;

  double seconds_at(double len) const;
};

// Fits seconds per sequence (seq_len / tokens_per_sec). Needs >= 4
// distinct lengths, all from one variant.
ScalingFit fit_scaling(const std::vector<BenchRecord>& records);

// Smallest measured L at which `fast` has >= tokens/sec than `slow` and
// keeps it at every larger measured L. Both lists must cover the same lengths.
std::optional<std::size_t> measured_crossover(const std::vector<BenchRecord>& fast,
                                              const std::vector<BenchRecord>& slow);

// Where the two fitted curves intersect: the length above which `fast`
// is predicted quicker. 1 when fast is quicker at every L >= 1 and
// infinity when it never overtakes.
double fitted_crossover(const ScalingFit& fast, const ScalingFit& slow);

// CSV of records (fixed column order, records sorted by variant then
// seq_len) and a plot-data file of series,x,y rows: per-variant
// tokens_per_sec and peak_mem_mb against seq_len plus the fitted curves.
void emit_report(const std::vector<BenchRecord>& records, const std::vector<ScalingFit>& fits,
                 const std::string& csv_path, const std::string& plot_path);
std::string bench_csv(const std::vector<BenchRecord>& records);
std::vector<BenchRecord> parse_bench_csv(const std::string& text);

}  // namespace hydra
