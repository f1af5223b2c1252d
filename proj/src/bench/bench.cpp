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

#include "hydra/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "hydra/errors.hpp"
#include "hydra/memory.hpp"
#include "hydra/taskgen.hpp"

namespace hydra {
namespace {

constexpr double kMiB = 1024.0 * 1024.0;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

ForwardFn hydra_fn(const HydraModel& model) {
  return [&model](std::span<const std::int64_t> tokens) {
    ForwardOptions opt;
    opt.logit_rows = {tokens.size() - 1};
    model.forward(tokens, opt);
  };
}

ForwardFn transformer_fn(const TransformerModel& model) {
  return [&model](std::span<const std::int64_t> tokens) {
    const std::size_t last = tokens.size() - 1;
    model.forward(tokens, std::span<const std::size_t>(&last, 1));
  };
}

void check_len(std::size_t len, std::size_t max_len) {
  if (len == 0 || len > max_len) {
    throw UsageError("bench: seq_len " + std::to_string(len) + " outside [1, " +
                     std::to_string(max_len) + "]");
  }
}

}  // namespace

BenchRecord measure_throughput(const std::string& variant, const ForwardFn& forward,
                               std::size_t vocab, std::size_t len, std::size_t repeats,
                               std::uint64_t seed) {
  if (repeats < kMinRepeats) {
    throw UsageError("bench: repeats must be >= " + std::to_string(kMinRepeats));
  }
  const TaskSample sample = gen_random_tokens(len, vocab, seed);
  NoGradScope no_grad;
  for (std::size_t i = 0; i < kBenchWarmup; ++i) forward(sample.tokens);

  std::vector<double> seconds(repeats);
  for (double& s : seconds) {
    const auto t0 = std::chrono::steady_clock::now();
    forward(sample.tokens);
    s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  std::vector<double> sorted = seconds;
  std::sort(sorted.begin(), sorted.end());
  const double median = repeats % 2 ? sorted[repeats / 2]
                                    : 0.5 * (sorted[repeats / 2 - 1] + sorted[repeats / 2]);
  double mean = 0.0;
  for (double s : seconds) mean += static_cast<double>(len) / s;
  mean /= static_cast<double>(repeats);
  double var = 0.0;
  for (double s : seconds) var += std::pow(static_cast<double>(len) / s - mean, 2);

  BenchRecord r;
  r.variant = variant;
  r.seq_len = len;
  r.tokens_per_sec = static_cast<double>(len) / median;
  r.ms_per_token = 1000.0 * median / static_cast<double>(len);
  r.n_repeats = repeats;
  r.stddev = std::sqrt(var / static_cast<double>(repeats - 1));
  r.peak_mem_mb = measure_peak_memory(forward, vocab, len);
  return r;
}

BenchRecord measure_throughput(const HydraModel& model, std::size_t len, std::size_t repeats,
                               std::uint64_t seed) {
  check_len(len, model.config().max_len);
  return measure_throughput("hydra", hydra_fn(model), model.config().vocab, len, repeats, seed);
}

BenchRecord measure_throughput(const TransformerModel& model, std::size_t len,
                               std::size_t repeats, std::uint64_t seed) {
  check_len(len, model.config().max_len);
  return measure_throughput("transformer", transformer_fn(model), model.config().vocab, len,
                            repeats, seed);
}

double measure_peak_memory(const ForwardFn& forward, std::size_t vocab, std::size_t len) {
  const TaskSample sample = gen_random_tokens(len, vocab, 0);
  NoGradScope no_grad;
  memory::reset_peak();
  forward(sample.tokens);
  return static_cast<double>(memory::peak_bytes()) / kMiB;
}

double measure_peak_memory(const HydraModel& model, std::size_t len) {
  check_len(len, model.config().max_len);
  return measure_peak_memory(hydra_fn(model), model.config().vocab, len);
}

double measure_peak_memory(const TransformerModel& model, std::size_t len) {
  check_len(len, model.config().max_len);
  return measure_peak_memory(transformer_fn(model), model.config().vocab, len);
}

// ---- scaling ----

double ScalingFit::seconds_at(double len) const { return coefficient * std::pow(len, exponent); }

ScalingFit fit_scaling(const std::vector<BenchRecord>& records) {
  std::vector<double> xs, ys;
  std::vector<std::size_t> lens;
  for (const auto& r : records) {
    if (r.variant != records.front().variant) throw UsageError("fit_scaling: mixed variants");
    if (r.tokens_per_sec <= 0.0) throw UsageError("fit_scaling: non-positive throughput");
    xs.push_back(std::log(static_cast<double>(r.seq_len)));
    ys.push_back(std::log(static_cast<double>(r.seq_len) / r.tokens_per_sec));
    lens.push_back(r.seq_len);
  }
  std::sort(lens.begin(), lens.end());
  if (std::unique(lens.begin(), lens.end()) - lens.begin() < 4) {
    throw UsageError("fit_scaling: need at least 4 distinct lengths");
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  ScalingFit f;
  f.variant = records.front().variant;
  f.exponent = sxy / sxx;
  f.coefficient = std::exp(my - f.exponent * mx);
  f.r2 = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  f.n_points = xs.size();
  return f;
}

std::optional<std::size_t> measured_crossover(const std::vector<BenchRecord>& fast,
                                              const std::vector<BenchRecord>& slow) {
  std::map<std::size_t, double> a, b;
  for (const auto& r : fast) a[r.seq_len] = r.tokens_per_sec;
  for (const auto& r : slow) b[r.seq_len] = r.tokens_per_sec;
  if (a.size() != b.size()) throw UsageError("measured_crossover: length sets differ");
  std::optional<std::size_t> out;
  for (auto it = a.rbegin(); it != a.rend(); ++it) {
    auto jt = b.find(it->first);
    if (jt == b.end()) throw UsageError("measured_crossover: length sets differ");
    if (it->second < jt->second) break;
    out = it->first;
  }
  return out;
}

double fitted_crossover(const ScalingFit& fast, const ScalingFit& slow) {
  // fast.a L^p < slow.a L^q  <=>  L^(q - p) > fast.a / slow.a
  const double ratio = fast.coefficient / slow.coefficient;
  const double dp = slow.exponent - fast.exponent;
  if (dp <= 0.0) return ratio < 1.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return std::max(1.0, std::pow(ratio, 1.0 / dp));
}

// ---- report files ----

namespace {

std::vector<BenchRecord> sorted_records(const std::vector<BenchRecord>& records) {
  std::vector<BenchRecord> sorted = records;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& x, const auto& y) {
    return x.variant != y.variant ? x.variant < y.variant : x.seq_len < y.seq_len;
  });
  return sorted;
}

}  // namespace

std::string bench_csv(const std::vector<BenchRecord>& records) {
  std::string out = "variant,seq_len,tokens_per_sec,ms_per_token,peak_mem_mb,n_repeats,stddev\n";
  for (const auto& r : sorted_records(records)) {
    out += r.variant + ',' + std::to_string(r.seq_len) + ',' + fmt(r.tokens_per_sec) + ',' +
           fmt(r.ms_per_token) + ',' + fmt(r.peak_mem_mb) + ',' + std::to_string(r.n_repeats) +
           ',' + fmt(r.stddev) + '\n';
  }
  return out;
}

std::vector<BenchRecord> parse_bench_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line != "variant,seq_len,tokens_per_sec,ms_per_token,peak_mem_mb,n_repeats,stddev") {
    throw InputError("bench csv: unexpected header '" + line + "'");
  }
  std::vector<BenchRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw InputError("bench csv: expected 7 columns in '" + line + "'");
    try {
      BenchRecord r;
      r.variant = f[0];
      r.seq_len = std::stoul(f[1]);
      r.tokens_per_sec = std::stod(f[2]);
      r.ms_per_token = std::stod(f[3]);
      r.peak_mem_mb = std::stod(f[4]);
      r.n_repeats = std::stoul(f[5]);
      r.stddev = std::stod(f[6]);
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw InputError("bench csv: bad number in '" + line + "'");
    }
  }
  return out;
}

void emit_report(const std::vector<BenchRecord>& records, const std::vector<ScalingFit>& fits,
                 const std::string& csv_path, const std::string& plot_path) {
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw IoError("cannot write '" + csv_path + "'");
  csv << bench_csv(records);
  if (!csv) throw IoError("error writing '" + csv_path + "'");

  std::ofstream plot(plot_path, std::ios::binary);
  if (!plot) throw IoError("cannot write '" + plot_path + "'");
  const std::vector<BenchRecord> sorted = sorted_records(records);
  plot << "series,x,y\n";
  for (const auto& r : sorted) {
    plot << r.variant << ".tokens_per_sec," << r.seq_len << ',' << fmt(r.tokens_per_sec) << '\n';
  }
  for (const auto& r : sorted) {
    plot << r.variant << ".peak_mem_mb," << r.seq_len << ',' << fmt(r.peak_mem_mb) << '\n';
  }
  for (const auto& f : fits) {
    for (const auto& r : sorted) {
      if (r.variant != f.variant) continue;
      plot << f.variant << ".fit_seconds," << r.seq_len << ','
           << fmt(f.seconds_at(static_cast<double>(r.seq_len))) << '\n';
    }
  }
  if (!plot) throw IoError("error writing '" + plot_path + "'");
}

}  // namespace hydra
