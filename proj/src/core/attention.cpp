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

#include "hydra/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "hydra/errors.hpp"
#include "hydra/kernels.hpp"
#include "hydra/stats.hpp"

namespace hydra {
namespace {

using kernels::Trans;

constexpr std::size_t kRowBlock = 32;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

const kernels::KernelTable& K() { return kernels::active(); }

struct Dims {
  std::size_t lq, lk, dk, dv, heads, hk, hv;
  double scale;
};

Dims check(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionPattern& p,
           const Tensor& bias) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw ShapeError("attend: q, k, v must be rank 2");
  }
  Dims d{q.dim(0), k.dim(0), q.dim(1), v.dim(1), p.n_heads, 0, 0, 0.0};
  if (k.dim(1) != d.dk || v.dim(0) != d.lk) {
    throw ShapeError("attend: incompatible q " + shape_str(q.shape()) + ", k " +
                     shape_str(k.shape()) + ", v " + shape_str(v.shape()));
  }
  if (d.heads == 0 || d.dk % d.heads != 0 || d.dv % d.heads != 0) {
    throw ShapeError("attend: widths must divide into " + std::to_string(d.heads) + " heads");
  }
  if (p.lo.size() != d.lq || p.hi.size() != d.lq) throw ShapeError("attend: pattern row count");
  const bool has_extra = !p.extra_offsets.empty();
  if (has_extra && p.extra_offsets.size() != d.lq + 1) {
    throw ShapeError("attend: extra_offsets must have rows + 1 entries");
  }
  for (std::size_t i = 0; i < d.lq; ++i) {
    if (p.lo[i] > p.hi[i] || p.hi[i] > d.lk) throw ShapeError("attend: key range out of bounds");
    if (!has_extra) continue;
    for (std::size_t e = p.extra_offsets[i]; e < p.extra_offsets[i + 1]; ++e) {
      const std::size_t j = p.extra_keys.at(e);
      if (j >= d.lk || (j >= p.lo[i] && j < p.hi[i])) {
        throw ShapeError("attend: extra key out of bounds or inside the row's range");
      }
    }
  }
  if (bias.defined() && bias.numel() != d.lk) throw ShapeError("attend: extra_bias needs Lk entries");
  d.hk = d.dk / d.heads;
  d.hv = d.dv / d.heads;
  d.scale = 1.0 / std::sqrt(static_cast<double>(d.hk));
  return d;
}

std::span<const std::size_t> extras_of(const AttentionPattern& p, std::size_t row) {
  if (p.extra_offsets.empty()) return {};
  return {p.extra_keys.data() + p.extra_offsets[row],
          p.extra_offsets[row + 1] - p.extra_offsets[row]};
}

// Union key range of rows [r0, r1) that have a nonempty range.
std::pair<std::size_t, std::size_t> block_span(const AttentionPattern& p, std::size_t r0,
                                               std::size_t r1) {
  std::size_t ulo = std::numeric_limits<std::size_t>::max();
  std::size_t uhi = 0;
  for (std::size_t i = r0; i < r1; ++i) {
    if (p.hi[i] <= p.lo[i]) continue;
    ulo = std::min(ulo, p.lo[i]);
    uhi = std::max(uhi, p.hi[i]);
  }
  if (uhi == 0) return {0, 0};
  return {ulo, uhi};
}

// Fills s [B x n] with scaled logits of the block's rows against keys
// [ulo, ulo + n) for head h, masking keys outside each row's range.
void block_logits(const Dims& d, const AttentionPattern& p, const double* q, const double* k,
                  std::size_t r0, std::size_t rows, std::size_t ulo, std::size_t n, std::size_t h,
                  double* s) {
  K().gemm(Trans::kNo, Trans::kYes, rows, n, d.hk, d.scale, q + r0 * d.dk + h * d.hk, d.dk,
           k + ulo * d.dk + h * d.hk, d.dk, 0.0, s, n);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t i = r0 + r;
    double* sr = s + r * n;
    const std::size_t a = std::clamp(p.lo[i], ulo, ulo + n) - ulo;
    const std::size_t b = std::clamp(p.hi[i], ulo, ulo + n) - ulo;
    const std::size_t lo = p.hi[i] > p.lo[i] ? a : 0;
    const std::size_t hi = p.hi[i] > p.lo[i] ? b : 0;
    for (std::size_t j = 0; j < lo; ++j) sr[j] = kNegInf;
    for (std::size_t j = hi; j < n; ++j) sr[j] = kNegInf;
  }
}

double extra_logit(const Dims& d, const double* q, const double* k, const double* bias,
                   std::size_t i, std::size_t j, std::size_t h) {
  double s = d.scale * K().dot(q + i * d.dk + h * d.hk, k + j * d.dk + h * d.hk, d.hk);
  if (bias != nullptr) s += bias[j];
  return s;
}

}  // namespace

std::size_t AttentionPattern::keys_for(std::size_t row) const {
  std::size_t n = hi[row] - lo[row];
  if (!extra_offsets.empty()) n += extra_offsets[row + 1] - extra_offsets[row];
  return n;
}

std::size_t AttentionPattern::pair_count() const {
  std::size_t total = 0;
  for (std::size_t i = 0; i < rows(); ++i) total += keys_for(i);
  return total;
}

AttentionPattern AttentionPattern::causal(std::size_t len, std::size_t n_heads) {
  AttentionPattern p;
  p.n_heads = n_heads;
  p.lo.assign(len, 0);
  p.hi.resize(len);
  for (std::size_t i = 0; i < len; ++i) p.hi[i] = i + 1;
  return p;
}

AttentionPattern AttentionPattern::causal_window(std::size_t len, std::size_t window,
                                                 std::size_t n_heads) {
  AttentionPattern p;
  p.n_heads = n_heads;
  p.lo.resize(len);
  p.hi.resize(len);
  for (std::size_t i = 0; i < len; ++i) {
    p.lo[i] = i >= window ? i - window : 0;
    p.hi[i] = i + 1;
  }
  return p;
}

AttentionPattern AttentionPattern::full(std::size_t n_queries, std::size_t n_keys,
                                        std::size_t n_heads) {
  AttentionPattern p;
  p.n_heads = n_heads;
  p.lo.assign(n_queries, 0);
  p.hi.assign(n_queries, n_keys);
  return p;
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionPattern& pattern,
              const Tensor& extra_bias) {
  const Dims d = check(q, k, v, pattern, extra_bias);
  Tensor out = Tensor::zeros({d.lq, d.dv});
  auto lse = std::make_shared<Buffer>(d.lq * d.heads, kNegInf);
  const double* qp = q.ptr();
  const double* kp = k.ptr();
  const double* vp = v.ptr();
  const double* bp = extra_bias.defined() ? extra_bias.ptr() : nullptr;
  double* op = out.ptr();
  stats::counters().attention_pairs += pattern.pair_count() * d.heads;

  Buffer s;
  Buffer ex;
  for (std::size_t r0 = 0; r0 < d.lq; r0 += kRowBlock) {
    const std::size_t rows = std::min(kRowBlock, d.lq - r0);
    const auto [ulo, uhi] = block_span(pattern, r0, r0 + rows);
    const std::size_t n = uhi - ulo;
    if (n > 0 && s.size() < rows * n) s.resize(rows * n);
    for (std::size_t h = 0; h < d.heads; ++h) {
      if (n > 0) block_logits(d, pattern, qp, kp, r0, rows, ulo, n, h, s.data());
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t i = r0 + r;
        const auto extras = extras_of(pattern, i);
        const bool has_range = pattern.hi[i] > pattern.lo[i];
        if (!has_range && extras.empty()) {
          if (n > 0) std::fill_n(s.data() + r * n, n, 0.0);
          continue;
        }
        double* sr = n > 0 ? s.data() + r * n : nullptr;
        double mx = has_range ? K().max(sr, n) : kNegInf;
        ex.resize(extras.size());
        for (std::size_t e = 0; e < extras.size(); ++e) {
          ex[e] = extra_logit(d, qp, kp, bp, i, extras[e], h);
          mx = std::max(mx, ex[e]);
        }
        double z = 0.0;
        if (has_range) {
          for (std::size_t j = 0; j < n; ++j) sr[j] -= mx;
          K().exp(sr, sr, n);
          z += K().sum(sr, n);
        }
        for (double& e : ex) {
          e = std::exp(e - mx);
          z += e;
        }
        (*lse)[i * d.heads + h] = mx + std::log(z);
        const double inv = 1.0 / z;
        if (has_range) {
          K().scale(inv, sr, n);
        } else if (n > 0) {
          std::fill_n(sr, n, 0.0);
        }
        double* orow = op + i * d.dv + h * d.hv;
        for (std::size_t e = 0; e < extras.size(); ++e) {
          K().axpy(ex[e] * inv, vp + extras[e] * d.dv + h * d.hv, orow, d.hv);
        }
      }
      if (n > 0) {
        K().gemm(Trans::kNo, Trans::kNo, rows, d.hv, n, 1.0, s.data(), n,
                 vp + ulo * d.dv + h * d.hv, d.dv, 1.0, op + r0 * d.dv + h * d.hv, d.dv);
      }
    }
  }
  detail::check_finite(out, "attend");

  if (detail::should_record({&q, &k, &v, &extra_bias})) {
    std::vector<Tensor> inputs{q, k, v};
    if (extra_bias.defined()) inputs.push_back(extra_bias);
    detail::record(inputs, out, [q, k, v, extra_bias, out, pattern, lse, d]() mutable {
      const double* qp = q.ptr();
      const double* kp = k.ptr();
      const double* vp = v.ptr();
      const double* bp = extra_bias.defined() ? extra_bias.ptr() : nullptr;
      const double* op = out.ptr();
      const double* go = out.grad().data();
      double* gq = q.requires_grad() ? q.ensure_grad().data() : nullptr;
      double* gk = k.requires_grad() ? k.ensure_grad().data() : nullptr;
      double* gv = v.requires_grad() ? v.ensure_grad().data() : nullptr;
      double* gb = bp != nullptr && extra_bias.requires_grad() ? extra_bias.ensure_grad().data()
                                                                 : nullptr;
      Buffer s, dp, delta(kRowBlock);
      for (std::size_t r0 = 0; r0 < d.lq; r0 += kRowBlock) {
        const std::size_t rows = std::min(kRowBlock, d.lq - r0);
        const auto [ulo, uhi] = block_span(pattern, r0, r0 + rows);
        const std::size_t n = uhi - ulo;
        if (n > 0 && s.size() < rows * n) {
          s.resize(rows * n);
          dp.resize(rows * n);
        }
        for (std::size_t h = 0; h < d.heads; ++h) {
          for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t i = r0 + r;
            delta[r] = K().dot(go + i * d.dv + h * d.hv, op + i * d.dv + h * d.hv, d.hv);
          }
          if (n > 0) {
            block_logits(d, pattern, qp, kp, r0, rows, ulo, n, h, s.data());
            for (std::size_t r = 0; r < rows; ++r) {
              const std::size_t i = r0 + r;
              double* sr = s.data() + r * n;
              const double l = lse->at(i * d.heads + h);
              if (pattern.hi[i] <= pattern.lo[i] || l == kNegInf) {
                std::fill_n(sr, n, 0.0);
                continue;
              }
              for (std::size_t j = 0; j < n; ++j) sr[j] -= l;
              K().exp(sr, sr, n);
            }
            // dP = dO V^T
            K().gemm(Trans::kNo, Trans::kYes, rows, n, d.hv, 1.0, go + r0 * d.dv + h * d.hv,
                     d.dv, vp + ulo * d.dv + h * d.hv, d.dv, 0.0, dp.data(), n);
            if (gv != nullptr) {
              K().gemm(Trans::kYes, Trans::kNo, n, d.hv, rows, 1.0, s.data(), n,
                       go + r0 * d.dv + h * d.hv, d.dv, 1.0, gv + ulo * d.dv + h * d.hv, d.dv);
            }
            for (std::size_t r = 0; r < rows; ++r) {
              double* pr = s.data() + r * n;
              double* dr = dp.data() + r * n;
              for (std::size_t j = 0; j < n; ++j) dr[j] = pr[j] * (dr[j] - delta[r]);
            }
            if (gq != nullptr) {
              K().gemm(Trans::kNo, Trans::kNo, rows, d.hk, n, d.scale, dp.data(), n,
                       kp + ulo * d.dk + h * d.hk, d.dk, 1.0, gq + r0 * d.dk + h * d.hk, d.dk);
            }
            if (gk != nullptr) {
              K().gemm(Trans::kYes, Trans::kNo, n, d.hk, rows, d.scale, dp.data(), n,
                       qp + r0 * d.dk + h * d.hk, d.dk, 1.0, gk + ulo * d.dk + h * d.hk, d.dk);
            }
          }
          for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t i = r0 + r;
            const double l = lse->at(i * d.heads + h);
            if (l == kNegInf) continue;
            const double* gor = go + i * d.dv + h * d.hv;
            for (std::size_t j : extras_of(pattern, i)) {
              const double pe = std::exp(extra_logit(d, qp, kp, bp, i, j, h) - l);
              const double dpe = K().dot(gor, vp + j * d.dv + h * d.hv, d.hv);
              const double ds = pe * (dpe - delta[r]);
              if (gv != nullptr) K().axpy(pe, gor, gv + j * d.dv + h * d.hv, d.hv);
              if (gq != nullptr) {
                K().axpy(d.scale * ds, kp + j * d.dk + h * d.hk, gq + i * d.dk + h * d.hk, d.hk);
              }
              if (gk != nullptr) {
                K().axpy(d.scale * ds, qp + i * d.dk + h * d.hk, gk + j * d.dk + h * d.hk, d.hk);
              }
              if (gb != nullptr) gb[j] += ds;
            }
          }
        }
      }
    });
  }
  return out;
}

std::vector<std::pair<std::size_t, double>> attention_weights(const Tensor& q, const Tensor& k,
                                                              const AttentionPattern& pattern,
                                                              std::size_t row, std::size_t head,
                                                              const Tensor& extra_bias) {
  const Dims d = check(q, k, k, pattern, extra_bias);
  if (row >= d.lq || head >= d.heads) throw UsageError("attention_weights: row/head out of range");
  const double* bp = extra_bias.defined() ? extra_bias.ptr() : nullptr;
  std::vector<std::pair<std::size_t, double>> w;
  for (std::size_t j = pattern.lo[row]; j < pattern.hi[row]; ++j) {
    w.emplace_back(j, extra_logit(d, q.ptr(), k.ptr(), nullptr, row, j, head));
  }
  for (std::size_t j : extras_of(pattern, row)) {
    w.emplace_back(j, extra_logit(d, q.ptr(), k.ptr(), bp, row, j, head));
  }
  if (w.empty()) return w;
  double mx = w.front().second;
  for (const auto& e : w) mx = std::max(mx, e.second);
  double z = 0.0;
  for (auto& e : w) z += (e.second = std::exp(e.second - mx));
  for (auto& e : w) e.second /= z;
  return w;
}

}  // namespace hydra
