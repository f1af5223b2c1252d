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

#include "hydra/pkm.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "hydra/errors.hpp"
#include "hydra/kernels.hpp"
#include "hydra/ops.hpp"
#include "hydra/stats.hpp"

namespace hydra {
namespace {

struct Candidate {
  double score;
  std::size_t i, j;
};

// Higher score first; ties go to the lower composite index.
bool ranks_before(const Candidate& a, const Candidate& b, std::size_t n) {
  if (a.score != b.score) return a.score > b.score;
  return a.i * n + a.j < b.i * n + b.j;
}

std::vector<std::size_t> top_sub_keys(const double* s, std::size_t n, std::size_t t) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(t), order.end(),
                    [s](std::size_t a, std::size_t b) { return s[a] > s[b] || (s[a] == s[b] && a < b); });
  order.resize(t);
  return order;
}

// Sub-key scores of one query: s1 [n], s2 [n].
void side_scores(const double* q, const PkmStore& st, double* s1, double* s2) {
  const std::size_t half = st.d_k / 2;
  const auto& kt = kernels::active();
  kt.rows_dot(st.codebook1.ptr(), half, st.n, q, half, s1);
  kt.rows_dot(st.codebook2.ptr(), half, st.n, q + half, half, s2);
}

std::vector<Candidate> select_factorized(const double* q, const PkmStore& st) {
  std::vector<double> s1(st.n), s2(st.n);
  side_scores(q, st, s1.data(), s2.data());
  const auto c1 = top_sub_keys(s1.data(), st.n, st.top_t);
  const auto c2 = top_sub_keys(s2.data(), st.n, st.top_t);
  std::vector<Candidate> cand;
  cand.reserve(st.top_t * st.top_t);
  for (std::size_t i : c1) {
    for (std::size_t j : c2) cand.push_back({s1[i] + s2[j], i, j});
  }
  auto& counters = stats::counters();
  counters.pkm_queries += 1;
  counters.pkm_composites_scored += cand.size();
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(st.keep), cand.end(),
                    [&](const Candidate& a, const Candidate& b) { return ranks_before(a, b, st.n); });
  cand.resize(st.keep);
  return cand;
}

PkmRetrieval finish(const std::vector<Candidate>& sel, const PkmStore& st) {
  PkmRetrieval r;
  double mx = sel.front().score;
  double z = 0.0;
  for (const Candidate& c : sel) {
    r.indices.emplace_back(c.i, c.j);
    r.scores.push_back(c.score);
    r.weights.push_back(std::exp(c.score - mx));
    z += r.weights.back();
  }
  for (double& w : r.weights) w /= z;
  r.value = Tensor::zeros({st.d_v});
  for (std::size_t k = 0; k < sel.size(); ++k) {
    kernels::active().axpy(r.weights[k], st.values.ptr() + (sel[k].i * st.n + sel[k].j) * st.d_v,
                           r.value.ptr(), st.d_v);
  }
  return r;
}

void check_query(const Tensor& q, const PkmStore& st) {
  st.validate();
  if (q.numel() != st.d_k) throw ShapeError("pkm: query must have d_k entries");
}

}  // namespace

PkmStore PkmStore::init(std::size_t d, std::size_t n, std::size_t d_k, std::size_t d_v,
                        std::size_t top_t, std::size_t keep, Rng& rng) {
  PkmStore s;
  s.n = n;
  s.d_k = d_k;
  s.d_v = d_v;
  s.top_t = top_t;
  s.keep = keep;
  const std::size_t half = d_k / 2;
  s.codebook1 = param_normal({n, half}, 1.0 / std::sqrt(static_cast<double>(half)), rng);
  s.codebook2 = param_normal({n, half}, 1.0 / std::sqrt(static_cast<double>(half)), rng);
  s.values = param_normal({n * n, d_v}, 1.0 / std::sqrt(static_cast<double>(d_v)), rng);
  s.query_proj = param_normal({d, d_k}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  s.query_gain = param_full({d}, 1.0);
  s.query_bias = param_full({d}, 0.0);
  s.value_proj = param_normal({d_v, d}, 1.0 / std::sqrt(static_cast<double>(d_v)), rng);
  s.validate();
  return s;
}

void PkmStore::collect(const std::string& prefix, ParamList& out) const {
  out.add(prefix + "codebook1", codebook1, Component::kPkm);
  out.add(prefix + "codebook2", codebook2, Component::kPkm);
  out.add(prefix + "values", values, Component::kPkm);
  out.add(prefix + "query_proj", query_proj, Component::kPkm);
  out.add(prefix + "query_gain", query_gain, Component::kPkm);
  out.add(prefix + "query_bias", query_bias, Component::kPkm);
  out.add(prefix + "value_proj", value_proj, Component::kPkm);
}

void PkmStore::validate() const {
  if (n == 0 || d_k == 0 || d_k % 2 != 0) throw UsageError("pkm: need n >= 1 and even d_k");
  if (top_t == 0 || top_t > n) throw UsageError("pkm: need 1 <= t <= N");
  if (keep == 0 || keep > top_t * top_t) throw UsageError("pkm: need 1 <= K_c <= t^2");
}

PkmRetrieval pkm_query(const Tensor& q, const PkmStore& store) {
  check_query(q, store);
  return finish(select_factorized(q.ptr(), store), store);
}

PkmRetrieval pkm_bruteforce(const Tensor& q, const PkmStore& store) {
  check_query(q, store);
  if (store.n * store.n > 1000000) throw UsageError("pkm_bruteforce: N^2 exceeds 1e6");
  std::vector<double> s1(store.n), s2(store.n);
  side_scores(q.ptr(), store, s1.data(), s2.data());
  std::vector<Candidate> cand;
  cand.reserve(store.n * store.n);
  for (std::size_t i = 0; i < store.n; ++i) {
    for (std::size_t j = 0; j < store.n; ++j) cand.push_back({s1[i] + s2[j], i, j});
  }
  const std::size_t keep = std::min(store.keep, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end(),
                    [&](const Candidate& a, const Candidate& b) { return ranks_before(a, b, store.n); });
  cand.resize(keep);
  return finish(cand, store);
}

Tensor pkm_blend(const Tensor& h, const Tensor& m, const Tensor& beta, const Tensor& w_val) {
  const bool single = h.rank() == 1;
  const Tensor h2 = single ? ops::reshape(h, {1, h.numel()}) : h;
  const Tensor m2 = m.rank() == 1 ? ops::reshape(m, {1, m.numel()}) : m;
  const Tensor out = ops::add(h2, ops::scale_rows(ops::matmul(m2, w_val), beta));
  return single ? ops::reshape(out, {h.numel()}) : out;
}

Tensor pkm_lookup(const Tensor& queries, const PkmStore& store) {
  store.validate();
  if (queries.rank() != 2 || queries.dim(1) != store.d_k) {
    throw ShapeError("pkm_lookup: queries must be [L x d_k]");
  }
  const std::size_t len = queries.dim(0);
  const std::size_t kc = store.keep;
  Tensor out = Tensor::zeros({len, store.d_v});
  auto picks = std::make_shared<std::vector<Candidate>>();
  auto alpha = std::make_shared<std::vector<double>>();
  picks->reserve(len * kc);
  alpha->reserve(len * kc);
  for (std::size_t t = 0; t < len; ++t) {
    const auto sel = select_factorized(queries.ptr() + t * store.d_k, store);
    const PkmRetrieval r = finish(sel, store);
    std::copy_n(r.value.ptr(), store.d_v, out.ptr() + t * store.d_v);
    picks->insert(picks->end(), sel.begin(), sel.end());
    alpha->insert(alpha->end(), r.weights.begin(), r.weights.end());
  }
  if (detail::should_record({&queries, &store.codebook1, &store.codebook2, &store.values})) {
    const Tensor c1 = store.codebook1;
    const Tensor c2 = store.codebook2;
    const Tensor vals = store.values;
    const std::size_t n = store.n;
    const std::size_t half = store.d_k / 2;
    const std::size_t dv = store.d_v;
    detail::record({queries, c1, c2, vals}, out,
                   [queries, c1, c2, vals, out, picks, alpha, len, kc, n, half, dv]() mutable {
                     const auto& kt = kernels::active();
                     const double* g = out.grad().data();
                     double* gq = queries.requires_grad() ? queries.ensure_grad().data() : nullptr;
                     double* g1 = c1.requires_grad() ? c1.ensure_grad().data() : nullptr;
                     double* g2 = c2.requires_grad() ? c2.ensure_grad().data() : nullptr;
                     double* gv = vals.requires_grad() ? vals.ensure_grad().data() : nullptr;
                     std::vector<double> dalpha(kc);
                     for (std::size_t t = 0; t < len; ++t) {
                       const double* gt = g + t * dv;
                       const double* qt = queries.ptr() + t * 2 * half;
                       double mean = 0.0;
                       for (std::size_t k = 0; k < kc; ++k) {
                         const Candidate& c = (*picks)[t * kc + k];
                         const double a = (*alpha)[t * kc + k];
                         const std::size_t row = c.i * n + c.j;
                         dalpha[k] = kt.dot(gt, vals.ptr() + row * dv, dv);
                         mean += a * dalpha[k];
                         if (gv != nullptr) kt.axpy(a, gt, gv + row * dv, dv);
                       }
                       for (std::size_t k = 0; k < kc; ++k) {
                         const Candidate& c = (*picks)[t * kc + k];
                         const double ds = (*alpha)[t * kc + k] * (dalpha[k] - mean);
                         if (gq != nullptr) {
                           kt.axpy(ds, c1.ptr() + c.i * half, gq + t * 2 * half, half);
                           kt.axpy(ds, c2.ptr() + c.j * half, gq + t * 2 * half + half, half);
                         }
                         if (g1 != nullptr) kt.axpy(ds, qt, g1 + c.i * half, half);
                         if (g2 != nullptr) kt.axpy(ds, qt + half, g2 + c.j * half, half);
                       }
                     }
                   });
  }
  return out;
}

Tensor pkm_layer(const Tensor& h, const PkmStore& store, const Tensor& beta) {
  const Tensor normed = ops::layer_norm(h, store.query_gain, store.query_bias);
  const Tensor m = pkm_lookup(ops::matmul(normed, store.query_proj), store);
  return pkm_blend(h, m, beta, store.value_proj);
}

}  // namespace hydra
