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

#include <cmath>

#include "hydra/errors.hpp"
#include "hydra/ops.hpp"
#include "hydra/train.hpp"

namespace hydra {

OptimState OptimState::create(const ParamList& params, const AdamOptions& options) {
  OptimState s;
  s.options = options;
  for (const Param& p : params.items()) {
    s.m.emplace_back(p.value.numel(), 0.0);
    s.v.emplace_back(p.value.numel(), 0.0);
    s.t.push_back(0);
  }
  return s;
}

void adam_step(ParamList& params, OptimState& state, const std::set<Component>& frozen) {
  auto& items = params.items();
  if (state.m.size() != items.size()) throw UsageError("adam_step: state built for other params");
  for (const Param& p : items) {
    if (!p.value.has_grad()) continue;
    for (double g : p.value.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in " + p.name);
    }
  }
  const AdamOptions& o = state.options;
  for (std::size_t i = 0; i < items.size(); ++i) {
    Param& p = items[i];
    if (!p.value.has_grad() || frozen.count(p.component)) continue;
    if (state.m[i].size() != p.value.numel()) {
      throw UsageError("adam_step: moment shape mismatch for " + p.name);
    }
    const std::size_t t = ++state.t[i];
    const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
    double* w = p.value.ptr();
    const auto g = p.value.grad();
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    for (std::size_t k = 0; k < g.size(); ++k) {
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k];
      if (o.weight_decay > 0.0) w[k] -= o.lr * o.weight_decay * w[k];
      w[k] -= o.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + o.eps);
    }
  }
}

Tensor lm_loss(const Tensor& logits, std::span<const std::int64_t> targets,
               const std::vector<bool>& mask) {
  if (mask.size() != targets.size()) throw ShapeError("lm_loss: mask and targets differ in size");
  std::vector<std::int64_t> masked(targets.begin(), targets.end());
  bool any = false;
  for (std::size_t i = 0; i < masked.size(); ++i) {
    if (!mask[i]) masked[i] = -1;
    any = any || mask[i];
  }
  if (!any) throw UsageError("lm_loss: empty mask");
  return ops::cross_entropy(logits, masked);
}

double perplexity(double mean_loss) { return std::exp(mean_loss); }

// ---- curriculum ----

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::kA: return "A";
    case Phase::kB: return "B";
    case Phase::kC: return "C";
    case Phase::kD: return "D";
  }
  return "?";
}

CurriculumSchedule CurriculumSchedule::even(std::size_t total_steps) {
  CurriculumSchedule s;
  s.b_start = total_steps / 4;
  s.c_start = total_steps / 2;
  s.d_start = 3 * total_steps / 4;
  return s;
}

void CurriculumSchedule::validate() const {
  if (!(b_start <= c_start && c_start <= d_start)) {
    throw UsageError("curriculum: phase boundaries must be ordered A <= B <= C <= D");
  }
}

PhaseFlags curriculum_step(const CurriculumSchedule& s, std::size_t step) {
  s.validate();
  PhaseFlags f;
  f.tau = s.tau_end;
  if (step < s.b_start) {
    f.phase = Phase::kA;
    f.paths = {false, false, false};
    f.frozen = {Component::kSga, Component::kMoe, Component::kRouter, Component::kWorkspace,
                Component::kPkm};
    f.tau = s.tau_start;
  } else if (step < s.c_start) {
    f.phase = Phase::kB;
    f.paths = {true, false, false};
    f.frozen = {Component::kMoe, Component::kWorkspace, Component::kPkm};
    const double span = static_cast<double>(s.c_start - s.b_start);
    const double frac = span > 0.0 ? static_cast<double>(step - s.b_start) / span : 1.0;
    f.tau = s.tau_start + (s.tau_end - s.tau_start) * frac;
  } else if (step < s.d_start) {
    f.phase = Phase::kC;
    f.paths = {true, true, false};
    f.frozen = {Component::kWorkspace, Component::kPkm};
    f.balance_weight = s.balance_weight;
  } else {
    f.phase = Phase::kD;
    f.paths = {true, true, true};
    f.balance_weight = s.balance_weight;
  }
  return f;
}

double mutual_information_bits(const std::vector<std::vector<double>>& joint) {
  double total = 0.0;
  std::vector<double> rows(joint.size(), 0.0), cols;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    if (cols.size() < joint[i].size()) cols.resize(joint[i].size(), 0.0);
    for (std::size_t j = 0; j < joint[i].size(); ++j) {
      if (joint[i][j] < 0.0) throw UsageError("mutual_information_bits: negative count");
      rows[i] += joint[i][j];
      cols[j] += joint[i][j];
      total += joint[i][j];
    }
  }
  if (total <= 0.0) return 0.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    for (std::size_t j = 0; j < joint[i].size(); ++j) {
      if (joint[i][j] <= 0.0) continue;
      const double pij = joint[i][j] / total;
      mi += pij * std::log2(pij * total * total / (rows[i] * cols[j]));
    }
  }
  return mi;
}

}  // namespace hydra
