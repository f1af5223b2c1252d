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

#include "hydra/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "hydra/errors.hpp"

namespace hydra {

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options) {
  if (options.h < 1e-7 || options.h > 1e-4) {
    throw UsageError("grad_check: step h must lie in [1e-7, 1e-4]");
  }
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.clear_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (Tensor& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
  }

  GradCheckReport report;
  NoGradScope no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& t = inputs[k];
    const std::size_t n = t.numel();
    const std::size_t stride =
        options.max_per_input == 0 || n <= options.max_per_input ? 1 : n / options.max_per_input;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = t.ptr()[i];
      t.ptr()[i] = saved + options.h;
      const double up = f().item();
      t.ptr()[i] = saved - options.h;
      const double down = f().item();
      t.ptr()[i] = saved;
      const double numeric = (up - down) / (2.0 * options.h);
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), options.floor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error || report.n_checked == 0) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        report.worst = "input[" + std::to_string(k) + "][" + std::to_string(i) + "]";
      }
      ++report.n_checked;
    }
  }
  report.passed = report.max_rel_error < options.tol;
  return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h,
                           double tol) {
  GradCheckOptions options;
  options.h = h;
  options.tol = tol;
  return grad_check([&f, &x]() { return f(x); }, {x}, options);
}

}  // namespace hydra
