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

#include "hydra/ssm.hpp"

#include <cmath>
#include <memory>

#include "hydra/errors.hpp"
#include "hydra/kernels.hpp"
#include "hydra/ops.hpp"

namespace hydra {

SsmLayerParams SsmLayerParams::init(std::size_t d, Rng& rng) {
  SsmLayerParams p;
  p.d = d;
  const double lo = std::log(0.9 / 0.1);
  const double hi = std::log(0.999 / 0.001);
  p.decay_logits = Tensor::uninit({d});
  for (std::size_t i = 0; i < d; ++i) {
    const double frac = d > 1 ? static_cast<double>(i) / static_cast<double>(d - 1) : 0.0;
    p.decay_logits.ptr()[i] = lo + (hi - lo) * frac;
  }
  p.decay_logits.set_requires_grad(true);
  const double std_in = 1.0 / std::sqrt(static_cast<double>(d));
  p.input_proj = param_normal({d, d}, std_in, rng);
  p.gate_proj = param_normal({d, d}, std_in, rng);
  p.output_proj = param_normal({d, d}, std_in, rng);
  return p;
}

void SsmLayerParams::collect(const std::string& prefix, ParamList& out) const {
  out.add(prefix + "decay_logits", decay_logits, Component::kBackbone);
  out.add(prefix + "input_proj", input_proj, Component::kBackbone);
  out.add(prefix + "gate_proj", gate_proj, Component::kBackbone);
  out.add(prefix + "output_proj", output_proj, Component::kBackbone);
}

Tensor linear_scan(const Tensor& u, const Tensor& a, const Tensor& h0) {
  if (u.rank() != 2) throw ShapeError("linear_scan: u must be [L x d]");
  const std::size_t len = u.dim(0);
  const std::size_t d = u.dim(1);
  if (a.numel() != d || (h0.defined() && h0.numel() != d)) {
    throw ShapeError("linear_scan: decay/initial state must have d entries");
  }
  Tensor h = Tensor::uninit({len, d});
  auto zero = std::make_shared<Buffer>(h0.defined() ? 0 : d, 0.0);
  const double* init = h0.defined() ? h0.ptr() : zero->data();
  kernels::active().scan_forward(u.ptr(), a.ptr(), init, h.ptr(), len, d);
  detail::check_finite(h, "linear_scan");
  if (detail::should_record({&u, &a, &h0})) {
    std::vector<Tensor> inputs{u, a};
    if (h0.defined()) inputs.push_back(h0);
    detail::record(inputs, h, [u, a, h0, h, zero, len, d]() mutable {
      Buffer dh(h.grad().begin(), h.grad().end());
      Buffer du_scratch, da_scratch, dh0_scratch;
      double* du = nullptr;
      double* da = nullptr;
      double* dh0 = nullptr;
      if (u.requires_grad()) {
        du = u.ensure_grad().data();
      } else {
        du_scratch.assign(len * d, 0.0);
        du = du_scratch.data();
      }
      if (a.requires_grad()) {
        da = a.ensure_grad().data();
      } else {
        da_scratch.assign(d, 0.0);
        da = da_scratch.data();
      }
      if (h0.defined() && h0.requires_grad()) {
        dh0 = h0.ensure_grad().data();
      } else {
        dh0_scratch.assign(d, 0.0);
        dh0 = dh0_scratch.data();
      }
      kernels::active().scan_backward(u.ptr(), a.ptr(), h0.defined() ? h0.ptr() : zero->data(),
                                      h.ptr(), dh.data(), du, da, dh0, len, d);
    });
  }
  return h;
}

SsmResult ssm_state_carry(const SsmLayerParams& params, const Tensor& x, const Tensor& h_init) {
  if (x.rank() != 2 || x.dim(1) != params.d) {
    throw ShapeError("ssm: input must be [L x " + std::to_string(params.d) + "], got " +
                     shape_str(x.shape()));
  }
  const Tensor a = ops::sigmoid(params.decay_logits);
  const Tensor u = ops::matmul(x, params.input_proj);
  const Tensor h = linear_scan(u, a, h_init);
  const Tensor gate = ops::silu(ops::matmul(x, params.gate_proj));
  Tensor y = ops::mul(ops::matmul(h, params.output_proj), gate);
  return SsmResult{y, ops::slice_rows(h, x.dim(0) - 1, x.dim(0))};
}

Tensor ssm_scan(const Tensor& x, const SsmLayerParams& params) {
  return ssm_state_carry(params, x, Tensor()).y;
}

}  // namespace hydra
