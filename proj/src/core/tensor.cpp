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

#include "hydra/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

#include "hydra/errors.hpp"
#include "hydra/kernels.hpp"

namespace hydra {
namespace {

thread_local Tape* g_active_tape = nullptr;

std::shared_ptr<TensorImpl> make_impl(Shape shape) {
  auto impl = std::make_shared<TensorImpl>();
  const std::size_t n = shape_numel(shape);
  impl->shape = std::move(shape);
  impl->data.resize(n);
  impl->node_id = detail::next_node_id();
  return impl;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::uninit(Shape shape) { return Tensor(make_impl(std::move(shape))); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = uninit(std::move(shape));
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::span<const double> values, bool requires_grad) {
  Tensor t = uninit(std::move(shape));
  if (values.size() != t.numel()) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(t.shape()));
  }
  std::copy(values.begin(), values.end(), t.impl_->data.begin());
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values, bool requires_grad) {
  return from(std::move(shape), std::span<const double>(values.begin(), values.size()),
              requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

Buffer& Tensor::ensure_grad() const {
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() const {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::clear_grad() const { Buffer().swap(impl_->grad); }

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (rank() != 2) throw ShapeError("at(r, c) needs a rank-2 tensor");
  return impl_->data.at(r * impl_->shape[1] + c);
}

Tensor Tensor::clone() const {
  Tensor t = uninit(impl_->shape);
  std::copy(impl_->data.begin(), impl_->data.end(), t.impl_->data.begin());
  return t;
}

void Tape::record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward) {
  ops_.push_back(Op{std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(Tensor& loss) {
  if (loss.numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) throw UsageError("backward() on a loss that requires no gradient");
  loss.ensure_grad()[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward();
  }
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void backward(Tensor& loss) {
  Tape* tape = active_tape();
  if (tape == nullptr) throw UsageError("backward() without an active tape");
  tape->backward(loss);
}

namespace detail {

std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

bool should_record(const std::vector<Tensor>& inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor& t : inputs) {
    if (t.defined() && t.requires_grad()) return true;
  }
  return false;
}

void record(std::vector<Tensor> inputs, Tensor& out, std::function<void()> backward) {
  out.set_requires_grad(true);
  g_active_tape->record(std::move(inputs), out, std::move(backward));
}

void check_finite(const Tensor& t, const char* op) {
  if (!kernels::active().all_finite(t.ptr(), t.numel())) {
    throw NumericError(std::string(op) + ": non-finite value in output of shape " +
                       shape_str(t.shape()));
  }
}

}  // namespace detail
}  // namespace hydra
