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

// Dense float64 tensors with a define-by-run reverse-mode tape.
//
// A Tensor is a shared handle to row-major storage plus an optional
// gradient buffer. Operations record themselves on the thread's active
// Tape (see TapeScope) whenever a tape is active and at least one input
// requires a gradient; otherwise they run as plain numerics and nothing is
// retained. Tensors recorded on a tape must not be mutated in place.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hydra/memory.hpp"

namespace hydra {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  Buffer data;
  Buffer grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::uint64_t node_id = 0;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  // Storage is left uninitialized; every element must be written.
  static Tensor uninit(Shape shape);
  static Tensor from(Shape shape, std::span<const double> values, bool requires_grad = false);
  static Tensor from(Shape shape, std::initializer_list<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }
  std::uint64_t node_id() const { return impl_->node_id; }

  std::span<double> data() { return {impl_->data.data(), impl_->data.size()}; }
  std::span<const double> data() const { return {impl_->data.data(), impl_->data.size()}; }
  double* ptr() { return impl_->data.data(); }
  const double* ptr() const { return impl_->data.data(); }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return {impl_->grad.data(), impl_->grad.size()}; }
  std::span<double> grad_mut() { return {impl_->grad.data(), impl_->grad.size()}; }
  // Zero-filled gradient buffer, allocated on first use.
  Buffer& ensure_grad() const;
  void zero_grad() const;
  void clear_grad() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) const { impl_->requires_grad = value; }

  double item() const;
  double at(std::size_t i) const { return impl_->data.at(i); }
  double at(std::size_t r, std::size_t c) const;

  // Deep copy without gradient or tape history.
  Tensor clone() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

class Tape {
 public:
  struct Op {
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  void record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded rule once, newest
  // first. Gradients accumulate into leaves across calls.
  void backward(Tensor& loss);

  void clear() { ops_.clear(); }
  std::size_t size() const { return ops_.size(); }
  const std::vector<Op>& ops() const { return ops_; }

 private:
  std::vector<Op> ops_;
};

Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording (inference, optimizer updates).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

void backward(Tensor& loss);

namespace detail {
std::uint64_t next_node_id();
// True when an op over these inputs must be recorded.
bool should_record(std::initializer_list<const Tensor*> inputs);
bool should_record(const std::vector<Tensor>& inputs);
// Marks `out` as differentiable and records it on the active tape.
void record(std::vector<Tensor> inputs, Tensor& out, std::function<void()> backward);
void check_finite(const Tensor& t, const char* op);
}  // namespace detail

}  // namespace hydra
