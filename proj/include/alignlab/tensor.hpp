// Copyright 2026 The alignlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace alignlab {

// Shapes are explicit everywhere; there is no implicit broadcasting.
using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int shape_size(const Shape& s);

namespace detail {
struct Node;
struct TapeCore;
}  // namespace detail

class Tape;

/// Dense row-major array of 64-bit floats. A Tensor is a cheap handle to a
/// shared node; copies alias the same buffer. While a Tensor is watched on a
/// live Tape, operations consuming it are recorded for reverse-mode
/// differentiation; otherwise operations just compute values.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);

  const Shape& shape() const;
  int rank() const;
  int dim(int axis) const;
  int size() const;

  const std::vector<double>& values() const;
  // Mutable access is for leaf parameters between passes; mutating a value
  // that a recorded operation already consumed invalidates its gradients.
  std::vector<double>& values();

  double item() const;  // single-element tensors only
  double at(int i) const;
  double at(int i, int j) const;
  double& at(int i);
  double& at(int i, int j);

  // Gradient buffer filled by the most recent Tape::backward covering this
  // node. Shape matches values().
  const std::vector<double>& grad() const;
  bool has_grad() const;

  bool tracked() const;  // attached to a live tape
  bool defined() const { return node_ != nullptr; }

 private:
  friend class Tape;
  friend struct OpAccess;
  std::shared_ptr<detail::Node> node_;
};

/// Reverse-mode tape: an ordered list of recorded operations. Creation order
/// is topological order by construction (define-by-run). A tape is built per
/// forward pass and never shared across threads.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  // Marks a tensor as a tracked leaf of this tape. Idempotent; re-watching a
  // leaf already on another live tape is an error.
  Tensor watch(const Tensor& t);

  // Zeroes all gradient buffers reachable through the tape, seeds d(loss)=1
  // and runs every recorded local rule in reverse order. Repeated calls on an
  // unchanged tape produce identical gradients.
  void backward(const Tensor& loss);

  std::size_t num_ops() const;

 private:
  friend struct OpAccess;
  std::shared_ptr<detail::TapeCore> core_;
};

// ---------------------------------------------------------------------------
// Primitive operations. Every op validates shapes and reports both operand
// shapes on mismatch. Gradients accumulate when a tensor feeds several
// consumers.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n] -> [m,n]
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// Softmax / log-softmax along one axis (rank up to 3).
Tensor softmax(const Tensor& a, int axis);
Tensor log_softmax(const Tensor& a, int axis);

Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);
Tensor reshape(const Tensor& a, Shape shape);
Tensor tile_rows(const Tensor& row, int n);  // [d] or [1,d] -> [n,d]

Tensor sum(const Tensor& a);             // all elements -> scalar
Tensor sum_axis(const Tensor& a, int axis);

// Reductions over axis 0 restricted to rows whose mask entry is nonzero.
// Gradients at masked-out rows are exactly zero. The mask itself is data,
// never differentiated. An all-zero mask yields an untracked zero result.
Tensor masked_sum(const Tensor& a, const Tensor& mask);
Tensor masked_mean(const Tensor& a, const Tensor& mask);

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

// Extension point for operations whose local gradient rule is hand-coded
// (dynamic-programming losses and the like). The forward value is computed by
// the caller; `backward` accumulates into the input gradient buffers.
class CustomOpContext {
 public:
  std::span<const double> out_grad() const;
  std::span<const double> out_value() const;
  std::span<const double> input_value(int i) const;
  std::span<double> input_grad(int i);

 private:
  friend struct OpAccess;
  friend Tensor custom_op(Shape, std::vector<double>, std::span<const Tensor>,
                          std::function<void(CustomOpContext&)>);
  CustomOpContext(detail::Node* out, const std::vector<detail::Node*>* in);
  detail::Node* out_;
  const std::vector<detail::Node*>* in_;
};

Tensor custom_op(Shape out_shape, std::vector<double> out_value,
                 std::span<const Tensor> inputs,
                 std::function<void(CustomOpContext&)> backward);

double logsumexp(std::span<const double> xs);
double logadd(double a, double b);

}  // namespace alignlab
