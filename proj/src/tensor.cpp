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

#include "alignlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "alignlab/common.hpp"

namespace alignlab {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

int shape_size(const Shape& s) {
  int n = 1;
  for (int d : s) n *= d;
  return n;
}

namespace detail {

struct TapeCore;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool grad_ready = false;
  std::weak_ptr<TapeCore> tape;
};

struct TapeOp {
  std::vector<std::shared_ptr<Node>> inputs;
  std::shared_ptr<Node> output;
  std::function<void()> back;
};

struct TapeCore {
  std::vector<TapeOp> ops;
  std::vector<std::shared_ptr<Node>> watched;
};

}  // namespace detail

using detail::Node;
using detail::TapeCore;
using detail::TapeOp;

// Internal accessor shared by the free-function ops.
struct OpAccess {
  using BackRule = std::function<void(Node*, const std::vector<Node*>&)>;

  static const std::shared_ptr<Node>& node(const Tensor& t) { return t.node_; }

  static Tensor wrap(std::shared_ptr<Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

  // The single tape all tracked inputs live on, or nullptr when untracked.
  static std::shared_ptr<TapeCore> common_tape(
      const std::vector<const Tensor*>& ins) {
    std::shared_ptr<TapeCore> tape;
    for (const Tensor* t : ins) {
      if (!t->defined()) continue;
      auto c = node(*t)->tape.lock();
      if (!c) continue;
      if (tape && tape != c)
        fail_state("operation mixes tensors recorded on different live tapes");
      tape = c;
    }
    return tape;
  }

  // Creates the output node and records the op when a tape is active.
  static Tensor record(Shape shape, std::vector<double> value,
                       const std::vector<const Tensor*>& ins, BackRule back) {
    auto out = std::make_shared<Node>();
    out->shape = std::move(shape);
    out->value = std::move(value);
    auto tape = common_tape(ins);
    if (tape) {
      out->tape = tape;
      TapeOp op;
      op.output = out;
      std::vector<Node*> raw;
      for (const Tensor* t : ins) {
        op.inputs.push_back(node(*t));
        raw.push_back(node(*t).get());
      }
      Node* out_raw = out.get();
      op.back = [out_raw, raw = std::move(raw), back = std::move(back)]() {
        back(out_raw, raw);
      };
      tape->ops.push_back(std::move(op));
    }
    return wrap(out);
  }

  static Tensor record(Shape shape, std::vector<double> value,
                       std::initializer_list<const Tensor*> ins, BackRule back) {
    return record(std::move(shape), std::move(value),
                  std::vector<const Tensor*>(ins), std::move(back));
  }
};

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) fail_invalid(msg);
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) fail_invalid(str_cat(op, ": undefined tensor operand"));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    fail_invalid(str_cat(op, ": shape mismatch ", shape_str(a.shape()), " vs ",
                         shape_str(b.shape())));
}

void check_axis(const Tensor& a, int axis, const char* op) {
  if (axis < 0 || axis >= a.rank())
    fail_invalid(str_cat(op, ": axis ", axis, " out of range for shape ",
                         shape_str(a.shape())));
}

struct AxisLines {
  int outer, axlen, inner;
};

AxisLines axis_lines(const Shape& s, int axis) {
  AxisLines l{1, s[axis], 1};
  for (int i = 0; i < axis; ++i) l.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) l.inner *= s[i];
  return l;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, std::vector<double> values) {
  if (shape_size(shape) != static_cast<int>(values.size()))
    fail_invalid(str_cat("tensor: shape ", shape_str(shape), " expects ",
                         shape_size(shape), " values, got ", values.size()));
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

Tensor Tensor::zeros(Shape shape) {
  int n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double v) {
  int n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }
int Tensor::dim(int axis) const { return node_->shape[axis]; }
int Tensor::size() const { return static_cast<int>(node_->value.size()); }

const std::vector<double>& Tensor::values() const { return node_->value; }
std::vector<double>& Tensor::values() { return node_->value; }

double Tensor::item() const {
  if (size() != 1)
    fail_invalid(str_cat("item: tensor has shape ", shape_str(shape())));
  return node_->value[0];
}

double Tensor::at(int i) const { return node_->value.at(i); }
double& Tensor::at(int i) { return node_->value.at(i); }

double Tensor::at(int i, int j) const {
  return node_->value.at(static_cast<std::size_t>(i) * dim(1) + j);
}
double& Tensor::at(int i, int j) {
  return node_->value.at(static_cast<std::size_t>(i) * dim(1) + j);
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) fail_state("grad: no backward pass has covered this tensor");
  return node_->grad;
}

bool Tensor::has_grad() const {
  return node_ && node_->grad_ready && node_->grad.size() == node_->value.size();
}

bool Tensor::tracked() const { return node_ && !node_->tape.expired(); }

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tape::Tape() : core_(std::make_shared<TapeCore>()) {}
Tape::~Tape() = default;

std::size_t Tape::num_ops() const { return core_->ops.size(); }

Tensor Tape::watch(const Tensor& t) {
  require_defined(t, "watch");
  auto& node = OpAccess::node(t);
  auto current = node->tape.lock();
  if (current && current != core_)
    fail_state("watch: tensor already tracked on another live tape");
  node->tape = core_;
  if (!current) core_->watched.push_back(node);
  return t;
}

void Tape::backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.size() != 1)
    fail_invalid(str_cat("backward: loss must be scalar, got shape ",
                         shape_str(loss.shape())));
  auto loss_node = OpAccess::node(loss);
  if (loss_node->tape.lock() != core_)
    fail_invalid("backward: loss is not attached to this tape");
  if (core_->ops.empty()) fail_invalid("backward: tape is empty");

  auto zero = [](const std::shared_ptr<Node>& n) {
    n->grad.assign(n->value.size(), 0.0);
    n->grad_ready = true;
  };
  for (auto& op : core_->ops) {
    zero(op.output);
    for (auto& in : op.inputs) zero(in);
  }
  for (auto& leaf : core_->watched) zero(leaf);

  loss_node->grad[0] = 1.0;
  for (auto it = core_->ops.rbegin(); it != core_->ops.rend(); ++it) it->back();
}

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  require(a.rank() == 2 && b.rank() == 2,
          str_cat("matmul: expects rank-2 operands, got ", shape_str(a.shape()),
                  " and ", shape_str(b.shape())));
  require(a.dim(1) == b.dim(0),
          str_cat("matmul: inner dimensions differ: ", shape_str(a.shape()),
                  " vs ", shape_str(b.shape())));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  return OpAccess::record(
      {m, n}, std::move(out), {&a, &b},
      [m, k, n](Node* o, const std::vector<Node*>& in) {
        const auto& g = o->grad;
        const auto& av = in[0]->value;
        const auto& bv = in[1]->value;
        auto& ga = in[0]->grad;
        auto& gb = in[1]->grad;
        // dA = G * B^T, dB = A^T * G
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
            ga[i * k + p] += s;
          }
        for (int p = 0; p < k; ++p)
          for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int i = 0; i < m; ++i) s += av[i * k + p] * g[i * n + j];
            gb[p * n + j] += s;
          }
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return OpAccess::record(a.shape(), std::move(out), {&a, &b},
                          [](Node* o, const std::vector<Node*>& in) {
                            for (std::size_t i = 0; i < o->grad.size(); ++i) {
                              in[0]->grad[i] += o->grad[i];
                              in[1]->grad[i] += o->grad[i];
                            }
                          });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_defined(a, "sub");
  require_defined(b, "sub");
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return OpAccess::record(a.shape(), std::move(out), {&a, &b},
                          [](Node* o, const std::vector<Node*>& in) {
                            for (std::size_t i = 0; i < o->grad.size(); ++i) {
                              in[0]->grad[i] += o->grad[i];
                              in[1]->grad[i] -= o->grad[i];
                            }
                          });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return OpAccess::record(a.shape(), std::move(out), {&a, &b},
                          [](Node* o, const std::vector<Node*>& in) {
                            for (std::size_t i = 0; i < o->grad.size(); ++i) {
                              in[0]->grad[i] += o->grad[i] * in[1]->value[i];
                              in[1]->grad[i] += o->grad[i] * in[0]->value[i];
                            }
                          });
}

Tensor scale(const Tensor& a, double c) {
  require_defined(a, "scale");
  std::vector<double> out(a.values());
  for (double& v : out) v *= c;
  return OpAccess::record(a.shape(), std::move(out), {&a},
                          [c](Node* o, const std::vector<Node*>& in) {
                            for (std::size_t i = 0; i < o->grad.size(); ++i)
                              in[0]->grad[i] += c * o->grad[i];
                          });
}

Tensor tanh(const Tensor& a) {
  require_defined(a, "tanh");
  std::vector<double> out(a.values());
  for (double& v : out) v = std::tanh(v);
  return OpAccess::record(a.shape(), std::move(out), {&a},
                          [](Node* o, const std::vector<Node*>& in) {
                            for (std::size_t i = 0; i < o->grad.size(); ++i) {
                              double y = o->value[i];
                              in[0]->grad[i] += (1.0 - y * y) * o->grad[i];
                            }
                          });
}

Tensor sigmoid(const Tensor& a) {
  require_defined(a, "sigmoid");
  std::vector<double> out(a.values());
  for (double& v : out) v = 1.0 / (1.0 + std::exp(-v));
  return OpAccess::record(a.shape(), std::move(out), {&a},
                          [](Node* o, const std::vector<Node*>& in) {
                            for (std::size_t i = 0; i < o->grad.size(); ++i) {
                              double y = o->value[i];
                              in[0]->grad[i] += y * (1.0 - y) * o->grad[i];
                            }
                          });
}

Tensor softmax(const Tensor& a, int axis) {
  require_defined(a, "softmax");
  check_axis(a, axis, "softmax");
  auto l = axis_lines(a.shape(), axis);
  std::vector<double> out(a.values());
  for (int o = 0; o < l.outer; ++o)
    for (int i = 0; i < l.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < l.axlen; ++k)
        mx = std::max(mx, out[(o * l.axlen + k) * l.inner + i]);
      double z = 0.0;
      for (int k = 0; k < l.axlen; ++k) {
        double& v = out[(o * l.axlen + k) * l.inner + i];
        v = std::exp(v - mx);
        z += v;
      }
      for (int k = 0; k < l.axlen; ++k) out[(o * l.axlen + k) * l.inner + i] /= z;
    }
  return OpAccess::record(
      a.shape(), std::move(out), {&a}, [l](Node* o, const std::vector<Node*>& in) {
        // dx = y * (g - sum(g*y)) along the axis
        for (int ou = 0; ou < l.outer; ++ou)
          for (int i = 0; i < l.inner; ++i) {
            double dot = 0.0;
            for (int k = 0; k < l.axlen; ++k) {
              std::size_t idx = (ou * l.axlen + k) * l.inner + i;
              dot += o->grad[idx] * o->value[idx];
            }
            for (int k = 0; k < l.axlen; ++k) {
              std::size_t idx = (ou * l.axlen + k) * l.inner + i;
              in[0]->grad[idx] += o->value[idx] * (o->grad[idx] - dot);
            }
          }
      });
}

Tensor log_softmax(const Tensor& a, int axis) {
  require_defined(a, "log_softmax");
  check_axis(a, axis, "log_softmax");
  auto l = axis_lines(a.shape(), axis);
  std::vector<double> out(a.values());
  for (int o = 0; o < l.outer; ++o)
    for (int i = 0; i < l.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < l.axlen; ++k)
        mx = std::max(mx, out[(o * l.axlen + k) * l.inner + i]);
      double z = 0.0;
      for (int k = 0; k < l.axlen; ++k)
        z += std::exp(out[(o * l.axlen + k) * l.inner + i] - mx);
      double lse = mx + std::log(z);
      for (int k = 0; k < l.axlen; ++k) out[(o * l.axlen + k) * l.inner + i] -= lse;
    }
  return OpAccess::record(
      a.shape(), std::move(out), {&a}, [l](Node* o, const std::vector<Node*>& in) {
        // dx = g - exp(y) * sum(g) along the axis
        for (int ou = 0; ou < l.outer; ++ou)
          for (int i = 0; i < l.inner; ++i) {
            double gsum = 0.0;
            for (int k = 0; k < l.axlen; ++k)
              gsum += o->grad[(ou * l.axlen + k) * l.inner + i];
            for (int k = 0; k < l.axlen; ++k) {
              std::size_t idx = (ou * l.axlen + k) * l.inner + i;
              in[0]->grad[idx] += o->grad[idx] - std::exp(o->value[idx]) * gsum;
            }
          }
      });
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  std::vector<Tensor> parts{a, b};
  return concat(std::span<const Tensor>(parts), axis);
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  require(!parts.empty(), "concat: no operands");
  for (const auto& p : parts) require_defined(p, "concat");
  const Shape& base = parts[0].shape();
  check_axis(parts[0], axis, "concat");
  int total_ax = 0;
  for (const auto& p : parts) {
    require(p.rank() == parts[0].rank(),
            str_cat("concat: rank mismatch ", shape_str(base), " vs ",
                    shape_str(p.shape())));
    for (int d = 0; d < p.rank(); ++d)
      if (d != axis && p.dim(d) != base[d])
        fail_invalid(str_cat("concat: shape mismatch off axis ", axis, ": ",
                             shape_str(base), " vs ", shape_str(p.shape())));
    total_ax += p.dim(axis);
  }
  Shape out_shape = base;
  out_shape[axis] = total_ax;
  auto l = axis_lines(out_shape, axis);
  std::vector<double> out(shape_size(out_shape));
  std::vector<int> offsets;   // per-part offset along the axis
  std::vector<int> axlens;    // per-part extent along the axis
  {
    int off = 0;
    for (const auto& p : parts) {
      offsets.push_back(off);
      axlens.push_back(p.dim(axis));
      auto pl = axis_lines(p.shape(), axis);
      const auto& pv = p.values();
      for (int o = 0; o < pl.outer; ++o)
        for (int k = 0; k < pl.axlen; ++k)
          std::copy_n(&pv[(o * pl.axlen + k) * pl.inner], pl.inner,
                      &out[(o * l.axlen + off + k) * l.inner]);
      off += p.dim(axis);
    }
  }
  std::vector<const Tensor*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  return OpAccess::record(
      std::move(out_shape), std::move(out), ptrs,
      [l, offsets, axlens](Node* o, const std::vector<Node*>& in) {
        for (std::size_t pi = 0; pi < in.size(); ++pi) {
          int off = offsets[pi], len = axlens[pi];
          for (int ou = 0; ou < l.outer; ++ou)
            for (int k = 0; k < len; ++k)
              for (int i = 0; i < l.inner; ++i)
                in[pi]->grad[(ou * len + k) * l.inner + i] +=
                    o->grad[(ou * l.axlen + off + k) * l.inner + i];
        }
      });
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
  require_defined(a, "slice");
  check_axis(a, axis, "slice");
  require(start >= 0 && len >= 1 && start + len <= a.dim(axis),
          str_cat("slice: range [", start, ",", start + len,
                  ") out of bounds for axis ", axis, " of ",
                  shape_str(a.shape())));
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  auto la = axis_lines(a.shape(), axis);
  std::vector<double> out(shape_size(out_shape));
  const auto& av = a.values();
  for (int o = 0; o < la.outer; ++o)
    for (int k = 0; k < len; ++k)
      std::copy_n(&av[(o * la.axlen + start + k) * la.inner], la.inner,
                  &out[(o * len + k) * la.inner]);
  return OpAccess::record(std::move(out_shape), std::move(out), {&a},
                          [la, start, len](Node* o, const std::vector<Node*>& in) {
                            for (int ou = 0; ou < la.outer; ++ou)
                              for (int k = 0; k < len; ++k)
                                for (int i = 0; i < la.inner; ++i)
                                  in[0]->grad[(ou * la.axlen + start + k) * la.inner + i] +=
                                      o->grad[(ou * len + k) * la.inner + i];
                          });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  require(shape_size(shape) == a.size(),
          str_cat("reshape: cannot view ", shape_str(a.shape()), " as ",
                  shape_str(shape)));
  return OpAccess::record(std::move(shape), a.values(), {&a},
                          [](Node* o, const std::vector<Node*>& in) {
                            for (std::size_t i = 0; i < o->grad.size(); ++i)
                              in[0]->grad[i] += o->grad[i];
                          });
}

Tensor tile_rows(const Tensor& row, int n) {
  require_defined(row, "tile_rows");
  require(n >= 1, str_cat("tile_rows: invalid count ", n));
  int d = 0;
  if (row.rank() == 1) {
    d = row.dim(0);
  } else if (row.rank() == 2 && row.dim(0) == 1) {
    d = row.dim(1);
  } else {
    fail_invalid(str_cat("tile_rows: expects [d] or [1,d], got ",
                         shape_str(row.shape())));
  }
  std::vector<double> out(static_cast<std::size_t>(n) * d);
  const auto& rv = row.values();
  for (int i = 0; i < n; ++i) std::copy_n(rv.data(), d, &out[i * d]);
  return OpAccess::record({n, d}, std::move(out), {&row},
                          [n, d](Node* o, const std::vector<Node*>& in) {
                            for (int i = 0; i < n; ++i)
                              for (int j = 0; j < d; ++j)
                                in[0]->grad[j] += o->grad[i * d + j];
                          });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double s = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  return OpAccess::record({1}, {s}, {&a},
                          [](Node* o, const std::vector<Node*>& in) {
                            double g = o->grad[0];
                            for (double& v : in[0]->grad) v += g;
                          });
}

Tensor sum_axis(const Tensor& a, int axis) {
  require_defined(a, "sum_axis");
  check_axis(a, axis, "sum_axis");
  auto l = axis_lines(a.shape(), axis);
  Shape out_shape;
  for (int d = 0; d < a.rank(); ++d)
    if (d != axis) out_shape.push_back(a.dim(d));
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(shape_size(out_shape), 0.0);
  const auto& av = a.values();
  for (int o = 0; o < l.outer; ++o)
    for (int k = 0; k < l.axlen; ++k)
      for (int i = 0; i < l.inner; ++i)
        out[o * l.inner + i] += av[(o * l.axlen + k) * l.inner + i];
  return OpAccess::record(std::move(out_shape), std::move(out), {&a},
                          [l](Node* o, const std::vector<Node*>& in) {
                            for (int ou = 0; ou < l.outer; ++ou)
                              for (int k = 0; k < l.axlen; ++k)
                                for (int i = 0; i < l.inner; ++i)
                                  in[0]->grad[(ou * l.axlen + k) * l.inner + i] +=
                                      o->grad[ou * l.inner + i];
                          });
}

namespace {

void check_mask(const Tensor& a, const Tensor& mask, const char* op) {
  require(mask.rank() == 1 && mask.dim(0) == a.dim(0),
          str_cat(op, ": mask shape ", shape_str(mask.shape()),
                  " does not cover axis 0 of ", shape_str(a.shape())));
}

}  // namespace

Tensor masked_sum(const Tensor& a, const Tensor& mask) {
  require_defined(a, "masked_sum");
  require_defined(mask, "masked_sum");
  require(a.rank() == 1 || a.rank() == 2,
          str_cat("masked_sum: expects rank 1 or 2, got ", shape_str(a.shape())));
  check_mask(a, mask, "masked_sum");
  const int rows = a.dim(0);
  const int cols = a.rank() == 2 ? a.dim(1) : 1;
  Shape out_shape = a.rank() == 2 ? Shape{cols} : Shape{1};
  std::vector<double> out(cols, 0.0);
  const auto& av = a.values();
  const auto& mv = mask.values();
  for (int r = 0; r < rows; ++r) {
    if (mv[r] == 0.0) continue;
    for (int c = 0; c < cols; ++c) out[c] += av[r * cols + c];
  }
  std::vector<double> mask_copy = mv;
  return OpAccess::record(std::move(out_shape), std::move(out), {&a},
                          [rows, cols, mask_copy](Node* o, const std::vector<Node*>& in) {
                            for (int r = 0; r < rows; ++r) {
                              if (mask_copy[r] == 0.0) continue;
                              for (int c = 0; c < cols; ++c)
                                in[0]->grad[r * cols + c] += o->grad[c];
                            }
                          });
}

Tensor masked_mean(const Tensor& a, const Tensor& mask) {
  require_defined(a, "masked_mean");
  require_defined(mask, "masked_mean");
  require(a.rank() == 1 || a.rank() == 2,
          str_cat("masked_mean: expects rank 1 or 2, got ", shape_str(a.shape())));
  check_mask(a, mask, "masked_mean");
  int count = 0;
  for (double m : mask.values())
    if (m != 0.0) ++count;
  if (count == 0) {
    // Fully masked: zero contribution, zero gradient, not recorded.
    return a.rank() == 2 ? Tensor::zeros({a.dim(1)}) : Tensor::scalar(0.0);
  }
  return scale(masked_sum(a, mask), 1.0 / count);
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  require_defined(table, "embedding_lookup");
  require(table.rank() == 2, str_cat("embedding_lookup: table must be rank 2, got ",
                                     shape_str(table.shape())));
  require(!ids.empty(), "embedding_lookup: empty id list");
  const int v = table.dim(0), e = table.dim(1);
  for (int id : ids)
    require(id >= 0 && id < v,
            str_cat("embedding_lookup: id ", id, " out of range for table ",
                    shape_str(table.shape())));
  const int n = static_cast<int>(ids.size());
  std::vector<double> out(static_cast<std::size_t>(n) * e);
  const auto& tv = table.values();
  for (int i = 0; i < n; ++i) std::copy_n(&tv[ids[i] * e], e, &out[i * e]);
  std::vector<int> ids_copy = ids;
  return OpAccess::record({n, e}, std::move(out), {&table},
                          [ids_copy, e](Node* o, const std::vector<Node*>& in) {
                            for (std::size_t i = 0; i < ids_copy.size(); ++i)
                              for (int j = 0; j < e; ++j)
                                in[0]->grad[ids_copy[i] * e + j] +=
                                    o->grad[i * e + j];
                          });
}

CustomOpContext::CustomOpContext(Node* out, const std::vector<Node*>* in)
    : out_(out), in_(in) {}

std::span<const double> CustomOpContext::out_grad() const { return out_->grad; }
std::span<const double> CustomOpContext::out_value() const { return out_->value; }

std::span<const double> CustomOpContext::input_value(int i) const {
  return (*in_)[i]->value;
}

std::span<double> CustomOpContext::input_grad(int i) {
  auto& g = (*in_)[i]->grad;
  return {g.data(), g.size()};
}

Tensor custom_op(Shape out_shape, std::vector<double> out_value,
                 std::span<const Tensor> inputs,
                 std::function<void(CustomOpContext&)> backward) {
  require(shape_size(out_shape) == static_cast<int>(out_value.size()),
          str_cat("custom_op: shape ", shape_str(out_shape), " expects ",
                  shape_size(out_shape), " values, got ", out_value.size()));
  std::vector<const Tensor*> ptrs;
  for (const auto& t : inputs) {
    require_defined(t, "custom_op");
    ptrs.push_back(&t);
  }
  return OpAccess::record(std::move(out_shape), std::move(out_value), ptrs,
                          [backward = std::move(backward)](
                              Node* o, const std::vector<Node*>& in) {
                            CustomOpContext ctx(o, &in);
                            backward(ctx);
                          });
}

double logadd(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b <= kLogZero) return a;
  return a + std::log1p(std::exp(b - a));
}

double logsumexp(std::span<const double> xs) {
  double mx = kLogZero;
  for (double x : xs) mx = std::max(mx, x);
  if (mx <= kLogZero) return kLogZero;
  double s = 0.0;
  for (double x : xs)
    if (x > kLogZero) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace alignlab
