/*
 * Copyright 2026 The fuleak Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fuleak/tensor.hpp"

#include <atomic>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <cmath>
#include <optional>
#include <sstream>

#include "fuleak/kernels.hpp"

namespace fuleak {

namespace {

// Tensors churn through large short-lived buffers. glibc hands those out via
// mmap and returns them on free, so every op pays page faults. Keep them in
// the heap instead.
#if defined(__GLIBC__)
const bool kHeapTuned = [] {
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();
#endif

thread_local Tape* g_active_tape = nullptr;
thread_local bool g_recording = true;
std::atomic<std::uint64_t> g_next_tape_id{1};

}  // namespace

struct TapeAccess {
  static bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (g_active_tape == nullptr || !g_recording) return false;
    for (const Tensor* t : inputs) {
      if (t->tracked()) return true;
    }
    return false;
  }

  static void attach(Tensor& out, std::initializer_list<const Tensor*> inputs,
                     BackwardFn fn) {
    Tape* tape = g_active_tape;
    Tape::Node node;
    std::size_t slot = 0;
    for (const Tensor* t : inputs) {
      node.inputs[slot++] = t->tracked() ? t->node_ : -1;
    }
    node.backward = std::move(fn);
    tape->nodes_.push_back(std::move(node));
    out.tape_id_ = tape->id_;
    out.node_ = static_cast<std::int32_t>(tape->nodes_.size() - 1);
  }

  static std::uint64_t tape_id(const Tape& tape) { return tape.id_; }

  static Tensor share(const Tensor& a, Shape shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = a.data_;
    return t;
  }
  static std::int32_t node(const Tensor& t) { return t.node_; }
};

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Index numel_of(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (numel_of(shape_) != static_cast<Index>(values.size())) {
    throw ShapeError("tensor shape " + to_string(shape_) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const Index n = numel_of(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = static_cast<Index>(values.size());
  return Tensor({n}, std::move(values));
}

std::span<const double> Tensor::values() const {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + to_string(shape_));
  }
  return (*data_)[0];
}

bool Tensor::tracked() const {
  return node_ >= 0 && g_active_tape != nullptr &&
         TapeAccess::tape_id(*g_active_tape) == tape_id_;
}

Tensor Tensor::detach() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

const Tensor& Tensor::check_finite(const char* what) const {
  for (double v : values()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value in ") + what);
    }
  }
  return *this;
}

Tape::Tape() : id_(g_next_tape_id++), previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

Tensor Tape::watch(const Tensor& t) {
  if (g_active_tape != this) {
    throw std::logic_error("Tape::watch on a tape that is not active");
  }
  Tensor leaf = t.detach();
  nodes_.push_back(Node{});
  leaf.tape_id_ = id_;
  leaf.node_ = static_cast<std::int32_t>(nodes_.size() - 1);
  return leaf;
}

NoRecordGuard::NoRecordGuard() : previous_(g_recording) { g_recording = false; }
NoRecordGuard::~NoRecordGuard() { g_recording = previous_; }

std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> wrt,
                         bool create_graph, std::vector<bool>* unreachable) {
  if (output.numel() != 1) {
    throw ShapeError("grad() needs a scalar output, got " + to_string(output.shape()));
  }
  std::vector<Tensor> result(wrt.size());
  if (unreachable) unreachable->assign(wrt.size(), false);

  auto zeros_for = [&](std::size_t i) {
    result[i] = Tensor::zeros(wrt[i].shape());
    if (unreachable) (*unreachable)[i] = true;
  };

  if (!output.tracked()) {
    for (std::size_t i = 0; i < wrt.size(); ++i) zeros_for(i);
    return result;
  }

  Tape& tape = *g_active_tape;
  const auto out_node = static_cast<std::size_t>(output.node_);
  const std::size_t n = out_node + 1;

  std::vector<char> reaches(n, 0);  // node depends on some wrt tensor
  std::vector<char> keep(n, 0);
  for (const Tensor& w : wrt) {
    if (w.tracked() && static_cast<std::size_t>(w.node_) < n) {
      reaches[static_cast<std::size_t>(w.node_)] = 1;
      keep[static_cast<std::size_t>(w.node_)] = 1;
    }
  }
  for (std::size_t id = 0; id < n; ++id) {
    if (reaches[id]) continue;
    for (std::int32_t in : tape.nodes_[id].inputs) {
      if (in >= 0 && reaches[static_cast<std::size_t>(in)]) {
        reaches[id] = 1;
        break;
      }
    }
  }

  std::vector<Tensor> adjoint(n);
  adjoint[out_node] = Tensor::full(output.shape(), 1.0);
  {
    std::optional<NoRecordGuard> guard;
    if (!create_graph) guard.emplace();
    for (std::size_t id = n; id-- > 0;) {
      if (!adjoint[id].defined() || !reaches[id]) continue;
      // Copy: create_graph may grow the deque while we run.
      const std::array<std::int32_t, 3> inputs = tape.nodes_[id].inputs;
      const BackwardFn backward = tape.nodes_[id].backward;
      if (!backward) continue;
      std::array<bool, 3> needs{};
      bool any = false;
      for (std::size_t s = 0; s < 3; ++s) {
        needs[s] = inputs[s] >= 0 && reaches[static_cast<std::size_t>(inputs[s])];
        any = any || needs[s];
      }
      if (!any) continue;
      std::array<Tensor, 3> grads;
      backward(adjoint[id], needs, grads);
      for (std::size_t s = 0; s < 3; ++s) {
        if (!needs[s] || !grads[s].defined()) continue;
        auto& slot = adjoint[static_cast<std::size_t>(inputs[s])];
        slot = slot.defined() ? add(slot, grads[s]) : grads[s];
      }
      if (!keep[id]) adjoint[id] = Tensor();
    }
  }

  for (std::size_t i = 0; i < wrt.size(); ++i) {
    const Tensor& w = wrt[i];
    if (w.tracked() && static_cast<std::size_t>(w.node_) < n &&
        adjoint[static_cast<std::size_t>(w.node_)].defined()) {
      Tensor g = adjoint[static_cast<std::size_t>(w.node_)];
      result[i] = g.shape() == w.shape() ? g : reshape(g, w.shape());
    } else {
      zeros_for(i);
    }
  }
  return result;
}

Tensor grad(const Tensor& output, const Tensor& wrt, bool create_graph) {
  std::array<Tensor, 1> w{wrt};
  return std::move(grad(output, w, create_graph)[0]);
}

Tensor hvp(const std::function<Tensor(const Tensor&)>& loss, const Tensor& theta,
           const Tensor& v) {
  if (v.numel() != theta.numel()) {
    throw ShapeError("hvp: direction " + to_string(v.shape()) + " does not match parameters " +
                     to_string(theta.shape()));
  }
  Tape tape;
  Tensor th = tape.watch(theta);
  Tensor g = grad(loss(th), th, true);
  Tensor hv = grad(dot(g, reshape(v.detach(), g.shape())), th);
  return hv.detach();
}

namespace {

Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.numel() == 1) return a.shape();
  if (a.numel() == 1) return b.shape();
  throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                   " vs " + to_string(b.shape()));
}

// Folds a broadcast gradient back onto the operand's shape.
Tensor reduce_like(const Tensor& g, const Tensor& like) {
  if (g.shape() == like.shape()) return g;
  if (g.numel() == like.numel()) return reshape(g, like.shape());
  return reshape(sum(g), like.shape());
}

Tensor binary(kernels::BinaryOp op, const Tensor& a, const Tensor& b, const char* name) {
  Shape shape = broadcast_shape(a, b, name);
  std::vector<double> out(static_cast<std::size_t>(numel_of(shape)));
  kernels::binary(op, a.values(), b.values(), out);
  return Tensor(std::move(shape), std::move(out));
}

Tensor unary(kernels::UnaryOp op, const Tensor& a) {
  std::vector<double> out(static_cast<std::size_t>(a.numel()));
  kernels::unary(op, a.values(), out);
  return Tensor(a.shape(), std::move(out));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = binary(kernels::BinaryOp::kAdd, a, b, "add");
  if (TapeAccess::should_record({&a, &b})) {
    TapeAccess::attach(out, {&a, &b},
                       [a, b](const Tensor& g, const std::array<bool, 3>& needs,
                              std::array<Tensor, 3>& grads) {
                         if (needs[0]) grads[0] = reduce_like(g, a);
                         if (needs[1]) grads[1] = reduce_like(g, b);
                       });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tensor out = binary(kernels::BinaryOp::kSub, a, b, "sub");
  if (TapeAccess::should_record({&a, &b})) {
    TapeAccess::attach(out, {&a, &b},
                       [a, b](const Tensor& g, const std::array<bool, 3>& needs,
                              std::array<Tensor, 3>& grads) {
                         if (needs[0]) grads[0] = reduce_like(g, a);
                         if (needs[1]) grads[1] = reduce_like(neg(g), b);
                       });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor out = binary(kernels::BinaryOp::kMul, a, b, "mul");
  if (TapeAccess::should_record({&a, &b})) {
    TapeAccess::attach(out, {&a, &b},
                       [a, b](const Tensor& g, const std::array<bool, 3>& needs,
                              std::array<Tensor, 3>& grads) {
                         if (needs[0]) grads[0] = reduce_like(mul(g, b), a);
                         if (needs[1]) grads[1] = reduce_like(mul(g, a), b);
                       });
  }
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  Tensor out = binary(kernels::BinaryOp::kDiv, a, b, "div");
  if (TapeAccess::should_record({&a, &b})) {
    TapeAccess::attach(out, {&a, &b},
                       [a, b](const Tensor& g, const std::array<bool, 3>& needs,
                              std::array<Tensor, 3>& grads) {
                         if (needs[0]) grads[0] = reduce_like(div(g, b), a);
                         if (needs[1]) grads[1] = reduce_like(neg(div(mul(g, a), mul(b, b))), b);
                       });
  }
  return out;
}

Tensor neg(const Tensor& a) { return affine(a, -1.0); }

Tensor affine(const Tensor& a, double alpha, double shift) {
  std::vector<double> out(static_cast<std::size_t>(a.numel()));
  kernels::scale(a.values(), alpha, shift, out);
  Tensor result(a.shape(), std::move(out));
  if (TapeAccess::should_record({&a})) {
    TapeAccess::attach(result, {&a},
                       [alpha](const Tensor& g, const std::array<bool, 3>&,
                               std::array<Tensor, 3>& grads) { grads[0] = affine(g, alpha); });
  }
  return result;
}

Tensor exp(const Tensor& a) {
  Tensor out = unary(kernels::UnaryOp::kExp, a);
  if (TapeAccess::should_record({&a})) {
    TapeAccess::attach(out, {&a},
                       [a](const Tensor& g, const std::array<bool, 3>&,
                           std::array<Tensor, 3>& grads) { grads[0] = mul(g, exp(a)); });
  }
  return out;
}

Tensor log(const Tensor& a) {
  Tensor out = unary(kernels::UnaryOp::kLog, a);
  if (TapeAccess::should_record({&a})) {
    TapeAccess::attach(out, {&a},
                       [a](const Tensor& g, const std::array<bool, 3>&,
                           std::array<Tensor, 3>& grads) { grads[0] = div(g, a); });
  }
  return out;
}

Tensor sqrt(const Tensor& a) {
  Tensor out = unary(kernels::UnaryOp::kSqrt, a);
  if (TapeAccess::should_record({&a})) {
    TapeAccess::attach(out, {&a},
                       [a](const Tensor& g, const std::array<bool, 3>&,
                           std::array<Tensor, 3>& grads) {
                         grads[0] = div(affine(g, 0.5), sqrt(a));
                       });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  std::vector<double> mask(static_cast<std::size_t>(a.numel()));
  auto v = a.values();
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = v[i] > 0.0 ? 1.0 : 0.0;
  return mul(a, Tensor(a.shape(), std::move(mask)));
}

Tensor abs(const Tensor& a) {
  std::vector<double> sign(static_cast<std::size_t>(a.numel()));
  auto v = a.values();
  for (std::size_t i = 0; i < sign.size(); ++i) {
    sign[i] = v[i] > 0.0 ? 1.0 : (v[i] < 0.0 ? -1.0 : 0.0);
  }
  return mul(a, Tensor(a.shape(), std::move(sign)));
}

Tensor sum(const Tensor& a) {
  Tensor out = Tensor::scalar(kernels::sum(a.values()));
  if (TapeAccess::should_record({&a})) {
    TapeAccess::attach(out, {&a},
                       [shape = a.shape()](const Tensor& g, const std::array<bool, 3>&,
                                           std::array<Tensor, 3>& grads) {
                         grads[0] = expand(g, shape);
                       });
  }
  return out;
}

Tensor expand(const Tensor& s, const Shape& shape) {
  if (s.numel() != 1) throw ShapeError("expand() needs a one-element tensor");
  Tensor out = Tensor::full(shape, s[0]);
  if (TapeAccess::should_record({&s})) {
    TapeAccess::attach(out, {&s},
                       [sshape = s.shape()](const Tensor& g, const std::array<bool, 3>&,
                                            std::array<Tensor, 3>& grads) {
                         grads[0] = reshape(sum(g), sshape);
                       });
  }
  return out;
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw ShapeError("dot: size mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  if (a.shape() != b.shape()) return sum(mul(reshape(a, {a.numel()}), reshape(b, {b.numel()})));
  return sum(mul(a, b));
}

Tensor norm(const Tensor& a) { return sqrt(dot(a, a)); }

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul needs 2-D operands, got " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const Index m = trans_a ? a.dim(1) : a.dim(0);
  const Index k = trans_a ? a.dim(0) : a.dim(1);
  const Index k2 = trans_b ? b.dim(1) : b.dim(0);
  const Index n = trans_b ? b.dim(0) : b.dim(1);
  if (k != k2) {
    throw ShapeError("matmul: inner dimensions differ " + to_string(a.shape()) +
                     (trans_a ? "^T" : "") + " * " + to_string(b.shape()) + (trans_b ? "^T" : ""));
  }
  std::vector<double> out(static_cast<std::size_t>(m * n));
  kernels::gemm(trans_a, trans_b, m, n, k, a.values().data(), b.values().data(), out.data());
  Tensor result({m, n}, std::move(out));
  if (TapeAccess::should_record({&a, &b})) {
    TapeAccess::attach(
        result, {&a, &b},
        [a, b, trans_a, trans_b](const Tensor& g, const std::array<bool, 3>& needs,
                                 std::array<Tensor, 3>& grads) {
          if (needs[0]) {
            grads[0] = trans_a ? matmul(b, g, trans_b, true) : matmul(g, b, false, !trans_b);
          }
          if (needs[1]) {
            grads[1] = trans_b ? matmul(g, a, true, trans_a) : matmul(a, g, !trans_a, false);
          }
        });
  }
  return result;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    throw ShapeError("reshape " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  Tensor result = TapeAccess::share(a, std::move(shape));
  if (TapeAccess::should_record({&a})) {
    TapeAccess::attach(result, {&a},
                       [from = a.shape()](const Tensor& g, const std::array<bool, 3>&,
                                          std::array<Tensor, 3>& grads) {
                         grads[0] = reshape(g, from);
                       });
  }
  return result;
}

Tensor gather(const Tensor& a, const IndexMap& map, Shape shape) {
  if (a.numel() != map.source_size ||
      numel_of(shape) != static_cast<Index>(map.index->size())) {
    throw ShapeError("gather: index map does not fit " + to_string(a.shape()) + " -> " +
                     to_string(shape));
  }
  std::vector<double> out(map.index->size());
  kernels::gather(a.values(), *map.index, out);
  Tensor result(std::move(shape), std::move(out));
  if (TapeAccess::should_record({&a})) {
    TapeAccess::attach(result, {&a},
                       [map, from = a.shape()](const Tensor& g, const std::array<bool, 3>&,
                                               std::array<Tensor, 3>& grads) {
                         grads[0] = scatter_add(g, map, from);
                       });
  }
  return result;
}

Tensor scatter_add(const Tensor& a, const IndexMap& map, Shape shape) {
  if (numel_of(shape) != map.source_size ||
      a.numel() != static_cast<Index>(map.index->size())) {
    throw ShapeError("scatter_add: index map does not fit " + to_string(a.shape()) + " -> " +
                     to_string(shape));
  }
  std::vector<double> out(static_cast<std::size_t>(map.source_size), 0.0);
  kernels::scatter_add(a.values(), *map.index, out, map.injective);
  Tensor result(std::move(shape), std::move(out));
  if (TapeAccess::should_record({&a})) {
    TapeAccess::attach(result, {&a},
                       [map, from = a.shape()](const Tensor& g, const std::array<bool, 3>&,
                                               std::array<Tensor, 3>& grads) {
                         grads[0] = gather(g, map, from);
                       });
  }
  return result;
}

Tensor slice(const Tensor& a, Index offset, Shape shape) {
  const Index n = numel_of(shape);
  if (offset < 0 || offset + n > a.numel()) {
    throw ShapeError("slice out of range: offset " + std::to_string(offset) + " size " +
                     std::to_string(n) + " of " + std::to_string(a.numel()));
  }
  auto v = a.values();
  Tensor result(std::move(shape), std::vector<double>(v.begin() + offset, v.begin() + offset + n));
  if (TapeAccess::should_record({&a})) {
    TapeAccess::attach(result, {&a},
                       [offset, from = a.shape()](const Tensor& g, const std::array<bool, 3>&,
                                                  std::array<Tensor, 3>& grads) {
                         grads[0] = pad(g, offset, from);
                       });
  }
  return result;
}

Tensor pad(const Tensor& a, Index offset, Shape shape) {
  const Index n = numel_of(shape);
  if (offset < 0 || offset + a.numel() > n) {
    throw ShapeError("pad out of range");
  }
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  auto v = a.values();
  std::copy(v.begin(), v.end(), out.begin() + offset);
  Tensor result(std::move(shape), std::move(out));
  if (TapeAccess::should_record({&a})) {
    TapeAccess::attach(result, {&a},
                       [offset, from = a.shape()](const Tensor& g, const std::array<bool, 3>&,
                                                  std::array<Tensor, 3>& grads) {
                         grads[0] = slice(g, offset, from);
                       });
  }
  return result;
}

Tensor concat(std::span<const Tensor> parts) {
  Index total = 0;
  for (const Tensor& p : parts) total += p.numel();
  Tensor out;
  Index offset = 0;
  for (const Tensor& p : parts) {
    Tensor placed = pad(reshape(p, {p.numel()}), offset, {total});
    out = out.defined() ? add(out, placed) : placed;
    offset += p.numel();
  }
  return out.defined() ? out : Tensor::zeros({0});
}

}  // namespace fuleak
