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

#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fuleak {

using Index = std::int64_t;
using Shape = std::vector<Index>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string to_string(const Shape& shape);
Index numel_of(const Shape& shape);

class Tensor;
std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> wrt,
                         bool create_graph, std::vector<bool>* unreachable);

// Dense row-major float64 array. The payload is immutable and shared, so
// copies are cheap. A tensor produced while a Tape is active, from inputs that
// are tracked on that tape, is itself tracked and can be differentiated.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  // 1-D tensor over `values`.
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  Index dim(std::size_t axis) const { return shape_.at(axis); }
  Index numel() const { return data_ ? static_cast<Index>(data_->size()) : 0; }
  bool defined() const { return data_ != nullptr; }

  std::span<const double> values() const;
  double operator[](Index i) const { return (*data_)[static_cast<std::size_t>(i)]; }
  double item() const;
  std::vector<double> to_vector() const { return *data_; }

  // True when the tensor is a node on the calling thread's active tape.
  bool tracked() const;
  // Same values, no tape participation.
  Tensor detach() const;
  // Throws NumericError if any entry is NaN or infinite.
  const Tensor& check_finite(const char* what) const;

 private:
  friend class Tape;
  friend struct TapeAccess;
  friend std::vector<Tensor> grad(const Tensor&, std::span<const Tensor>, bool,
                                  std::vector<bool>*);

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  std::uint64_t tape_id_ = 0;
  std::int32_t node_ = -1;
};

// Gradient of one op with respect to its inputs. `needs[i]` says whether the
// caller wants input i; `grads[i]` is left undefined otherwise.
using BackwardFn = std::function<void(const Tensor& grad_out,
                                      const std::array<bool, 3>& needs,
                                      std::array<Tensor, 3>& grads)>;

// Records operations in execution order. Constructing a Tape makes it the
// active tape of the calling thread until it is destroyed; tapes nest as a
// stack. Backward passes run with create_graph append their own operations to
// the same tape, so gradients can themselves be differentiated to any depth.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers `t` as a differentiable leaf on this tape.
  Tensor watch(const Tensor& t);
  std::size_t size() const { return nodes_.size(); }

  static Tape* active();

 private:
  friend struct TapeAccess;
  friend std::vector<Tensor> grad(const Tensor&, std::span<const Tensor>, bool,
                                  std::vector<bool>*);

  struct Node {
    std::array<std::int32_t, 3> inputs{-1, -1, -1};
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  std::uint64_t id_;
  Tape* previous_;
};

// Suspends recording on the calling thread for its lifetime.
class NoRecordGuard {
 public:
  NoRecordGuard();
  ~NoRecordGuard();
  NoRecordGuard(const NoRecordGuard&) = delete;
  NoRecordGuard& operator=(const NoRecordGuard&) = delete;

 private:
  bool previous_;
};

// d output / d wrt for a scalar output tracked on the active tape. With
// create_graph the returned tensors are tracked too. A wrt tensor that the
// output does not depend on gets zeros and, if `unreachable` is given, a true
// flag at its position.
std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> wrt,
                         bool create_graph = false,
                         std::vector<bool>* unreachable = nullptr);
Tensor grad(const Tensor& output, const Tensor& wrt, bool create_graph = false);

// Hessian-vector product grad(<grad(loss, theta), v>, theta). `loss` is called
// once with a tracked copy of theta.
Tensor hvp(const std::function<Tensor(const Tensor&)>& loss, const Tensor& theta,
           const Tensor& v);

// Index map for gather/scatter: out[i] = src[index[i]], with -1 meaning zero.
struct IndexMap {
  std::shared_ptr<const std::vector<Index>> index;
  Index source_size = 0;
  bool injective = false;
};

// Elementwise; a one-element operand broadcasts.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
// alpha * a + shift
Tensor affine(const Tensor& a, double alpha, double shift = 0.0);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
// Derivative at 0 is 0.
Tensor relu(const Tensor& a);
Tensor abs(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor expand(const Tensor& scalar, const Shape& shape);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor norm(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false,
              bool trans_b = false);
Tensor reshape(const Tensor& a, Shape shape);
Tensor gather(const Tensor& a, const IndexMap& map, Shape shape);
Tensor scatter_add(const Tensor& a, const IndexMap& map, Shape shape);
// Contiguous window of the flattened tensor, and its adjoint.
Tensor slice(const Tensor& a, Index offset, Shape shape);
Tensor pad(const Tensor& a, Index offset, Shape shape);
Tensor concat(std::span<const Tensor> parts);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double s) { return affine(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return affine(a, s); }

}  // namespace fuleak
