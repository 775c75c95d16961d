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

#include <functional>

#include "fuleak/tensor.hpp"

namespace fuleak {

// v -> A v for a symmetric operator on flat vectors.
using LinearOp = std::function<Tensor(const Tensor&)>;

struct SolveResult {
  Tensor x;
  int iterations = 0;
  double residual = 0.0;  // ||b - A x|| / ||b||
  bool converged = false;
};

// Conjugate gradient on (A + damp I) x = b, starting from zero. Stops when
// the relative residual drops below `tol`. Non-positive curvature along a
// search direction ends the solve with converged = false.
SolveResult conjugate_gradient(const LinearOp& a, const Tensor& b, double damp, double tol,
                               int max_iter);

// MINRES on (A + damp I) x = b. Works for symmetric indefinite A as long as
// A + damp I is nonsingular; `residual` is the recurrence estimate.
SolveResult minres(const LinearOp& a, const Tensor& b, double damp, double tol, int max_iter);

// Builds A column by column and solves (A + damp I) x = b with a
// pivoted LU factorization. Only for small systems.
SolveResult dense_solve(const LinearOp& a, const Tensor& b, double damp);

// Hessian of a loss at fixed theta, recorded once and applied by backward
// passes over the same graph. Keeps its own tape active for its lifetime, so
// instances must be destroyed in reverse order of creation.
class HessianOperator {
 public:
  HessianOperator(const std::function<Tensor(const Tensor&)>& loss, const Tensor& theta);
  Tensor apply(const Tensor& v) const;
  const Tensor& gradient() const { return grad_detached_; }

 private:
  Tape tape_;
  Tensor theta_;
  Tensor grad_;
  Tensor grad_detached_;
};

}  // namespace fuleak
