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

#include <cstdint>
#include <string>

#include "fuleak/data.hpp"
#include "fuleak/objective.hpp"
#include "fuleak/solve.hpp"

namespace fuleak {

enum class UnlearnAlgo { kAscent, kHalimi, kAbl, kAlam, kNewton };

std::string to_string(UnlearnAlgo algo);
UnlearnAlgo parse_unlearn_algo(const std::string& name);
bool needs_retain(UnlearnAlgo algo);

// The retain Hessian is usually indefinite, which breaks plain CG.
enum class NewtonSolver { kMinres, kCg, kDense };

struct UnlearnConfig {
  UnlearnAlgo algo = UnlearnAlgo::kAscent;
  double eta = 0.1;
  int epochs = 1;
  Index batch = 1;
  double delta = 10.0;
  double alam_alpha = 1.0;
  double alam_beta = 1.0;
  double alam_gamma = 1e-4;
  double newton_damp = 1e-3;
  double newton_eta = 1e-3;
  NewtonSolver newton_solver = NewtonSolver::kMinres;
  double cg_tol = 1e-8;
  int cg_max_iter = 500;
  std::uint64_t seed = 0;

  void validate() const;
};

// Dense solves are refused above this many parameters.
inline constexpr Index kDenseSolveLimit = 20000;

// Unit direction (theta - anchor)/||theta - anchor||; zero at theta == anchor.
Tensor proximal_direction(const Tensor& theta, const Tensor& anchor);
// d/dtheta ||theta / clamp(anchor)||_2 with the anchor clamped to
// sign(a) * max(|a|, 1e-6).
Tensor ratio_norm_grad(const Tensor& theta, const Tensor& anchor);

// One first-order update theta -> theta' from the unlearn and retain batch
// gradients at theta. Built from tensor ops, so it is differentiable when its
// inputs are tracked. `grad_r` is ignored by ascent and halimi.
Tensor unlearn_step(const UnlearnConfig& cfg, const Tensor& theta, const Tensor& theta_s,
                    const Tensor& grad_u, const Tensor& grad_r);

struct UnlearnResult {
  Tensor theta_c;
  Index steps = 0;
  SolveResult solve;  // newton only
  // Retain indices paired with D_u in the first epoch (or the Hessian batch).
  std::vector<Index> retain_used;
};

// Unlearning against an arbitrary loss over index sets.
UnlearnResult unlearn(const Tensor& theta_s, const BatchLoss& loss, std::span<const Index> du,
                      std::span<const Index> dr, const UnlearnConfig& cfg);

struct ClientUnlearnResult {
  ParamVector theta_c;
  Index steps = 0;
  SolveResult solve;
  std::vector<Index> retain_used;
};

ClientUnlearnResult unlearn(const ParamVector& theta_s, const ClientDataset& cd,
                            const UnlearnConfig& cfg);

// Newton direction (H_r + damp I)^-1 g_u with H_r applied by `hessian`.
SolveResult newton_direction(const LinearOp& hessian, const Tensor& grad_u,
                             const UnlearnConfig& cfg);

}  // namespace fuleak
