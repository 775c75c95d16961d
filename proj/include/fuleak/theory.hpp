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
#include <functional>
#include <string>
#include <vector>

#include "fuleak/model.hpp"

namespace fuleak {

// Tiny MLP (8x8 inputs, <= 2,000 parameters) with one unlearn and one retain
// sample.
struct TheoryProbe {
  ModelSpec spec;
  Tensor theta;
  Tensor x_u;  // [1 x C x H x W]
  Tensor x_r;
  int y_u = 0;
  int y_r = 0;
  double h = 1e-5;
};

TheoryProbe make_probe(std::uint64_t seed, Index width = 16, Index side = 8);

// Central differences, one coordinate at a time.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);

// J = d(grad_theta L)/dx as a dense [d_theta x d_x] tensor, one nested
// reverse pass per input coordinate.
Tensor jacobian_of_gradient(const ModelSpec& spec, const Tensor& theta, const Tensor& x, int y);

// Column j of J by central differences of grad_theta L.
Tensor jacobian_column_fd(const ModelSpec& spec, const Tensor& theta, const Tensor& x, int y,
                          Index j, double h);

struct SingularRange {
  double max = 0.0;
  double min = 0.0;
};
SingularRange singular_values(const Tensor& j);

enum class StationarityKind { kGiaOnCoupled, kGiaOnAscent, kDraunJoint };
std::string to_string(StationarityKind kind);

// Squared-l2 similarity between the observed pseudo-gradient of a one-step
// client update (eta = 1) and the attacker's dummy pseudo-gradient:
//   gia-on-coupled: client abl, dummy -grad L(x, y_u), evaluated at x_u
//   gia-on-ascent:  client ascent, dummy -grad L(x, y_u), evaluated at x_u
//   draun-joint:    client abl, dummy grad L(x_r~) - grad L(x_u~), at (x_u, x_r)
// Returns the norm of the similarity gradient with respect to the dummies.
double stationarity_check(StationarityKind kind, const TheoryProbe& probe);

// Similarity value and gradient of gia-on-coupled at x.
double coupled_similarity(const TheoryProbe& probe, const Tensor& x, Tensor* grad_x);

// Descends gia-on-coupled from x_u with Adam until the gradient norm stalls.
Tensor coupled_minimizer(const TheoryProbe& probe, int iterations, double lr);

struct SmoothnessEstimate {
  double mu_x = 0.0;
  double mu_theta = 0.0;
};
// Largest gradient-difference ratio over `pairs` random pairs drawn in a
// ball of `radius` around x_u (for mu_x) and around theta (for mu_theta).
SmoothnessEstimate estimate_smoothness(const TheoryProbe& probe, int pairs, double radius,
                                       std::uint64_t seed);

struct BoundResult {
  double bound = 0.0;
  double lhs = 0.0;
  bool holds = false;
  double mu_x = 0.0;
  double mu_theta = 0.0;
  double jt_grad_r = 0.0;
  double jacobian_fro = 0.0;
  double client_grad = 0.0;
};

// ||J^T grad_r|| / (mu_x ||J||_F + 2 mu_theta ||client grad||), and 0 when
// the numerator or the denominator vanishes.
double reconstruction_bound(double jt_grad_r, double jacobian_fro, double client_grad,
                            const SmoothnessEstimate& mu);
BoundResult error_bound_eval(const TheoryProbe& probe, const Tensor& x_star,
                             const SmoothnessEstimate& mu);

struct CollapseResult {
  double g1_norm = 0.0;
  double grad_norm = 0.0;  // || d ||g1||^2 / d x_u ||
};

// x_u~ = x_shared, x_r~ = x_shared + offset held fixed; delta = 0 in the
// surrogate. grad_norm is taken with respect to x_u~ only.
CollapseResult collapse_probe(const ModelSpec& spec, const Tensor& theta_s,
                              const Tensor& x_shared, const Tensor& offset, int y_u, int y_r,
                              int epochs, double eta_unl);

// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

struct CheckLine {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::string note;
};

}  // namespace fuleak
