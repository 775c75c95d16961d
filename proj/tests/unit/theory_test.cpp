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

#include <gtest/gtest.h>

#include <cmath>

#include "fuleak/checks.hpp"
#include "fuleak/theory.hpp"

namespace fuleak {
namespace {

TEST(FiniteDiff, Polynomials) {
  auto sq = [](const Tensor& x) { return x[0] * x[0]; };
  EXPECT_NEAR(finite_diff_grad(sq, Tensor::vector({3.0}), 1e-5)[0], 6.0, 1e-9);
  auto sn = [](const Tensor& x) { return std::sin(x[0]); };
  EXPECT_NEAR(finite_diff_grad(sn, Tensor::vector({0.0}), 1e-5)[0], 1.0, 1e-10);
}

TEST(Jacobian, ZeroInputZeroWeights) {
  ModelSpec spec{ModelKind::kMlp, {1, 2, 2}, 3, 2};
  const Tensor j = jacobian_of_gradient(spec, Tensor::zeros({parameter_count(spec)}),
                                        Tensor::zeros({1, 1, 2, 2}), 1);
  for (double v : j.values()) EXPECT_EQ(v, 0.0);
}

TEST(Jacobian, MatchesFiniteDifferenceColumns) {
  const TheoryProbe p = make_probe(4, 4, 4);
  const Tensor j = jacobian_of_gradient(p.spec, p.theta, p.x_u, p.y_u);
  const Index rows = j.dim(0), cols = j.dim(1);
  for (Index c = 0; c < cols; c += 5) {
    const Tensor col = jacobian_column_fd(p.spec, p.theta, p.x_u, p.y_u, c, 1e-5);
    double num = 0, den = 0;
    for (Index r = 0; r < rows; ++r) {
      num += std::pow(j[r * cols + c] - col[r], 2);
      den += col[r] * col[r];
    }
    EXPECT_LT(std::sqrt(num / std::max(den, 1e-30)), 1e-3) << c;
  }
}

TEST(Stationarity, OrderingHolds) {
  for (std::uint64_t s = 1; s <= 3; ++s) {
    const TheoryProbe p = make_probe(s);
    EXPECT_LE(parameter_count(p.spec), 2000);
    const double coupled = stationarity_check(StationarityKind::kGiaOnCoupled, p);
    const double ascent = stationarity_check(StationarityKind::kGiaOnAscent, p);
    const double joint = stationarity_check(StationarityKind::kDraunJoint, p);
    EXPECT_GT(coupled, 1e-3);
    EXPECT_LT(ascent, 1e-8);
    EXPECT_LT(joint, 1e-8);
    EXPECT_GT(coupled, 100 * joint);
  }
}

TEST(Bound, HandCalculation) {
  // |J^T g_r| = 3, ||J||_F = 2, client grad 0.5, mu_x = 4, mu_theta = 1:
  // 3 / (4*2 + 2*1*0.5) = 1/3.
  EXPECT_NEAR(reconstruction_bound(3.0, 2.0, 0.5, {4.0, 1.0}), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(reconstruction_bound(0.0, 2.0, 0.5, {4.0, 1.0}), 0.0);
  EXPECT_EQ(reconstruction_bound(3.0, 0.0, 0.0, {4.0, 1.0}), 0.0);
}

TEST(Collapse, SharedInputCancels) {
  const TheoryProbe p = make_probe(2);
  const CollapseResult same = collapse_probe(p.spec, p.theta, p.x_u, Tensor(), p.y_u, p.y_u, 1, 0.1);
  EXPECT_EQ(same.g1_norm, 0.0);
}

TEST(LogLog, SlopeOfPowerLaw) {
  const std::vector<double> x = {1e-3, 1e-2, 1e-1}, y = {2e-6, 2e-4, 2e-2};
  EXPECT_NEAR(loglog_slope(x, y), 2.0, 1e-12);
}

TEST(Checks, VerifySuitesPass) {
  EXPECT_TRUE(all_pass(autodiff_checks(3)));
  EXPECT_TRUE(all_pass(stationarity_checks(3, 3)));
  EXPECT_TRUE(all_pass(collapse_checks(3)));
}

}  // namespace
}  // namespace fuleak
