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

#include "fuleak/fed.hpp"
#include "fuleak/solve.hpp"
#include "fuleak/unlearn.hpp"

namespace fuleak {
namespace {

// Sample i pulls a scalar theta toward targets[i]: L = mean 1/2 (theta - t_i)^2.
BatchLoss toy(std::vector<double> targets) {
  return [targets](const Tensor& theta, std::span<const Index> batch) {
    Tensor total = Tensor::scalar(0.0);
    for (Index i : batch) {
      const Tensor d = affine(theta, 1.0, -targets[static_cast<std::size_t>(i)]);
      total = add(total, affine(dot(d, d), 0.5));
    }
    return affine(total, 1.0 / static_cast<double>(batch.size()));
  };
}

UnlearnConfig with(UnlearnAlgo a) {
  UnlearnConfig c;
  c.algo = a;
  c.eta = 0.1;
  return c;
}

const std::vector<Index> kU = {0}, kR = {1};

TEST(Unlearn, AscentHandGradient) {
  const auto r = unlearn(Tensor::vector({0.0}), toy({1.0, 5.0}), kU, kR, with(UnlearnAlgo::kAscent));
  EXPECT_DOUBLE_EQ(r.theta_c[0], -0.1);
  EXPECT_EQ(r.steps, 1);
}

TEST(Unlearn, AblIdenticalRetainCancels) {
  const auto r = unlearn(Tensor::vector({0.3}), toy({1.0, 1.0}), kU, kR, with(UnlearnAlgo::kAbl));
  EXPECT_EQ(r.theta_c[0], 0.3);
}

TEST(Unlearn, HalimiFirstStepIsAscent) {
  const auto h = unlearn(Tensor::vector({0.0}), toy({1.0, 5.0}), kU, kR, with(UnlearnAlgo::kHalimi));
  const auto a = unlearn(Tensor::vector({0.0}), toy({1.0, 5.0}), kU, kR, with(UnlearnAlgo::kAscent));
  EXPECT_EQ(h.theta_c[0], a.theta_c[0]);
}

TEST(Unlearn, NewtonIdentityHessian) {
  // L_r = 1/2 theta^2 (target 0), so H_r = I and the direction is grad L_u.
  UnlearnConfig c = with(UnlearnAlgo::kNewton);
  c.newton_damp = 0.0;
  const Tensor theta = Tensor::vector({0.4});
  const auto r = unlearn(theta, toy({1.5, 0.0}), kU, kR, c);
  EXPECT_NEAR(r.solve.x[0], 0.4 - 1.5, 1e-12);
  EXPECT_NEAR(r.theta_c[0], 0.4 + c.newton_eta * (0.4 - 1.5), 1e-15);
}

TEST(Unlearn, NewtonDenseAgreesWithCg) {
  ModelSpec spec{ModelKind::kMlp, {1, 3, 3}, 3, 4};
  auto data = std::make_shared<Dataset>(synth_blobs(3, 4, {1, 3, 3}, 1.0, 2));
  ClientDataset cd = mark_unlearn(partition(data, 1, 1)[0], 3, 4);
  UnlearnConfig c = with(UnlearnAlgo::kNewton);
  c.newton_solver = NewtonSolver::kCg;
  c.newton_damp = 5.0;  // the MLP Hessian is indefinite; damping makes it SPD
  c.cg_max_iter = 2000;
  c.cg_tol = 1e-12;
  const ParamVector p = init_params(spec, 3);
  const auto cg = unlearn(p, cd, c);
  c.newton_solver = NewtonSolver::kDense;
  const auto dense = unlearn(p, cd, c);
  for (Index i = 0; i < p.size(); ++i) EXPECT_NEAR(cg.theta_c.values[i], dense.theta_c.values[i], 1e-9);
}

TEST(Unlearn, NewtonMinresOnIndefiniteHessian) {
  ModelSpec spec{ModelKind::kMlp, {1, 3, 3}, 3, 4};
  auto data = std::make_shared<Dataset>(synth_blobs(3, 4, {1, 3, 3}, 1.0, 2));
  ClientDataset cd = mark_unlearn(partition(data, 1, 1)[0], 3, 4);
  UnlearnConfig c = with(UnlearnAlgo::kNewton);  // default damp 1e-3
  c.cg_tol = 1e-11;
  const ParamVector p = init_params(spec, 3);
  c.newton_solver = NewtonSolver::kCg;
  EXPECT_THROW(unlearn(p, cd, c), NumericError);
  c.newton_solver = NewtonSolver::kMinres;
  const auto mr = unlearn(p, cd, c);
  EXPECT_TRUE(mr.solve.converged);
  c.newton_solver = NewtonSolver::kDense;
  const auto dense = unlearn(p, cd, c);
  double scale = 0;
  for (Index i = 0; i < p.size(); ++i) scale = std::max(scale, std::abs(dense.solve.x[i]));
  for (Index i = 0; i < p.size(); ++i) EXPECT_NEAR(mr.solve.x[i], dense.solve.x[i], 1e-6 * scale);
}

TEST(Unlearn, RetainRequired) {
  try {
    unlearn(Tensor::vector({0.0}), toy({1.0}), kU, {}, with(UnlearnAlgo::kAbl));
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("retain set required"), std::string::npos);
  }
}

TEST(Unlearn, EpochsValidated) {
  UnlearnConfig c = with(UnlearnAlgo::kAscent);
  c.epochs = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Unlearn, AlamReplay) {
  ModelSpec spec{ModelKind::kMlp, {1, 3, 3}, 3, 4};
  auto data = std::make_shared<Dataset>(synth_blobs(3, 4, {1, 3, 3}, 1.0, 2));
  ClientDataset cd = mark_unlearn(partition(data, 1, 1)[0], 1, 4);
  UnlearnConfig c = with(UnlearnAlgo::kAlam);
  c.alam_alpha = 0.7;
  c.alam_beta = 1.3;
  c.alam_gamma = 0.01;
  const ParamVector p = init_params(spec, 3);
  const auto r = unlearn(p, cd, c);
  ASSERT_EQ(r.retain_used.size(), 1u);

  // Straight-line three-term update on plain vectors.
  auto grad_at = [&](std::span<const Index> idx) {
    return loss_grads(spec, p.values, data->gather_images(idx), data->gather_labels(idx)).params.to_vector();
  };
  const auto gu = grad_at(cd.unlearn), gr = grad_at(r.retain_used);
  const auto th = p.values.to_vector();
  std::vector<double> s(th.size()), ratio(th.size());
  double rn = 0;
  for (std::size_t i = 0; i < th.size(); ++i) {
    const double c0 = std::max(std::abs(th[i]), 1e-6);
    s[i] = 1.0 / (th[i] < 0 ? -c0 : c0);
    ratio[i] = th[i] * s[i];
    rn += ratio[i] * ratio[i];
  }
  rn = std::sqrt(rn);
  for (std::size_t i = 0; i < th.size(); ++i) {
    const double pen = ratio[i] * s[i] / rn;
    const double dir = (0.7 * gr[i] - 1.3 * gu[i]) + 0.01 * pen;
    EXPECT_EQ(r.theta_c.values[static_cast<Index>(i)], th[i] - 0.1 * dir) << i;
  }
}

TEST(Solve, CgAndDenseOnSpd) {
  const Tensor a({3, 3}, {4, 1, 0, 1, 3, 1, 0, 1, 2});
  LinearOp op = [&](const Tensor& v) { return reshape(matmul(a, reshape(v, {3, 1})), {3}); };
  const Tensor b = Tensor::vector({1, 2, 3});
  const SolveResult cg = conjugate_gradient(op, b, 0.0, 1e-14, 50);
  const SolveResult lu = dense_solve(op, b, 0.0);
  ASSERT_TRUE(cg.converged);
  const Tensor back = op(lu.x);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(cg.x[i], lu.x[i], 1e-12);
    EXPECT_NEAR(back[i], b[i], 1e-12);
  }
}

TEST(Solve, MinresOnIndefinite) {
  // eigenvalues of opposite sign
  const Tensor a({3, 3}, {1, 2, 0, 2, -1, 1, 0, 1, -3});
  LinearOp op = [&](const Tensor& v) { return reshape(matmul(a, reshape(v, {3, 1})), {3}); };
  const Tensor b = Tensor::vector({1, -2, 0.5});
  const SolveResult mr = minres(op, b, 0.25, 1e-13, 50);
  const SolveResult lu = dense_solve(op, b, 0.25);
  ASSERT_TRUE(mr.converged);
  EXPECT_LE(mr.iterations, 3);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(mr.x[i], lu.x[i], 1e-11);
}

TEST(Solve, MinresZeroRhs) {
  LinearOp op = [](const Tensor& v) { return v; };
  const SolveResult r = minres(op, Tensor::vector({0, 0}), 0.0, 1e-10, 5);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.x[0], 0.0);
}

TEST(Solve, CgReportsNegativeCurvature) {
  LinearOp op = [](const Tensor& v) { return affine(v, -1.0); };
  EXPECT_FALSE(conjugate_gradient(op, Tensor::vector({1, 1}), 0.0, 1e-10, 10).converged);
}

}  // namespace
}  // namespace fuleak
