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
#include <random>

#include "fuleak/model.hpp"
#include "fuleak/theory.hpp"

namespace fuleak {
namespace {

std::vector<double> vals(const Tensor& t) { return t.to_vector(); }

Tensor random(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(numel_of(s)));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(s), std::move(v));
}

TEST(Elementwise, Examples) {
  EXPECT_EQ(vals(add(Tensor::vector({1, 2}), Tensor::vector({3, 4}))), (std::vector<double>{4, 6}));
  EXPECT_EQ(vals(mul(Tensor::vector({2}), Tensor::vector({0}))), (std::vector<double>{0}));
  EXPECT_EQ(vals(relu(Tensor::vector({-1, 0, 2}))), (std::vector<double>{0, 0, 2}));
}

TEST(Elementwise, ShapeMismatchThrows) {
  EXPECT_THROW(add(Tensor::vector({1, 2}), Tensor::vector({1, 2, 3})), ShapeError);
}

TEST(Elementwise, ScalarBroadcast) {
  EXPECT_EQ(vals(add(Tensor::vector({1, 2}), Tensor::scalar(1))), (std::vector<double>{2, 3}));
}

TEST(Tensor, ConstructorChecksLength) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), ShapeError);
}

TEST(Tensor, CheckFinite) {
  EXPECT_THROW(log(Tensor::vector({-1.0})).check_finite("log"), NumericError);
  EXPECT_NO_THROW(Tensor::vector({1.0}).check_finite("ok"));
}

TEST(Matmul, Identity) {
  const Tensor eye({2, 2}, {1, 0, 0, 1}), m({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(vals(matmul(eye, m)), vals(m));
}

TEST(Matmul, SelectorRow) {
  const Tensor sel({1, 2}, {1, 0}), col({2, 1}, {7.5, -3});
  EXPECT_EQ(vals(matmul(sel, col)), (std::vector<double>{7.5}));
}

TEST(Matmul, TripleLoopOracle) {
  const Tensor a = random({3, 4}, 1), b = random({4, 2}, 2);
  const Tensor c = matmul(a, b);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 2; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += a[i * 4 + k] * b[k * 2 + j];
      EXPECT_NEAR(c[i * 2 + j], s, 1e-15);
    }
  }
}

TEST(Matmul, Transposes) {
  const Tensor a = random({4, 3}, 3), b = random({2, 4}, 4);
  const Tensor c = matmul(a, b, true, true);  // a^T b^T : 3x2
  ASSERT_EQ(c.shape(), (Shape{3, 2}));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 2; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += a[k * 3 + i] * b[j * 4 + k];
      EXPECT_NEAR(c[i * 2 + j], s, 1e-15);
    }
  }
}

TEST(Matmul, InnerDimMismatch) {
  EXPECT_THROW(matmul(random({2, 3}, 1), random({2, 3}, 2)), ShapeError);
}

TEST(Grad, Square) {
  Tape tape;
  const Tensor x = tape.watch(Tensor::scalar(3));
  EXPECT_DOUBLE_EQ(grad(mul(x, x), x).item(), 6.0);
}

TEST(Grad, SecondDerivativeOfSquare) {
  for (double at : {-2.0, 0.0, 1.5}) {
    Tape tape;
    const Tensor x = tape.watch(Tensor::scalar(at));
    const Tensor g = grad(mul(x, x), x, true);
    EXPECT_DOUBLE_EQ(grad(g, x).item(), 2.0);
  }
}

TEST(Grad, ThirdDerivativeOfCube) {
  Tape tape;
  const Tensor x = tape.watch(Tensor::scalar(1.7));
  const Tensor y = mul(mul(x, x), x);
  const Tensor d1 = grad(y, x, true);
  const Tensor d2 = grad(d1, x, true);
  const Tensor d3 = grad(d2, x);
  EXPECT_NEAR(d1.item(), 3 * 1.7 * 1.7, 1e-12);
  EXPECT_NEAR(d2.item(), 6 * 1.7, 1e-12);
  EXPECT_NEAR(d3.item(), 6.0, 1e-12);
}

TEST(Grad, UnreachableGetsZeros) {
  Tape tape;
  const Tensor x = tape.watch(Tensor::vector({1, 2})), z = tape.watch(Tensor::vector({3}));
  std::vector<bool> flags;
  const Tensor wrt[] = {x, z};
  auto g = grad(sum(mul(x, x)), wrt, false, &flags);
  EXPECT_EQ(vals(g[0]), (std::vector<double>{2, 4}));
  EXPECT_EQ(vals(g[1]), (std::vector<double>{0}));
  EXPECT_EQ(flags, (std::vector<bool>{false, true}));
}

TEST(Grad, MlpAgainstFiniteDifferences) {
  ModelSpec spec{ModelKind::kMlp, {1, 4, 4}, 3, 5};
  const ParamVector p = init_params(spec, 7);
  const Tensor x = random({2, 1, 4, 4}, 8, 0, 1);
  const std::vector<int> y = {0, 2};
  const LossGrads lg = loss_grads(spec, p.values, x, y);
  const Tensor fd = finite_diff_grad(
      [&](const Tensor& t) { return cross_entropy(forward(spec, t, x), y).item(); }, p.values, 1e-5);
  double num = 0, den = 0;
  for (Index i = 0; i < fd.numel(); ++i) {
    num += std::pow(lg.params[i] - fd[i], 2);
    den += fd[i] * fd[i];
  }
  EXPECT_LT(std::sqrt(num / den), 1e-4);
}

TEST(Hvp, IdentityHessian) {
  const Tensor theta = random({6}, 1), v = random({6}, 2);
  const Tensor h = hvp([](const Tensor& t) { return affine(dot(t, t), 0.5); }, theta, v);
  for (Index i = 0; i < 6; ++i) EXPECT_NEAR(h[i], v[i], 1e-14);
}

TEST(Hvp, QuadraticForm) {
  const Tensor a({3, 3}, {2, 1, 0, 1, 3, -1, 0, -1, 4});
  const Tensor theta = random({3}, 3), v = random({3}, 4);
  const Tensor h = hvp(
      [&](const Tensor& t) { return dot(t, reshape(matmul(a, reshape(t, {3, 1})), {3})); }, theta, v);
  for (int i = 0; i < 3; ++i) {
    double want = 0;
    for (int j = 0; j < 3; ++j) want += 2 * a[i * 3 + j] * v[j];
    EXPECT_NEAR(h[i], want, 1e-13);
  }
}

TEST(Hvp, MlpAgainstDenseFiniteDifferenceHessian) {
  ModelSpec spec{ModelKind::kMlp, {1, 2, 2}, 2, 3};
  // Random biases keep every ReLU away from its kink.
  const ParamVector p = make_params(spec, random({parameter_count(spec)}, 5));
  const Tensor x = random({2, 1, 2, 2}, 6, 0, 1);
  const std::vector<int> y = {1, 0};
  auto loss = [&](const Tensor& t) { return cross_entropy(forward(spec, t, x), y); };
  const Index d = p.size();
  const Tensor v = random({d}, 9);
  const Tensor got = hvp(loss, p.values, v);
  // H column j from central differences of the analytic gradient.
  const double h = 1e-5;
  std::vector<double> want(static_cast<std::size_t>(d), 0.0);
  for (Index j = 0; j < d; ++j) {
    std::vector<double> up = p.values.to_vector(), dn = up;
    up[j] += h;
    dn[j] -= h;
    const Tensor gu = loss_grads(spec, Tensor({d}, up), x, y).params;
    const Tensor gd = loss_grads(spec, Tensor({d}, dn), x, y).params;
    for (Index i = 0; i < d; ++i) want[i] += (gu[i] - gd[i]) / (2 * h) * v[j];
  }
  double num = 0, den = 0;
  for (Index i = 0; i < d; ++i) {
    num += std::pow(got[i] - want[i], 2);
    den += want[i] * want[i];
  }
  EXPECT_LT(std::sqrt(num / den), 1e-3);
}

TEST(Tape, NoRecordGuardStopsTracking) {
  Tape tape;
  const Tensor x = tape.watch(Tensor::scalar(2));
  EXPECT_TRUE(mul(x, x).tracked());
  NoRecordGuard off;
  EXPECT_FALSE(mul(x, x).tracked());
}

TEST(Tape, TopologicalOrderAcrossNestedBackward) {
  Tape tape;
  const Tensor x = tape.watch(Tensor::vector({0.3, -0.7}));
  const std::size_t before = tape.size();
  const Tensor g = grad(sum(mul(mul(x, x), x)), x, true);
  EXPECT_GT(tape.size(), before);  // backward recorded on the same tape
  const Tensor gg = grad(sum(g), x);
  EXPECT_NEAR(gg[0], 6 * 0.3, 1e-14);
  EXPECT_NEAR(gg[1], 6 * -0.7, 1e-14);
}

TEST(GatherScatter, Adjoint) {
  auto idx = std::make_shared<std::vector<Index>>(std::vector<Index>{2, -1, 0, 2});
  IndexMap map{idx, 3, false};
  const Tensor src = Tensor::vector({1, 2, 3});
  EXPECT_EQ(vals(gather(src, map, {4})), (std::vector<double>{3, 0, 1, 3}));
  EXPECT_EQ(vals(scatter_add(Tensor::vector({1, 1, 1, 1}), map, {3})), (std::vector<double>{1, 0, 2}));
}

}  // namespace
}  // namespace fuleak
