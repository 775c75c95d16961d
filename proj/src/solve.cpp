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

#include "fuleak/solve.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "fuleak/kernels.hpp"

namespace fuleak {

namespace {

std::vector<double> axpy(double alpha, std::span<const double> x, std::span<const double> y) {
  std::vector<double> out(y.begin(), y.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha * x[i];
  return out;
}

}  // namespace

SolveResult conjugate_gradient(const LinearOp& a, const Tensor& b, double damp, double tol,
                               int max_iter) {
  const Shape shape = b.shape();
  const std::size_t n = static_cast<std::size_t>(b.numel());
  SolveResult out;
  std::vector<double> x(n, 0.0);
  std::vector<double> r(b.values().begin(), b.values().end());
  std::vector<double> p = r;
  const double b_norm = std::sqrt(kernels::dot(r, r));
  if (b_norm == 0.0) {
    out.x = Tensor(shape, std::move(x));
    out.converged = true;
    return out;
  }
  double rr = b_norm * b_norm;
  for (int it = 0; it < max_iter; ++it) {
    if (std::sqrt(rr) / b_norm < tol) {
      out.converged = true;
      break;
    }
    Tensor ap_t = a(Tensor(shape, p));
    std::vector<double> ap(ap_t.values().begin(), ap_t.values().end());
    for (std::size_t i = 0; i < n; ++i) ap[i] += damp * p[i];
    const double curv = kernels::dot(p, ap);
    if (!(curv > 0.0)) break;
    const double alpha = rr / curv;
    x = axpy(alpha, p, x);
    r = axpy(-alpha, ap, r);
    const double rr_new = kernels::dot(r, r);
    const double beta = rr_new / rr;
    rr = rr_new;
    p = axpy(beta, p, r);
    out.iterations = it + 1;
  }
  out.residual = std::sqrt(rr) / b_norm;
  if (out.residual < tol) out.converged = true;
  out.x = Tensor(shape, std::move(x));
  return out;
}

SolveResult minres(const LinearOp& a, const Tensor& b, double damp, double tol, int max_iter) {
  // Paige-Saunders recurrences without preconditioning.
  const Shape shape = b.shape();
  const std::size_t n = static_cast<std::size_t>(b.numel());
  SolveResult out;
  std::vector<double> x(n, 0.0), w(n, 0.0), w1(n, 0.0), w2(n, 0.0);
  std::vector<double> r1(b.values().begin(), b.values().end());
  std::vector<double> r2 = r1, y = r1, v(n);
  const double beta1 = std::sqrt(kernels::dot(r1, r1));
  if (beta1 == 0.0) {
    out.x = Tensor(shape, std::move(x));
    out.converged = true;
    return out;
  }
  double beta = beta1, oldb = 0.0, dbar = 0.0, epsln = 0.0, phibar = beta1;
  double cs = -1.0, sn = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) v[i] = y[i] / beta;
    Tensor av = a(Tensor(shape, v));
    auto avv = av.values();
    for (std::size_t i = 0; i < n; ++i) y[i] = avv[i] + damp * v[i];
    if (it > 0) y = axpy(-beta / oldb, r1, y);
    const double alfa = kernels::dot(v, y);
    y = axpy(-alfa / beta, r2, y);
    r1 = r2;
    r2 = y;
    oldb = beta;
    beta = std::sqrt(kernels::dot(y, y));
    const double oldeps = epsln;
    const double delta = cs * dbar + sn * alfa;
    const double gbar = sn * dbar - cs * alfa;
    epsln = sn * beta;
    dbar = -cs * beta;
    const double gamma = std::max(std::hypot(gbar, beta), 1e-300);
    cs = gbar / gamma;
    sn = beta / gamma;
    const double phi = cs * phibar;
    phibar *= sn;
    w1 = w2;
    w2 = w;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
      x[i] += phi * w[i];
    }
    out.iterations = it + 1;
    if (phibar / beta1 < tol || beta == 0.0) break;
  }
  out.residual = phibar / beta1;
  out.converged = out.residual < tol;
  out.x = Tensor(shape, std::move(x));
  return out;
}

SolveResult dense_solve(const LinearOp& a, const Tensor& b, double damp) {
  const Index n = b.numel();
  Eigen::MatrixXd m(n, n);
  std::vector<double> e(static_cast<std::size_t>(n), 0.0);
  for (Index j = 0; j < n; ++j) {
    e[static_cast<std::size_t>(j)] = 1.0;
    Tensor col = a(Tensor(b.shape(), e));
    e[static_cast<std::size_t>(j)] = 0.0;
    auto v = col.values();
    for (Index i = 0; i < n; ++i) m(i, j) = v[static_cast<std::size_t>(i)];
    m(j, j) += damp;
  }
  // Symmetrize away backward-pass rounding.
  m = 0.5 * (m + m.transpose()).eval();
  Eigen::Map<const Eigen::VectorXd> rhs(b.values().data(), n);
  Eigen::VectorXd x = m.partialPivLu().solve(rhs);
  SolveResult out;
  out.residual = (m * x - rhs).norm() / std::max(rhs.norm(), 1e-300);
  out.converged = x.allFinite();
  out.iterations = 1;
  out.x = Tensor(b.shape(), std::vector<double>(x.data(), x.data() + n));
  return out;
}

HessianOperator::HessianOperator(const std::function<Tensor(const Tensor&)>& loss,
                                 const Tensor& theta) {
  theta_ = tape_.watch(theta);
  grad_ = grad(loss(theta_), theta_, true);
  grad_detached_ = grad_.detach();
}

Tensor HessianOperator::apply(const Tensor& v) const {
  std::array<Tensor, 1> wrt{theta_};
  auto hv = fuleak::grad(dot(grad_, reshape(v.detach(), grad_.shape())), wrt);
  return hv[0].detach();
}

}  // namespace fuleak
