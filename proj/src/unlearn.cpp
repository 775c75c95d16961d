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

#include "fuleak/unlearn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fuleak/rng.hpp"

namespace fuleak {

std::string to_string(UnlearnAlgo algo) {
  switch (algo) {
    case UnlearnAlgo::kAscent: return "ascent";
    case UnlearnAlgo::kHalimi: return "halimi";
    case UnlearnAlgo::kAbl: return "abl";
    case UnlearnAlgo::kAlam: return "alam";
    case UnlearnAlgo::kNewton: return "newton";
  }
  return "?";
}

UnlearnAlgo parse_unlearn_algo(const std::string& name) {
  for (auto a : {UnlearnAlgo::kAscent, UnlearnAlgo::kHalimi, UnlearnAlgo::kAbl,
                 UnlearnAlgo::kAlam, UnlearnAlgo::kNewton}) {
    if (to_string(a) == name) return a;
  }
  throw std::invalid_argument("unknown unlearning algorithm '" + name + "'");
}

bool needs_retain(UnlearnAlgo algo) {
  return algo == UnlearnAlgo::kAbl || algo == UnlearnAlgo::kAlam || algo == UnlearnAlgo::kNewton;
}

void UnlearnConfig::validate() const {
  if (!(eta > 0.0)) throw std::invalid_argument("unlearn.eta must be > 0");
  if (epochs < 1) throw std::invalid_argument("unlearn.epochs must be >= 1");
  if (batch < 1) throw std::invalid_argument("unlearn.batch must be >= 1");
  if (delta < 0.0 || newton_damp < 0.0) throw std::invalid_argument("unlearn: negative penalty");
}

Tensor proximal_direction(const Tensor& theta, const Tensor& anchor) {
  Tensor d = sub(theta, anchor);
  double sq = 0.0;
  for (double v : d.values()) sq += v * v;
  if (sq == 0.0) return Tensor::zeros(theta.shape());
  return div(d, norm(d));
}

Tensor ratio_norm_grad(const Tensor& theta, const Tensor& anchor) {
  std::vector<double> inv(static_cast<std::size_t>(anchor.numel()));
  auto a = anchor.values();
  for (std::size_t i = 0; i < inv.size(); ++i) {
    const double c = std::max(std::abs(a[i]), 1e-6);
    inv[i] = 1.0 / (a[i] < 0.0 ? -c : c);
  }
  Tensor s(anchor.shape(), std::move(inv));
  Tensor ratio = mul(theta, s);
  return div(mul(ratio, s), norm(ratio));
}

Tensor unlearn_step(const UnlearnConfig& cfg, const Tensor& theta, const Tensor& theta_s,
                    const Tensor& grad_u, const Tensor& grad_r) {
  const double eta = cfg.eta;
  switch (cfg.algo) {
    case UnlearnAlgo::kAscent:
      return add(theta, affine(grad_u, eta));
    case UnlearnAlgo::kHalimi:
      return sub(add(theta, affine(grad_u, eta)),
                 affine(proximal_direction(theta, theta_s), eta * cfg.delta));
    case UnlearnAlgo::kAbl:
      return sub(theta, affine(sub(grad_r, grad_u), eta));
    case UnlearnAlgo::kAlam: {
      Tensor dir = sub(affine(grad_r, cfg.alam_alpha), affine(grad_u, cfg.alam_beta));
      dir = add(dir, affine(ratio_norm_grad(theta, theta_s), cfg.alam_gamma));
      return sub(theta, affine(dir, eta));
    }
    case UnlearnAlgo::kNewton:
      break;
  }
  throw std::invalid_argument("unlearn_step: newton has no first-order step");
}

SolveResult newton_direction(const LinearOp& hessian, const Tensor& grad_u,
                             const UnlearnConfig& cfg) {
  SolveResult r;
  if (cfg.newton_solver == NewtonSolver::kDense) {
    if (grad_u.numel() > kDenseSolveLimit) {
      throw std::invalid_argument("dense Newton solve refused above " +
                                  std::to_string(kDenseSolveLimit) + " parameters");
    }
    r = dense_solve(hessian, grad_u, cfg.newton_damp);
  } else if (cfg.newton_solver == NewtonSolver::kMinres) {
    // An unconverged MINRES iterate is still the best residual in its
    // Krylov space; only non-finite output is fatal.
    r = minres(hessian, grad_u, cfg.newton_damp, cfg.cg_tol, cfg.cg_max_iter);
  } else {
    r = conjugate_gradient(hessian, grad_u, cfg.newton_damp, cfg.cg_tol, cfg.cg_max_iter);
  }
  if (!r.converged && cfg.newton_solver == NewtonSolver::kCg) {
    throw NumericError("Hessian solve failed (residual " + std::to_string(r.residual) + " after " +
                       std::to_string(r.iterations) + " iterations)");
  }
  r.x.check_finite("Newton direction");
  return r;
}

UnlearnResult unlearn(const Tensor& theta_s, const BatchLoss& loss, std::span<const Index> du,
                      std::span<const Index> dr, const UnlearnConfig& cfg) {
  cfg.validate();
  if (du.empty()) throw std::invalid_argument("unlearn set is empty");
  if (needs_retain(cfg.algo) && dr.empty()) {
    throw std::invalid_argument("retain set required by " + to_string(cfg.algo));
  }
  const Tensor anchor = theta_s.detach();
  UnlearnResult out;

  if (cfg.algo == UnlearnAlgo::kNewton) {
    // One solve at theta_s: gradient on all of D_u, Hessian on |D_u| retain
    // samples drawn without replacement.
    std::vector<Index> r(dr.begin(), dr.end());
    std::mt19937_64 rng(derive_seed(cfg.seed, {0, 1}));
    std::shuffle(r.begin(), r.end(), rng);
    r.resize(std::min(r.size(), du.size()));
    const Tensor g_u = batch_grad(loss, anchor, du);
    auto retain_loss = [&](const Tensor& th) { return loss(th, r); };
    HessianOperator h(retain_loss, anchor);
    out.solve = newton_direction([&](const Tensor& v) { return h.apply(v); }, g_u, cfg);
    out.theta_c = add(anchor, affine(out.solve.x, cfg.newton_eta));
    out.steps = 1;
    out.retain_used = r;
    return out;
  }

  std::vector<Index> u(du.begin(), du.end());
  std::vector<Index> r(dr.begin(), dr.end());
  const auto m = static_cast<std::size_t>(cfg.batch);
  Tensor theta = anchor;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::mt19937_64 rng_u(derive_seed(cfg.seed, {static_cast<std::uint64_t>(e), 0}));
    std::mt19937_64 rng_r(derive_seed(cfg.seed, {static_cast<std::uint64_t>(e), 1}));
    std::shuffle(u.begin(), u.end(), rng_u);
    if (!r.empty()) std::shuffle(r.begin(), r.end(), rng_r);
    std::size_t r_at = 0;
    for (std::size_t at = 0; at < u.size(); at += m) {
      const std::size_t len = std::min(m, u.size() - at);
      const auto ub = std::span<const Index>(u).subspan(at, len);
      const Tensor g_u = batch_grad(loss, theta, ub);
      Tensor g_r;
      if (needs_retain(cfg.algo)) {
        // Matching count, without replacement within the epoch; wraps around
        // when D_r is smaller than D_u.
        std::vector<Index> rb;
        for (std::size_t i = 0; i < len; ++i) rb.push_back(r[(r_at + i) % r.size()]);
        r_at += len;
        g_r = batch_grad(loss, theta, rb);
        if (e == 0) out.retain_used.insert(out.retain_used.end(), rb.begin(), rb.end());
      }
      theta = unlearn_step(cfg, theta, anchor, g_u, g_r);
      ++out.steps;
    }
  }
  theta.check_finite("unlearned parameters");
  out.theta_c = theta;
  return out;
}

ClientUnlearnResult unlearn(const ParamVector& theta_s, const ClientDataset& cd,
                            const UnlearnConfig& cfg) {
  BatchLoss loss = model_loss(theta_s.spec, cd.base);
  UnlearnResult r = unlearn(theta_s.values, loss, cd.unlearn, cd.retain, cfg);
  return {make_params(theta_s.spec, r.theta_c), r.steps, r.solve, std::move(r.retain_used)};
}

}  // namespace fuleak
