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

#include "fuleak/theory.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "fuleak/attack.hpp"
#include "fuleak/rng.hpp"

namespace fuleak {

namespace {

Tensor param_grad_at(const ModelSpec& spec, const Tensor& theta, const Tensor& x, int y) {
  const int labels[1] = {y};
  return loss_grads(spec, theta, x, labels).params;
}

Tensor input_grad_at(const ModelSpec& spec, const Tensor& theta, const Tensor& x, int y) {
  const int labels[1] = {y};
  GradRequest req;
  req.input = true;
  return loss_grads(spec, theta, x, labels, req).input;
}

double l2(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

Tensor perturb(const Tensor& x, double radius, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> d(static_cast<std::size_t>(x.numel()));
  double s = 0.0;
  for (auto& v : d) {
    v = n(rng);
    s += v * v;
  }
  // Uniform in the ball.
  const double r = radius * std::pow(u(rng), 1.0 / static_cast<double>(d.size())) / std::sqrt(s);
  auto xv = x.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = xv[i] + r * d[i];
  return Tensor(x.shape(), std::move(d));
}

}  // namespace

std::string to_string(StationarityKind kind) {
  switch (kind) {
    case StationarityKind::kGiaOnCoupled: return "gia-on-coupled";
    case StationarityKind::kGiaOnAscent: return "gia-on-ascent";
    case StationarityKind::kDraunJoint: return "draun-joint";
  }
  return "?";
}

TheoryProbe make_probe(std::uint64_t seed, Index width, Index side) {
  TheoryProbe p;
  p.spec.kind = ModelKind::kMlp;
  p.spec.input = {1, side, side};
  p.spec.num_classes = 10;
  p.spec.width = width;
  p.theta = init_params(p.spec, derive_seed(seed, {1})).values;
  std::mt19937_64 rng(derive_seed(seed, {2}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, 9);
  auto image = [&] {
    std::vector<double> v(static_cast<std::size_t>(side * side));
    for (auto& x : v) x = unit(rng);
    return Tensor({1, 1, side, side}, std::move(v));
  };
  p.x_u = image();
  p.x_r = image();
  p.y_u = label(rng);
  p.y_r = label(rng);
  return p;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  std::vector<double> base(x.values().begin(), x.values().end());
  std::vector<double> g(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double keep = base[i];
    base[i] = keep + h;
    const double fp = f(Tensor(x.shape(), base));
    base[i] = keep - h;
    const double fm = f(Tensor(x.shape(), base));
    base[i] = keep;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite function value");
    }
    g[i] = (fp - fm) / (2.0 * h);
  }
  return Tensor(x.shape(), std::move(g));
}

Tensor jacobian_of_gradient(const ModelSpec& spec, const Tensor& theta, const Tensor& x, int y) {
  const Index dt = theta.numel(), dx = x.numel();
  if (dt * dx > 10'000'000) throw std::invalid_argument("jacobian_of_gradient: budget exceeded");
  const int labels[1] = {y};
  std::vector<double> j(static_cast<std::size_t>(dt * dx));
  Tape tape;
  Tensor th = tape.watch(theta);
  Tensor xi = tape.watch(x);
  Tensor w = tape.watch(Tensor::zeros({dt}));
  Tensor g = grad(cross_entropy(forward(spec, th, xi), labels), th, true);
  // d<g, w>/dx is linear in w; differentiating entry j of it by w gives
  // column j of J.
  Tensor gx = reshape(grad(dot(g, w), xi, true), {dx});
  for (Index c = 0; c < dx; ++c) {
    Tensor col = grad(slice(gx, c, {}), w);
    auto v = col.values();
    for (Index r = 0; r < dt; ++r) j[static_cast<std::size_t>(r * dx + c)] = v[static_cast<std::size_t>(r)];
  }
  return Tensor({dt, dx}, std::move(j));
}

Tensor jacobian_column_fd(const ModelSpec& spec, const Tensor& theta, const Tensor& x, int y,
                          Index j, double h) {
  std::vector<double> xv(x.values().begin(), x.values().end());
  const double keep = xv[static_cast<std::size_t>(j)];
  xv[static_cast<std::size_t>(j)] = keep + h;
  Tensor gp = param_grad_at(spec, theta, Tensor(x.shape(), xv), y);
  xv[static_cast<std::size_t>(j)] = keep - h;
  Tensor gm = param_grad_at(spec, theta, Tensor(x.shape(), xv), y);
  return affine(sub(gp, gm), 1.0 / (2.0 * h));
}

SingularRange singular_values(const Tensor& j) {
  const Index r = j.dim(0), c = j.dim(1);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      j.values().data(), r, c);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  return {s.size() ? s(0) : 0.0, s.size() ? s(s.size() - 1) : 0.0};
}

double coupled_similarity(const TheoryProbe& p, const Tensor& x, Tensor* grad_x) {
  const Tensor gr = param_grad_at(p.spec, p.theta, p.x_r, p.y_r);
  const Tensor gu = param_grad_at(p.spec, p.theta, p.x_u, p.y_u);
  const Tensor g_true = sub(gr, gu);
  const int labels[1] = {p.y_u};
  Tape tape;
  Tensor xi = tape.watch(x);
  Tensor th = tape.watch(p.theta);
  Tensor dummy = neg(grad(cross_entropy(forward(p.spec, th, xi), labels), th, true));
  Tensor r = sub(g_true, dummy);
  Tensor sim = dot(r, r);
  if (grad_x) *grad_x = grad(sim, xi).detach();
  return sim.item();
}

double stationarity_check(StationarityKind kind, const TheoryProbe& p) {
  const int yu[1] = {p.y_u};
  const int yr[1] = {p.y_r};
  switch (kind) {
    case StationarityKind::kGiaOnCoupled: {
      Tensor g;
      coupled_similarity(p, p.x_u, &g);
      return l2(g);
    }
    case StationarityKind::kGiaOnAscent: {
      // Client: theta_c = theta + grad L(x_u), so g_true = -grad L(x_u).
      const Tensor g_true = neg(param_grad_at(p.spec, p.theta, p.x_u, p.y_u));
      Tape tape;
      Tensor xi = tape.watch(p.x_u);
      Tensor th = tape.watch(p.theta);
      Tensor dummy = neg(grad(cross_entropy(forward(p.spec, th, xi), yu), th, true));
      Tensor r = sub(g_true, dummy);
      return l2(grad(dot(r, r), xi));
    }
    case StationarityKind::kDraunJoint: {
      // Client abl step through the same code path the attack simulates.
      SurrogateGrads truth =
          surrogate_update(p.spec, p.theta, p.x_u, yu, p.x_r, yr, 1, 1.0, 0.0);
      Tape tape;
      Tensor xu = tape.watch(p.x_u), xr = tape.watch(p.x_r);
      SurrogateGrads s = surrogate_update(p.spec, p.theta, xu, yu, xr, yr, 1, 1.0, 0.0);
      Tensor r = sub(truth.g1, s.g1);
      std::array<Tensor, 2> wrt{xu, xr};
      auto g = grad(dot(r, r), wrt);
      return std::sqrt(l2(g[0]) * l2(g[0]) + l2(g[1]) * l2(g[1]));
    }
  }
  return 0.0;
}

Tensor coupled_minimizer(const TheoryProbe& p, int iterations, double lr) {
  std::vector<double> x(p.x_u.values().begin(), p.x_u.values().end());
  AdamState state;
  const AdamHyper hyper{lr, 0.9, 0.999, 1e-8};
  for (int it = 0; it < iterations; ++it) {
    Tensor g;
    coupled_similarity(p, Tensor(p.x_u.shape(), x), &g);
    adam_step(state, x, g.values(), hyper);
  }
  return Tensor(p.x_u.shape(), std::move(x));
}

SmoothnessEstimate estimate_smoothness(const TheoryProbe& p, int pairs, double radius,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SmoothnessEstimate out;
  for (int i = 0; i < pairs; ++i) {
    const Tensor a = perturb(p.x_u, radius, rng), b = perturb(p.x_u, radius, rng);
    const double num = l2(sub(input_grad_at(p.spec, p.theta, a, p.y_u),
                              input_grad_at(p.spec, p.theta, b, p.y_u)));
    out.mu_x = std::max(out.mu_x, num / l2(sub(a, b)));
  }
  for (int i = 0; i < pairs; ++i) {
    const Tensor a = perturb(p.theta, radius, rng), b = perturb(p.theta, radius, rng);
    const double num = l2(sub(param_grad_at(p.spec, a, p.x_u, p.y_u),
                              param_grad_at(p.spec, b, p.x_u, p.y_u)));
    out.mu_theta = std::max(out.mu_theta, num / l2(sub(a, b)));
  }
  return out;
}

double reconstruction_bound(double jt_grad_r, double jacobian_fro, double client_grad,
                            const SmoothnessEstimate& mu) {
  const double denom = mu.mu_x * jacobian_fro + 2.0 * mu.mu_theta * client_grad;
  if (jt_grad_r == 0.0 || denom == 0.0) return 0.0;
  return jt_grad_r / denom;
}

BoundResult error_bound_eval(const TheoryProbe& p, const Tensor& x_star,
                             const SmoothnessEstimate& mu) {
  BoundResult out;
  out.mu_x = mu.mu_x;
  out.mu_theta = mu.mu_theta;
  const Tensor gr = param_grad_at(p.spec, p.theta, p.x_r, p.y_r);
  const Tensor gu = param_grad_at(p.spec, p.theta, p.x_u, p.y_u);
  out.client_grad = l2(sub(gr, gu));
  out.lhs = l2(sub(x_star, p.x_u));
  const Tensor j = jacobian_of_gradient(p.spec, p.theta, p.x_u, p.y_u);
  out.jacobian_fro = l2(j);
  out.jt_grad_r = l2(matmul(j, reshape(gr, {gr.numel(), 1}), true, false));
  out.bound = reconstruction_bound(out.jt_grad_r, out.jacobian_fro, out.client_grad, mu);
  out.holds = out.lhs >= out.bound * (1.0 - 1e-6);
  return out;
}

CollapseResult collapse_probe(const ModelSpec& spec, const Tensor& theta_s,
                              const Tensor& x_shared, const Tensor& offset, int y_u, int y_r,
                              int epochs, double eta_unl) {
  const int yu[1] = {y_u};
  const int yr[1] = {y_r};
  Tape tape;
  Tensor xu = tape.watch(x_shared);
  // x_r~ is a separate input held fixed; only x_u~ is differentiated.
  const Tensor xr = offset.defined() ? add(x_shared, offset) : x_shared;
  SurrogateGrads s = surrogate_update(spec, theta_s, xu, yu, xr, yr, epochs, eta_unl, 0.0);
  CollapseResult out;
  out.g1_norm = l2(s.g1);
  out.grad_norm = l2(grad(dot(s.g1, s.g1), xu));
  return out;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace fuleak
