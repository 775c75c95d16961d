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

#include "fuleak/attack.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include "fuleak/metrics.hpp"
#include "fuleak/rng.hpp"

namespace fuleak {

std::string to_string(AttackMode mode) {
  switch (mode) {
    case AttackMode::kDraun: return "draun";
    case AttackMode::kGia: return "gia";
    case AttackMode::kDraunSpecific: return "draun-specific";
    case AttackMode::kDraunSecond: return "draun-2nd";
  }
  return "?";
}

AttackMode parse_attack_mode(const std::string& name) {
  for (auto m : {AttackMode::kDraun, AttackMode::kGia, AttackMode::kDraunSpecific,
                 AttackMode::kDraunSecond}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown attack mode '" + name + "'");
}

void AttackConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("attack.T must be >= 0");
  if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("attack.beta must lie in [0,1]");
  if (init_distance < 0.0) throw std::invalid_argument("attack.Delta must be >= 0");
  if (epochs < 1 || batch < 1) throw std::invalid_argument("attack: E and m must be >= 1");
  if (!(eta_rec > 0.0)) throw std::invalid_argument("attack.eta_rec must be > 0");
}

void adam_step(AdamState& s, std::vector<double>& x, std::span<const double> g,
               const AdamHyper& h) {
  if (g.size() != x.size()) throw ShapeError("adam_step: gradient size mismatch");
  if (s.m.empty()) {
    s.m.assign(x.size(), 0.0);
    s.v.assign(x.size(), 0.0);
  }
  ++s.t;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < x.size(); ++i) {
    s.m[i] = h.beta1 * s.m[i] + (1.0 - h.beta1) * g[i];
    s.v[i] = h.beta2 * s.v[i] + (1.0 - h.beta2) * g[i] * g[i];
    const double mh = s.m[i] / c1;
    const double vh = s.v[i] / c2;
    x[i] -= h.lr * mh / (std::sqrt(vh) + h.eps);
  }
}

PseudoGradient pseudo_gradient(const Tensor& theta_s, const Tensor& theta_c, Index du_size,
                               int epochs, Index batch) {
  if (du_size < 1 || epochs < 1 || batch < 1) {
    throw std::invalid_argument("pseudo_gradient: U_c would be 0");
  }
  const Index steps = ((du_size + batch - 1) / batch) * epochs;
  return {affine(sub(theta_s.detach(), theta_c.detach()), 1.0 / static_cast<double>(steps)),
          steps};
}

Tensor separate_dummies(const Tensor& x_u, const Tensor& x_r, double distance, double sigma,
                        std::uint64_t seed, int* rounds) {
  const Index k = x_u.dim(0);
  const Index per = x_u.numel() / k;
  std::vector<double> r(x_r.values().begin(), x_r.values().end());
  auto u = x_u.values();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  auto far_enough = [&](Index i) {
    double s = 0.0;
    for (Index p = 0; p < per; ++p) {
      const double d = u[static_cast<std::size_t>(i * per + p)] - r[static_cast<std::size_t>(i * per + p)];
      s += d * d;
    }
    return std::sqrt(s) > distance;
  };
  int n = 0;
  for (;;) {
    bool done = true;
    for (Index i = 0; i < k; ++i) {
      if (far_enough(i)) continue;
      done = false;
      for (Index p = 0; p < per; ++p) r[static_cast<std::size_t>(i * per + p)] += noise(rng);
    }
    if (done) break;
    if (++n > 10000) throw NumericError("dummy separation did not terminate after 10000 rounds");
  }
  if (rounds) *rounds = n;
  return Tensor(x_r.shape(), std::move(r));
}

Dummies init_dummies(Index k, InputShape shape, double distance, double sigma,
                     std::uint64_t seed) {
  if (distance < 0.0) throw std::invalid_argument("init_dummies: Delta must be >= 0");
  std::mt19937_64 rng(derive_seed(seed, {0x696e6974ull}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Index n = k * shape.size();
  std::vector<double> u(static_cast<std::size_t>(n)), r(static_cast<std::size_t>(n));
  for (auto& v : u) v = unit(rng);
  for (auto& v : r) v = unit(rng);
  const Shape s{k, shape.channels, shape.height, shape.width};
  Dummies d;
  d.x_u = Tensor(s, std::move(u));
  d.x_r = separate_dummies(d.x_u, Tensor(s, std::move(r)), distance, sigma,
                           derive_seed(seed, {0x6e6f6973ull}), &d.noise_rounds);
  return d;
}

namespace {

// d L(theta, x, y) / d theta, kept on the tape when anything is tracked.
Tensor param_grad(const ModelSpec& spec, const Tensor& theta, const Tensor& x,
                  std::span<const int> y) {
  GradRequest req;
  req.create_graph = Tape::active() != nullptr && (theta.tracked() || x.tracked());
  if (req.create_graph) {
    Tape& tape = *Tape::active();
    Tensor th = theta.tracked() ? theta : tape.watch(theta);
    return grad(cross_entropy(forward(spec, th, x), y), th, true);
  }
  return loss_grads(spec, theta, x, y, req).params;
}

double squared_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return s;
}

struct StepOutput {
  double loss = 0.0;
  double loss0 = 0.0;
  double loss1 = 0.0;
  int branch = -1;
  Tensor grad_u;
  Tensor grad_r;  // undefined when x_r is not optimized
};

using StepFn = std::function<StepOutput(const Tensor& x_u, const Tensor& x_r)>;

ReconstructionResult optimize(const AttackConfig& cfg, Tensor x_u0, Tensor x_r0, const StepFn& step) {
  const auto t0 = std::chrono::steady_clock::now();
  ReconstructionResult out;
  std::vector<double> xu(x_u0.values().begin(), x_u0.values().end());
  std::vector<double> xr(x_r0.values().begin(), x_r0.values().end());
  const Shape su = x_u0.shape(), sr = x_r0.shape();
  AdamState au, ar;
  AdamHyper hyper{cfg.eta_rec, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  const int t = cfg.iterations;
  const std::array<int, 3> milestones{3 * t / 8, 5 * t / 8, 7 * t / 8};
  auto box = [](std::vector<double>& x) {
    for (double& v : x) v = std::clamp(v, 0.0, 1.0);
  };
  for (int it = 0; it < cfg.iterations; ++it) {
    if (cfg.lr_decay) {
      hyper.lr = cfg.eta_rec;
      for (int m : milestones) {
        if (it >= m) hyper.lr *= 0.1;
      }
    }
    if (cfg.on_snapshot && cfg.snapshot_every > 0 && it % cfg.snapshot_every == 0) {
      cfg.on_snapshot(it, clamp01(Tensor(su, xu)));
    }
    StepOutput s;
    try {
      s = step(Tensor(su, xu), Tensor(sr, xr));
    } catch (const NumericError& e) {
      out.diverged = true;
      out.error = e.what();
      break;
    }
    out.trace.push_back({it, s.loss, s.loss0, s.loss1, s.branch});
    bool finite = std::isfinite(s.loss);
    for (double v : s.grad_u.values()) finite = finite && std::isfinite(v);
    if (s.grad_r.defined()) {
      for (double v : s.grad_r.values()) finite = finite && std::isfinite(v);
    }
    if (!finite) {
      out.diverged = true;
      out.error = "non-finite reconstruction loss at iteration " + std::to_string(it);
      break;
    }
    if (cfg.optimizer == Optimizer::kAdam) {
      adam_step(au, xu, s.grad_u.values(), hyper);
      if (s.grad_r.defined()) adam_step(ar, xr, s.grad_r.values(), hyper);
    } else {
      auto gu = s.grad_u.values();
      for (std::size_t i = 0; i < xu.size(); ++i) xu[i] -= hyper.lr * gu[i];
      if (s.grad_r.defined()) {
        auto gr = s.grad_r.values();
        for (std::size_t i = 0; i < xr.size(); ++i) xr[i] -= hyper.lr * gr[i];
      }
    }
    if (cfg.boxed) {
      box(xu);
      if (s.grad_r.defined()) box(xr);
    }
  }
  out.x_u_raw = Tensor(su, std::move(xu));
  out.x_u = clamp01(out.x_u_raw);
  out.x_r = Tensor(sr, std::move(xr));
  if (cfg.on_snapshot && cfg.snapshot_every > 0) cfg.on_snapshot(cfg.iterations, out.x_u);
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

void check_labels(const ModelSpec& spec, std::span<const int> y, const char* what) {
  for (int v : y) {
    if (v < 0 || v >= spec.num_classes) {
      throw std::invalid_argument(std::string(what) + " label out of range");
    }
  }
}

Tensor tv_mix(const Tensor& x_u, const Tensor& x_r, double lambda_tv, double beta) {
  Tensor t = affine(tv(x_u), lambda_tv * beta);
  if (beta < 1.0) t = add(t, affine(tv(x_r), lambda_tv * (1.0 - beta)));
  return t;
}

}  // namespace

SurrogateGrads surrogate_update(const ModelSpec& spec, const Tensor& theta_s, const Tensor& x_u,
                                std::span<const int> y_u, const Tensor& x_r,
                                std::span<const int> y_r, int epochs, double eta_unl,
                                double delta) {
  if (x_u.shape() != x_r.shape()) throw ShapeError("surrogate_update: dummy shapes differ");
  if (epochs < 1) throw std::invalid_argument("surrogate_update: E must be >= 1");
  const Tensor anchor = theta_s.detach();
  Tensor th1 = anchor, th0 = anchor;
  for (int e = 0; e < epochs; ++e) {
    const Tensor gu1 = param_grad(spec, th1, x_u, y_u);
    const Tensor gr1 = param_grad(spec, th1, x_r, y_r);
    // Both branches start at theta_s, so the first unlearn gradient is shared.
    const Tensor gu0 = e == 0 ? gu1 : param_grad(spec, th0, x_u, y_u);
    Tensor step1 = sub(gr1, gu1);
    Tensor pen1 = proximal_direction(th1, anchor);
    Tensor pen0 = proximal_direction(th0, anchor);
    th1 = sub(th1, affine(add(step1, affine(pen1, delta)), eta_unl));
    th0 = sub(add(th0, affine(gu0, eta_unl)), affine(pen0, eta_unl * delta));
  }
  const double inv = 1.0 / static_cast<double>(epochs);
  return {affine(sub(anchor, th1), inv), affine(sub(anchor, th0), inv)};
}

Tensor cosine_distance(const Tensor& target, const Tensor& candidate) {
  if (target.numel() != candidate.numel()) throw ShapeError("cosine_distance: size mismatch");
  const double nt = squared_norm(target), nc = squared_norm(candidate);
  if (nt == 0.0 || nc == 0.0) return Tensor::scalar(1.0);
  Tensor c = div(dot(target, candidate), mul(norm(target), norm(candidate)));
  return affine(c, -1.0, 1.0);
}

ReconLoss recon_loss(const Tensor& g_true, const Tensor& g1, const Tensor& g0, const Tensor& x_u,
                     const Tensor& x_r, double lambda_tv, double beta) {
  const Tensor reg = tv_mix(x_u, x_r, lambda_tv, beta);
  Tensor l1 = add(cosine_distance(g_true, g1), reg);
  Tensor l0 = add(cosine_distance(g_true, g0), reg);
  ReconLoss out;
  out.loss0 = l0.item();
  out.loss1 = l1.item();
  out.branch = out.loss1 <= out.loss0 ? 1 : 0;
  out.loss = out.branch == 1 ? l1 : l0;
  return out;
}

ReconstructionResult run_draun(const ModelSpec& spec, const Tensor& theta_s,
                               const Tensor& theta_c, std::span<const int> y_u,
                               std::span<const int> y_r, const AttackConfig& cfg) {
  cfg.validate();
  check_labels(spec, y_u, "unlearn");
  check_labels(spec, y_r, "retain");
  const auto k = static_cast<Index>(y_u.size());
  if (y_r.size() != y_u.size()) throw std::invalid_argument("draun: need one retain label per dummy");
  const PseudoGradient g = pseudo_gradient(theta_s, theta_c, k, cfg.epochs, cfg.batch);
  Dummies d = init_dummies(k, spec.input, cfg.init_distance, cfg.init_sigma, cfg.seed);
  return optimize(cfg, d.x_u, d.x_r, [&](const Tensor& xu0, const Tensor& xr0) {
    Tape tape;
    Tensor xu = tape.watch(xu0), xr = tape.watch(xr0);
    SurrogateGrads s = surrogate_update(spec, theta_s, xu, y_u, xr, y_r, cfg.epochs, cfg.eta_unl,
                                        cfg.delta);
    ReconLoss l = recon_loss(g.values, s.g1, s.g0, xu, xr, cfg.lambda_tv, cfg.beta);
    std::array<Tensor, 2> wrt{xu, xr};
    auto gr = grad(l.loss, wrt);
    return StepOutput{l.loss.item(), l.loss0, l.loss1, l.branch, gr[0], gr[1]};
  });
}

ReconstructionResult run_gia(const ModelSpec& spec, const Tensor& theta_s, const Tensor& theta_c,
                             std::span<const int> y_u, const AttackConfig& cfg) {
  cfg.validate();
  check_labels(spec, y_u, "unlearn");
  const auto k = static_cast<Index>(y_u.size());
  const PseudoGradient g = pseudo_gradient(theta_s, theta_c, k, cfg.epochs, cfg.batch);
  Dummies d = init_dummies(k, spec.input, cfg.init_distance, cfg.init_sigma, cfg.seed);
  return optimize(cfg, d.x_u, d.x_r, [&](const Tensor& xu0, const Tensor&) {
    Tape tape;
    Tensor xu = tape.watch(xu0);
    // An ascent step on x maps to the pseudo-gradient -grad L.
    Tensor dummy = neg(param_grad(spec, theta_s, xu, y_u));
    Tensor loss = add(cosine_distance(g.values, dummy), affine(tv(xu), cfg.lambda_tv));
    const double v = loss.item();
    return StepOutput{v, v, v, -1, grad(loss, xu), Tensor()};
  });
}

ReconstructionResult run_draun_specific(const ModelSpec& spec, const Tensor& theta_s,
                                        const Tensor& theta_c, std::span<const int> y_u,
                                        std::span<const int> y_r, const UnlearnConfig& truth,
                                        const AttackConfig& cfg) {
  cfg.validate();
  truth.validate();
  if (truth.algo == UnlearnAlgo::kNewton) {
    throw std::invalid_argument("draun-specific covers first-order rules; use draun-2nd for newton");
  }
  check_labels(spec, y_u, "unlearn");
  check_labels(spec, y_r, "retain");
  if (y_r.size() != y_u.size()) throw std::invalid_argument("draun-specific: need one retain label per dummy");
  const auto k = static_cast<Index>(y_u.size());
  const PseudoGradient g = pseudo_gradient(theta_s, theta_c, k, truth.epochs, truth.batch);
  Dummies d = init_dummies(k, spec.input, cfg.init_distance, cfg.init_sigma, cfg.seed);
  const Tensor anchor = theta_s.detach();
  return optimize(cfg, d.x_u, d.x_r, [&](const Tensor& xu0, const Tensor& xr0) {
    Tape tape;
    Tensor xu = tape.watch(xu0), xr = tape.watch(xr0);
    Tensor th = anchor;
    for (Index s = 0; s < g.steps; ++s) {
      Tensor gu = param_grad(spec, th, xu, y_u);
      Tensor gr = needs_retain(truth.algo) ? param_grad(spec, th, xr, y_r) : Tensor();
      th = unlearn_step(truth, th, anchor, gu, gr);
    }
    Tensor sim = affine(sub(anchor, th), 1.0 / static_cast<double>(g.steps));
    Tensor loss = add(cosine_distance(g.values, sim), tv_mix(xu, xr, cfg.lambda_tv, cfg.beta));
    std::array<Tensor, 2> wrt{xu, xr};
    auto gr = grad(loss, wrt);
    const double v = loss.item();
    return StepOutput{v, v, v, -1, gr[0], gr[1]};
  });
}

ReconstructionResult run_draun_2nd(const ModelSpec& spec, const Tensor& theta_s,
                                   const Tensor& delta_theta, std::span<const int> y_u,
                                   std::span<const int> y_r, const AttackConfig& cfg) {
  cfg.validate();
  check_labels(spec, y_u, "unlearn");
  check_labels(spec, y_r, "retain");
  const auto k = static_cast<Index>(y_u.size());
  const Tensor anchor = theta_s.detach();
  const Tensor target = delta_theta.detach();
  Dummies d = init_dummies(k, spec.input, cfg.init_distance, cfg.init_sigma, cfg.seed);
  return optimize(cfg, d.x_u, d.x_r, [&](const Tensor& xu0, const Tensor& xr0) {
    // Forward: p = (H_r(x_r) + damp I)^-1 grad L(x_u). Backward by implicit
    // differentiation: with u = A^-1 dl/dp,
    //   dl/dx_u = d<g(x_u), u>/dx_u,  dl/dx_r = -d<H_r(x_r) p, u>/dx_r.
    Tensor p, u, dist;
    {
      const Tensor g_u = loss_grads(spec, anchor, xu0, y_u).params;
      auto retain_loss = [&](const Tensor& th) { return cross_entropy(forward(spec, th, xr0), y_r); };
      HessianOperator h(retain_loss, anchor);
      LinearOp op = [&](const Tensor& v) { return h.apply(v); };
      // MINRES: H_r(x_r) is indefinite, and the adjoint below reuses the
      // same symmetric operator.
      SolveResult sp = minres(op, g_u, cfg.damp, cfg.cg_tol, cfg.cg_max_iter);
      p = sp.x;
      p.check_finite("second-order attack solve");
      Tensor w;
      {
        Tape small;
        Tensor pt = small.watch(p);
        Tensor c = cosine_distance(target, pt);
        dist = c.detach();
        w = grad(c, pt).detach();
      }
      SolveResult su = minres(op, w, cfg.damp, cfg.cg_tol, cfg.cg_max_iter);
      u = su.x;
      u.check_finite("second-order attack adjoint");
    }
    Tape tape;
    Tensor xu = tape.watch(xu0), xr = tape.watch(xr0);
    Tensor th = tape.watch(anchor);
    Tensor gu = grad(cross_entropy(forward(spec, th, xu), y_u), th, true);
    Tensor gr = grad(cross_entropy(forward(spec, th, xr), y_r), th, true);
    Tensor hp = grad(dot(gr, p), th, true);
    Tensor reg = affine(tv(xu), cfg.lambda_tv);
    Tensor surrogate = add(sub(dot(gu, u), dot(hp, u)), reg);
    std::array<Tensor, 2> wrt{xu, xr};
    auto gr_x = grad(surrogate, wrt);
    const double v = dist.item() + reg.item();
    return StepOutput{v, v, v, -1, gr_x[0], gr_x[1]};
  });
}

ReconstructionResult run_attack(const ModelSpec& spec, const Tensor& theta_s,
                                const Tensor& theta_c, std::span<const int> y_u,
                                std::span<const int> y_r, const AttackConfig& cfg,
                                const UnlearnConfig* truth) {
  switch (cfg.mode) {
    case AttackMode::kDraun: return run_draun(spec, theta_s, theta_c, y_u, y_r, cfg);
    case AttackMode::kGia: return run_gia(spec, theta_s, theta_c, y_u, cfg);
    case AttackMode::kDraunSpecific:
      if (!truth) throw std::invalid_argument("draun-specific needs the client's unlearning config");
      return run_draun_specific(spec, theta_s, theta_c, y_u, y_r, *truth, cfg);
    case AttackMode::kDraunSecond:
      return run_draun_2nd(spec, theta_s, sub(theta_c.detach(), theta_s.detach()), y_u, y_r, cfg);
  }
  throw std::invalid_argument("unknown attack mode");
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iter,loss,loss0,loss1,branch\n";
  for (const auto& r : trace) {
    out << r.iter << "," << format_double(r.loss) << "," << format_double(r.loss0) << ","
        << format_double(r.loss1) << "," << r.branch << "\n";
  }
}

}  // namespace fuleak
