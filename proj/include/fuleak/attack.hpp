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
#include "fuleak/unlearn.hpp"

namespace fuleak {

enum class AttackMode { kDraun, kGia, kDraunSpecific, kDraunSecond };
enum class Optimizer { kAdam, kSgd };

std::string to_string(AttackMode mode);
AttackMode parse_attack_mode(const std::string& name);

struct AdamHyper {
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;
};

// Bias-corrected Adam update of x in place.
void adam_step(AdamState& state, std::vector<double>& x, std::span<const double> g,
               const AdamHyper& hyper);

struct AttackConfig {
  AttackMode mode = AttackMode::kDraun;
  int iterations = 8000;
  double eta_rec = 0.1;
  double lambda_tv = 1e-6;
  double beta = 0.9;
  double eta_unl = 0.1;
  double delta = 10.0;
  double init_distance = 5.0;  // Delta of the input initialization
  double init_sigma = 1.0;
  int epochs = 1;              // E reported by the client
  Index batch = 1;             // m reported by the client
  Optimizer optimizer = Optimizer::kAdam;
  // Step size x0.1 at 3/8, 5/8 and 7/8 of the run.
  bool lr_decay = true;
  // Project both dummies onto [0,1] after every update.
  bool boxed = true;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Second-order mode. The solves use MINRES; the cg_* names are kept for
  // config compatibility.
  double damp = 1e-3;
  double cg_tol = 1e-8;
  int cg_max_iter = 500;
  std::uint64_t seed = 0;
  int snapshot_every = 0;
  std::function<void(int iter, const Tensor& x_u)> on_snapshot;

  void validate() const;
};

struct PseudoGradient {
  Tensor values;
  Index steps = 1;
};

// U_c = ceil(du_size / m) * E, g = (theta_s - theta_c) / U_c.
PseudoGradient pseudo_gradient(const Tensor& theta_s, const Tensor& theta_c, Index du_size,
                               int epochs, Index batch);

struct Dummies {
  Tensor x_u;
  Tensor x_r;
  int noise_rounds = 0;
};

// Both dummies U[0,1]; then x_r is pushed away from x_u with N(0, sigma^2)
// noise until every pair is more than `distance` apart (Frobenius).
Dummies init_dummies(Index k, InputShape shape, double distance, double sigma,
                     std::uint64_t seed);
// The separation loop on its own. Throws after 10,000 noise rounds.
Tensor separate_dummies(const Tensor& x_u, const Tensor& x_r, double distance, double sigma,
                        std::uint64_t seed, int* rounds = nullptr);

struct SurrogateGrads {
  Tensor g1;  // gradient-difference branch
  Tensor g0;  // ascent branch
};

// Two simulated clients starting at theta_s, E full-batch steps each; both
// returned as (theta_s - theta_end) / E. Differentiable in the dummies when
// they are tracked on the active tape.
SurrogateGrads surrogate_update(const ModelSpec& spec, const Tensor& theta_s, const Tensor& x_u,
                                std::span<const int> y_u, const Tensor& x_r,
                                std::span<const int> y_r, int epochs, double eta_unl,
                                double delta);

// 1 - cos(a, b); exactly 1 when either side has zero norm.
Tensor cosine_distance(const Tensor& target, const Tensor& candidate);

struct ReconLoss {
  Tensor loss;  // the selected branch, still on the tape
  double loss0 = 0.0;
  double loss1 = 0.0;
  int branch = 1;
};

ReconLoss recon_loss(const Tensor& g_true, const Tensor& g1, const Tensor& g0, const Tensor& x_u,
                     const Tensor& x_r, double lambda_tv, double beta);

struct TraceRow {
  int iter = 0;
  double loss = 0.0;
  double loss0 = 0.0;
  double loss1 = 0.0;
  int branch = -1;
};

struct ReconstructionResult {
  Tensor x_u;      // clamped to [0,1]
  Tensor x_u_raw;  // unclamped final iterate
  Tensor x_r;
  std::vector<TraceRow> trace;
  double wall_time = 0.0;
  bool diverged = false;
  std::string error;
};

// |D_u| is y_u.size(); E and m come from cfg.
ReconstructionResult run_draun(const ModelSpec& spec, const Tensor& theta_s,
                               const Tensor& theta_c, std::span<const int> y_u,
                               std::span<const int> y_r, const AttackConfig& cfg);
ReconstructionResult run_gia(const ModelSpec& spec, const Tensor& theta_s, const Tensor& theta_c,
                             std::span<const int> y_u, const AttackConfig& cfg);
ReconstructionResult run_draun_specific(const ModelSpec& spec, const Tensor& theta_s,
                                        const Tensor& theta_c, std::span<const int> y_u,
                                        std::span<const int> y_r, const UnlearnConfig& truth,
                                        const AttackConfig& cfg);
ReconstructionResult run_draun_2nd(const ModelSpec& spec, const Tensor& theta_s,
                                   const Tensor& delta_theta, std::span<const int> y_u,
                                   std::span<const int> y_r, const AttackConfig& cfg);

// Dispatch on cfg.mode. `truth` is only read in draun-specific mode.
ReconstructionResult run_attack(const ModelSpec& spec, const Tensor& theta_s,
                                const Tensor& theta_c, std::span<const int> y_u,
                                std::span<const int> y_r, const AttackConfig& cfg,
                                const UnlearnConfig* truth = nullptr);

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace);

}  // namespace fuleak
