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

#include "fuleak/fed.hpp"

#include <algorithm>
#include <exception>
#include <numeric>
#include <random>

#include "fuleak/rng.hpp"

namespace fuleak {

void FedConfig::validate() const {
  if (num_clients < 1 || clients_per_round < 1 || local_epochs < 1 || batch_size < 1 ||
      rounds < 0 || !(lr > 0.0)) {
    throw std::invalid_argument("fed config: values must be positive");
  }
  if (clients_per_round > num_clients) {
    throw std::invalid_argument("fed config: clients_per_round exceeds num_clients");
  }
}

Tensor sgd_epochs(const BatchLoss& loss, const Tensor& theta, std::span<const Index> indices,
                  double lr, int epochs, Index batch, std::uint64_t seed, Index* steps) {
  if (indices.empty()) throw std::invalid_argument("local_sgd: empty dataset");
  Tensor th = theta.detach();
  std::vector<Index> order(indices.begin(), indices.end());
  Index taken = 0;
  for (int e = 0; e < epochs; ++e) {
    std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(e)}));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(batch)) {
      const std::size_t len = std::min(order.size() - at, static_cast<std::size_t>(batch));
      Tensor g = batch_grad(loss, th, std::span<const Index>(order).subspan(at, len));
      th = sub(th, affine(g, lr));
      ++taken;
    }
  }
  th.check_finite("local SGD parameters");
  if (steps) *steps = taken;
  return th;
}

ClientUpdate local_sgd(const ParamVector& theta_in, const ClientDataset& data, double lr,
                       int epochs, Index batch, std::uint64_t seed) {
  ClientUpdate u;
  u.client_id = data.client_id;
  u.num_samples = data.size();
  BatchLoss loss = model_loss(theta_in.spec, data.base);
  Tensor th = sgd_epochs(loss, theta_in.values, data.indices, lr, epochs, batch, seed, &u.steps_taken);
  u.theta_after = make_params(theta_in.spec, th);
  return u;
}

ParamVector aggregate(std::vector<ClientUpdate> updates) {
  if (updates.empty()) throw std::invalid_argument("aggregate: no updates");
  std::sort(updates.begin(), updates.end(),
            [](const ClientUpdate& a, const ClientUpdate& b) { return a.client_id < b.client_id; });
  const ModelSpec spec = updates.front().theta_after.spec;
  double total = 0.0;
  for (const auto& u : updates) {
    if (!(u.theta_after.spec == spec)) throw std::invalid_argument("aggregate: model spec mismatch");
    if (u.num_samples <= 0) throw std::invalid_argument("aggregate: update without samples");
    total += static_cast<double>(u.num_samples);
  }
  std::vector<double> acc(static_cast<std::size_t>(updates.front().theta_after.size()), 0.0);
  for (const auto& u : updates) {
    const double w = static_cast<double>(u.num_samples) / total;
    auto v = u.theta_after.values.values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * v[i];
  }
  return make_params(spec, Tensor::vector(std::move(acc)));
}

double accuracy(const ParamVector& params, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  NoRecordGuard no_record;
  constexpr Index kChunk = 500;
  Index correct = 0;
  std::vector<Index> idx;
  for (Index at = 0; at < data.size(); at += kChunk) {
    idx.clear();
    for (Index i = at; i < std::min(data.size(), at + kChunk); ++i) idx.push_back(i);
    const auto pred = predict(params, data.gather_images(idx));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (pred[i] == data.labels[static_cast<std::size_t>(idx[i])]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train_global(const FedConfig& cfg, const ParamVector& init,
                         const std::vector<ClientDataset>& clients, const Dataset* test,
                         const RoundHook& hook) {
  cfg.validate();
  if (static_cast<int>(clients.size()) != cfg.num_clients) {
    throw std::invalid_argument("train_global: expected " + std::to_string(cfg.num_clients) +
                                " clients, got " + std::to_string(clients.size()));
  }
  TrainResult out{init, {}};
  std::vector<int> ids(clients.size());
  for (int round = 0; round < cfg.rounds; ++round) {
    std::iota(ids.begin(), ids.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, {0x726f756eull, static_cast<std::uint64_t>(round)}));
    std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<ClientUpdate> updates(static_cast<std::size_t>(cfg.clients_per_round));
    std::vector<std::exception_ptr> errors(updates.size());
    const ParamVector current = out.theta;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < cfg.clients_per_round; ++i) {
      const auto slot = static_cast<std::size_t>(i);
      const ClientDataset& cd = clients[static_cast<std::size_t>(ids[slot])];
      const std::uint64_t s = derive_seed(cfg.seed, {static_cast<std::uint64_t>(round),
                                                     static_cast<std::uint64_t>(cd.client_id)});
      try {
        updates[slot] = local_sgd(current, cd, cfg.lr, cfg.local_epochs, cfg.batch_size, s);
      } catch (...) {
        errors[slot] = std::current_exception();
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    out.theta = aggregate(std::move(updates));
    const double acc = test ? accuracy(out.theta, *test) : 0.0;
    out.accuracy.push_back(acc);
    if (hook) hook(round, out.theta, acc);
  }
  return out;
}

}  // namespace fuleak
