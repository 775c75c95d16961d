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
#include <vector>

#include "fuleak/data.hpp"
#include "fuleak/objective.hpp"

namespace fuleak {

struct FedConfig {
  int num_clients = 100;
  int clients_per_round = 10;
  double lr = 0.1;
  int local_epochs = 2;
  Index batch_size = 128;
  int rounds = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ClientUpdate {
  int client_id = 0;
  ParamVector theta_after;
  Index num_samples = 0;
  Index steps_taken = 0;
};

// Plain minibatch SGD over `indices`, reshuffled every epoch from
// derive_seed(seed, {epoch}).
Tensor sgd_epochs(const BatchLoss& loss, const Tensor& theta, std::span<const Index> indices,
                  double lr, int epochs, Index batch, std::uint64_t seed, Index* steps = nullptr);

ClientUpdate local_sgd(const ParamVector& theta_in, const ClientDataset& data, double lr,
                       int epochs, Index batch, std::uint64_t seed);

// Sample-weighted mean, reduced in ascending client_id order.
ParamVector aggregate(std::vector<ClientUpdate> updates);

double accuracy(const ParamVector& params, const Dataset& data);

struct TrainResult {
  ParamVector theta;
  std::vector<double> accuracy;  // per round, on the test set
};

using RoundHook = std::function<void(int round, const ParamVector& theta, double accuracy)>;

TrainResult train_global(const FedConfig& cfg, const ParamVector& init,
                         const std::vector<ClientDataset>& clients, const Dataset* test,
                         const RoundHook& hook = {});

}  // namespace fuleak
