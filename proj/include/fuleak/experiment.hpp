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
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fuleak/attack.hpp"
#include "fuleak/data.hpp"
#include "fuleak/fed.hpp"
#include "fuleak/unlearn.hpp"

namespace fuleak {

// Bad keys, bad values, missing inputs. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DefenseKind { kNone, kNoise, kPrune };

struct ExperimentConfig {
  std::string dataset = "mnist";  // mnist | cifar10 | synth
  std::filesystem::path data_dir = "data/mnist";
  Index train_limit = 0;  // keep the first n training samples; 0 keeps all
  Index synth_per_class = 50;
  Index synth_side = 8;
  double synth_sep = 1.0;

  ModelKind model_kind = ModelKind::kConvNetS;
  Index model_width = 16;

  FedConfig fed;
  UnlearnConfig unlearn;
  int unlearn_client = 0;
  Index unlearn_count = 1;
  AttackConfig attack;

  DefenseKind defense = DefenseKind::kNone;
  double defense_sigma = 1e-5;
  double defense_tau = 1e-5;

  std::filesystem::path output_dir = "out";
  std::uint64_t master_seed = 0;

  // Throws ConfigError.
  void validate() const;
};

using KeyValues = std::map<std::string, std::string>;

// `key = value` per line; '#' starts a comment. Throws ConfigError with the
// line number.
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);

// Unknown keys and unparsable values throw ConfigError naming the key.
void apply_config(ExperimentConfig& cfg, const KeyValues& kv);
// Every key with its current value; apply_config(snapshot) is the identity.
KeyValues config_snapshot(const ExperimentConfig& cfg);
std::vector<std::string> config_keys();
std::string format_key_values(const KeyValues& kv);

// Every random stream hangs off master_seed; this copies the derived seeds
// into the nested configs.
void derive_seeds(ExperimentConfig& cfg);
std::uint64_t partition_seed(const ExperimentConfig& cfg);
std::uint64_t init_seed(const ExperimentConfig& cfg);
std::uint64_t selection_seed(const ExperimentConfig& cfg);
std::uint64_t defense_seed(const ExperimentConfig& cfg);

struct Corpus {
  std::shared_ptr<const Dataset> train;
  std::shared_ptr<const Dataset> test;  // may be null
};

// Missing files raise ConfigError naming the path.
Corpus load_corpus(const ExperimentConfig& cfg);
ModelSpec model_spec(const ExperimentConfig& cfg, const Dataset& data);
std::vector<ClientDataset> make_clients(const ExperimentConfig& cfg, const Corpus& corpus);

TrainResult stage_train(const ExperimentConfig& cfg, const Corpus& corpus,
                        const RoundHook& hook = {});

// What the server sees about one unlearning request.
struct UnlearnMetadata {
  int client_id = 0;
  Index local_size = 0;    // |D_c|
  Index unlearn_size = 0;  // |D_u|
  int epochs = 1;
  Index batch = 1;
  std::vector<int> y_u;
  std::vector<int> y_r;
  // Only present when the attack is told the rule (draun-specific, draun-2nd).
  std::optional<UnlearnConfig> disclosed;
};

bool attack_needs_rule(AttackMode mode);
KeyValues encode_metadata(const UnlearnMetadata& meta);
UnlearnMetadata decode_metadata(const KeyValues& kv);

struct UnlearnStage {
  ClientDataset client;
  ClientUnlearnResult result;
  UnlearnMetadata meta;
  Tensor truth;  // the unlearned images, for evaluation only
};

UnlearnStage stage_unlearn(const ExperimentConfig& cfg, const Corpus& corpus,
                           const ParamVector& theta_s);

ParamVector stage_defend(const ExperimentConfig& cfg, const ParamVector& theta_s,
                         const ParamVector& theta_c);

ReconstructionResult stage_attack(const ExperimentConfig& cfg, const ParamVector& theta_s,
                                  const ParamVector& theta_c, const UnlearnMetadata& meta);

std::string to_string(DefenseKind kind);
DefenseKind parse_defense(const std::string& name);

}  // namespace fuleak
