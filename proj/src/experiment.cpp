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

#include "fuleak/experiment.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "fuleak/metrics.hpp"
#include "fuleak/rng.hpp"

namespace fuleak {

namespace {

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& why) {
  throw ConfigError("config key '" + key + "': bad value '" + value + "' (" + why + ")");
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) bad_value(key, v, "expected a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "expected true or false");
}

template <class F>
auto translate(const std::string& key, const std::string& v, F&& f) {
  try {
    return f(v);
  } catch (const std::invalid_argument& e) {
    bad_value(key, v, e.what());
  }
}

std::string str(double v) { return format_double(v); }
std::string str(bool v) { return v ? "true" : "false"; }
template <class I>
  requires std::is_integral_v<I>
std::string str(I v) {
  return std::to_string(v);
}

// Member-pointer shortcuts for plain numeric and boolean fields.
template <class T>
Field num(std::string key, std::function<T&(ExperimentConfig&)> ref) {
  return {key,
          [key, ref](ExperimentConfig& c, const std::string& v) {
            if constexpr (std::is_same_v<T, bool>) {
              ref(c) = parse_bool(key, v);
            } else {
              ref(c) = parse_number<T>(key, v);
            }
          },
          [ref](const ExperimentConfig& c) { return str(ref(const_cast<ExperimentConfig&>(c))); }};
}

#define FIELD(type, key, expr) \
  num<type>(key, [](ExperimentConfig& c) -> type& { return expr; })

std::string solver_name(NewtonSolver s) {
  switch (s) {
    case NewtonSolver::kMinres: return "minres";
    case NewtonSolver::kCg: return "cg";
    case NewtonSolver::kDense: return "dense";
  }
  return "?";
}

NewtonSolver parse_solver(const std::string& v) {
  if (v == "minres") return NewtonSolver::kMinres;
  if (v == "cg") return NewtonSolver::kCg;
  if (v == "dense") return NewtonSolver::kDense;
  throw std::invalid_argument("expected minres, cg or dense");
}

std::string optimizer_name(Optimizer o) { return o == Optimizer::kSgd ? "sgd" : "adam"; }

Optimizer parse_optimizer(const std::string& v) {
  if (v == "adam") return Optimizer::kAdam;
  if (v == "sgd") return Optimizer::kSgd;
  throw std::invalid_argument("expected adam or sgd");
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back({"dataset",
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v != "mnist" && v != "cifar10" && v != "synth") {
                     bad_value("dataset", v, "expected mnist, cifar10 or synth");
                   }
                   c.dataset = v;
                 },
                 [](const ExperimentConfig& c) { return c.dataset; }});
    f.push_back({"data.dir", [](ExperimentConfig& c, const std::string& v) { c.data_dir = v; },
                 [](const ExperimentConfig& c) { return c.data_dir.string(); }});
    f.push_back(FIELD(Index, "data.limit", c.train_limit));
    f.push_back(FIELD(Index, "synth.per_class", c.synth_per_class));
    f.push_back(FIELD(Index, "synth.side", c.synth_side));
    f.push_back(FIELD(double, "synth.sep", c.synth_sep));
    f.push_back({"model.kind",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.model_kind = translate("model.kind", v, parse_model_kind);
                 },
                 [](const ExperimentConfig& c) { return to_string(c.model_kind); }});
    f.push_back(FIELD(Index, "model.width", c.model_width));

    f.push_back(FIELD(int, "fed.num_clients", c.fed.num_clients));
    f.push_back(FIELD(int, "fed.clients_per_round", c.fed.clients_per_round));
    f.push_back(FIELD(double, "fed.lr", c.fed.lr));
    f.push_back(FIELD(int, "fed.local_epochs", c.fed.local_epochs));
    f.push_back(FIELD(Index, "fed.batch_size", c.fed.batch_size));
    f.push_back(FIELD(int, "fed.rounds", c.fed.rounds));

    f.push_back({"unlearn.algo",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.unlearn.algo = translate("unlearn.algo", v, parse_unlearn_algo);
                 },
                 [](const ExperimentConfig& c) { return to_string(c.unlearn.algo); }});
    f.push_back(FIELD(double, "unlearn.eta", c.unlearn.eta));
    f.push_back(FIELD(int, "unlearn.epochs", c.unlearn.epochs));
    f.push_back(FIELD(Index, "unlearn.batch", c.unlearn.batch));
    f.push_back(FIELD(double, "unlearn.delta", c.unlearn.delta));
    f.push_back(FIELD(double, "unlearn.alam_alpha", c.unlearn.alam_alpha));
    f.push_back(FIELD(double, "unlearn.alam_beta", c.unlearn.alam_beta));
    f.push_back(FIELD(double, "unlearn.alam_gamma", c.unlearn.alam_gamma));
    f.push_back(FIELD(double, "unlearn.newton_damp", c.unlearn.newton_damp));
    f.push_back(FIELD(double, "unlearn.newton_eta", c.unlearn.newton_eta));
    f.push_back({"unlearn.newton_solver",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.unlearn.newton_solver = translate("unlearn.newton_solver", v, parse_solver);
                 },
                 [](const ExperimentConfig& c) { return solver_name(c.unlearn.newton_solver); }});
    f.push_back(FIELD(double, "unlearn.cg_tol", c.unlearn.cg_tol));
    f.push_back(FIELD(int, "unlearn.cg_max_iter", c.unlearn.cg_max_iter));
    f.push_back(FIELD(int, "unlearn.client", c.unlearn_client));
    f.push_back(FIELD(Index, "unlearn.count", c.unlearn_count));

    f.push_back({"attack.mode",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.attack.mode = translate("attack.mode", v, parse_attack_mode);
                 },
                 [](const ExperimentConfig& c) { return to_string(c.attack.mode); }});
    f.push_back(FIELD(int, "attack.T", c.attack.iterations));
    f.push_back(FIELD(double, "attack.eta_rec", c.attack.eta_rec));
    f.push_back(FIELD(double, "attack.lambda_tv", c.attack.lambda_tv));
    f.push_back(FIELD(double, "attack.beta", c.attack.beta));
    f.push_back(FIELD(double, "attack.eta_unl", c.attack.eta_unl));
    f.push_back(FIELD(double, "attack.delta", c.attack.delta));
    f.push_back(FIELD(double, "attack.Delta", c.attack.init_distance));
    f.push_back(FIELD(double, "attack.sigma", c.attack.init_sigma));
    f.push_back({"attack.optimizer",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.attack.optimizer = translate("attack.optimizer", v, parse_optimizer);
                 },
                 [](const ExperimentConfig& c) { return optimizer_name(c.attack.optimizer); }});
    f.push_back(FIELD(bool, "attack.lr_decay", c.attack.lr_decay));
    f.push_back(FIELD(bool, "attack.boxed", c.attack.boxed));
    f.push_back(FIELD(double, "attack.adam_beta1", c.attack.adam_beta1));
    f.push_back(FIELD(double, "attack.adam_beta2", c.attack.adam_beta2));
    f.push_back(FIELD(double, "attack.adam_eps", c.attack.adam_eps));
    f.push_back(FIELD(double, "attack.damp", c.attack.damp));
    f.push_back(FIELD(double, "attack.cg_tol", c.attack.cg_tol));
    f.push_back(FIELD(int, "attack.cg_max_iter", c.attack.cg_max_iter));
    f.push_back(FIELD(int, "attack.snapshot_every", c.attack.snapshot_every));

    f.push_back({"defense",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.defense = translate("defense", v, parse_defense);
                 },
                 [](const ExperimentConfig& c) { return to_string(c.defense); }});
    f.push_back(FIELD(double, "defense.sigma", c.defense_sigma));
    f.push_back(FIELD(double, "defense.tau", c.defense_tau));

    f.push_back({"output_dir", [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; },
                 [](const ExperimentConfig& c) { return c.output_dir.string(); }});
    f.push_back(FIELD(std::uint64_t, "master_seed", c.master_seed));
    return f;
  }();
  return all;
}

#undef FIELD

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> split_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::istringstream in(v);
  std::string tok;
  while (in >> tok) out.push_back(parse_number<int>(key, tok));
  return out;
}

const std::string& need(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError("unlearn metadata lacks '" + key + "'");
  return it->second;
}

void require_file(const std::filesystem::path& p) {
  if (!std::filesystem::is_regular_file(p)) {
    throw ConfigError("dataset file not found: " + p.string());
  }
}

}  // namespace

std::string to_string(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::kNone: return "none";
    case DefenseKind::kNoise: return "noise";
    case DefenseKind::kPrune: return "prune";
  }
  return "?";
}

DefenseKind parse_defense(const std::string& name) {
  for (auto k : {DefenseKind::kNone, DefenseKind::kNoise, DefenseKind::kPrune}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("expected none, noise or prune");
}

void ExperimentConfig::validate() const {
  auto wrap = [](auto&& f) {
    try {
      f();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  };
  wrap([&] { fed.validate(); });
  wrap([&] { unlearn.validate(); });
  wrap([&] { attack.validate(); });
  if (model_width < 1) throw ConfigError("model.width must be >= 1");
  if (unlearn_count < 1) throw ConfigError("unlearn.count must be >= 1");
  if (unlearn_client < 0 || unlearn_client >= fed.num_clients) {
    throw ConfigError("unlearn.client must lie in [0, fed.num_clients)");
  }
  if (attack.mode == AttackMode::kDraunSecond && unlearn.algo != UnlearnAlgo::kNewton) {
    throw ConfigError("attack.mode=draun-2nd requires unlearn.algo=newton");
  }
  if (attack.mode == AttackMode::kDraunSpecific && unlearn.algo == UnlearnAlgo::kNewton) {
    throw ConfigError("attack.mode=draun-specific does not cover newton; use draun-2nd");
  }
  if (defense_sigma < 0.0 || defense_tau < 0.0) throw ConfigError("defense strength must be >= 0");
  if (dataset == "synth" && (synth_per_class < 1 || synth_side < 4)) {
    throw ConfigError("synth.per_class must be >= 1 and synth.side >= 4");
  }
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      throw ConfigError("line " + std::to_string(n) + ": expected key=value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_key_values(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void apply_config(ExperimentConfig& cfg, const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    bool found = false;
    for (const Field& f : fields()) {
      if (f.key == key) {
        f.set(cfg, value);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("unknown config key '" + key + "'");
  }
}

KeyValues config_snapshot(const ExperimentConfig& cfg) {
  KeyValues kv;
  for (const Field& f : fields()) kv[f.key] = f.get(cfg);
  return kv;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.push_back(f.key);
  return keys;
}

std::string format_key_values(const KeyValues& kv) {
  std::string s;
  for (const auto& [k, v] : kv) s += k + "=" + v + "\n";
  return s;
}

void derive_seeds(ExperimentConfig& cfg) {
  cfg.fed.seed = derive_seed(cfg.master_seed, {1});
  cfg.unlearn.seed = derive_seed(cfg.master_seed, {5});
  cfg.attack.seed = derive_seed(cfg.master_seed, {6});
}

std::uint64_t partition_seed(const ExperimentConfig& c) { return derive_seed(c.master_seed, {2}); }
std::uint64_t init_seed(const ExperimentConfig& c) { return derive_seed(c.master_seed, {3}); }
std::uint64_t selection_seed(const ExperimentConfig& c) { return derive_seed(c.master_seed, {4}); }
std::uint64_t defense_seed(const ExperimentConfig& c) { return derive_seed(c.master_seed, {7}); }

Corpus load_corpus(const ExperimentConfig& cfg) {
  Corpus out;
  auto limit = [&](Dataset d) {
    if (cfg.train_limit > 0 && cfg.train_limit < d.size()) {
      std::vector<Index> idx(static_cast<std::size_t>(cfg.train_limit));
      for (Index i = 0; i < cfg.train_limit; ++i) idx[static_cast<std::size_t>(i)] = i;
      Dataset cut{d.name, d.gather_images(idx), d.gather_labels(idx), d.num_classes};
      return cut;
    }
    return d;
  };
  if (cfg.dataset == "synth") {
    const InputShape shape{1, cfg.synth_side, cfg.synth_side};
    const std::uint64_t s = derive_seed(cfg.master_seed, {8});
    // One draw split into train and test, so both share the class means.
    const Index test_per_class = std::max<Index>(1, cfg.synth_per_class / 4);
    const Dataset all = synth_blobs(10, cfg.synth_per_class + test_per_class, shape,
                                    cfg.synth_sep, s);
    std::vector<Index> head, tail;
    for (Index i = 0; i < all.size(); ++i) (i < 10 * cfg.synth_per_class ? head : tail).push_back(i);
    auto part = [&](const std::vector<Index>& idx) {
      return Dataset{"synth", all.gather_images(idx), all.gather_labels(idx), all.num_classes};
    };
    out.train = std::make_shared<const Dataset>(limit(part(head)));
    out.test = std::make_shared<const Dataset>(part(tail));
    return out;
  }
  const auto& dir = cfg.data_dir;
  if (cfg.dataset == "mnist") {
    const auto ti = dir / "train-images-idx3-ubyte", tl = dir / "train-labels-idx1-ubyte";
    require_file(ti);
    require_file(tl);
    out.train = std::make_shared<const Dataset>(limit(load_idx(ti, tl)));
    const auto vi = dir / "t10k-images-idx3-ubyte", vl = dir / "t10k-labels-idx1-ubyte";
    if (std::filesystem::exists(vi) && std::filesystem::exists(vl)) {
      out.test = std::make_shared<const Dataset>(load_idx(vi, vl));
    }
    return out;
  }
  std::vector<std::filesystem::path> batches;
  for (int i = 1; i <= 5; ++i) {
    const auto p = dir / ("data_batch_" + std::to_string(i) + ".bin");
    if (std::filesystem::exists(p)) batches.push_back(p);
  }
  if (batches.empty()) require_file(dir / "data_batch_1.bin");
  out.train = std::make_shared<const Dataset>(limit(load_cifar10(batches)));
  const auto test = dir / "test_batch.bin";
  if (std::filesystem::exists(test)) {
    const std::filesystem::path t[1] = {test};
    out.test = std::make_shared<const Dataset>(load_cifar10(t));
  }
  return out;
}

ModelSpec model_spec(const ExperimentConfig& cfg, const Dataset& data) {
  ModelSpec spec;
  spec.kind = cfg.model_kind;
  spec.input = data.shape();
  spec.num_classes = data.num_classes;
  spec.width = cfg.model_width;
  return spec;
}

std::vector<ClientDataset> make_clients(const ExperimentConfig& cfg, const Corpus& corpus) {
  if (corpus.train->size() < cfg.fed.num_clients) {
    throw ConfigError("fed.num_clients exceeds the training set size");
  }
  return partition(corpus.train, cfg.fed.num_clients, partition_seed(cfg));
}

TrainResult stage_train(const ExperimentConfig& cfg0, const Corpus& corpus,
                        const RoundHook& hook) {
  ExperimentConfig cfg = cfg0;
  derive_seeds(cfg);
  const ModelSpec spec = model_spec(cfg, *corpus.train);
  const ParamVector init = init_params(spec, init_seed(cfg));
  return train_global(cfg.fed, init, make_clients(cfg, corpus), corpus.test.get(), hook);
}

bool attack_needs_rule(AttackMode mode) {
  return mode == AttackMode::kDraunSpecific || mode == AttackMode::kDraunSecond;
}

KeyValues encode_metadata(const UnlearnMetadata& m) {
  KeyValues kv;
  kv["client_id"] = std::to_string(m.client_id);
  kv["local_size"] = std::to_string(m.local_size);
  kv["unlearn_size"] = std::to_string(m.unlearn_size);
  kv["epochs"] = std::to_string(m.epochs);
  kv["batch"] = std::to_string(m.batch);
  kv["y_u"] = join_ints(m.y_u);
  kv["y_r"] = join_ints(m.y_r);
  if (m.disclosed) {
    // Reuse the config registry so the disclosed rule round-trips exactly.
    ExperimentConfig tmp;
    tmp.unlearn = *m.disclosed;
    for (const auto& [k, v] : config_snapshot(tmp)) {
      if (k.rfind("unlearn.", 0) == 0 && k != "unlearn.client" && k != "unlearn.count") {
        kv["rule." + k.substr(8)] = v;
      }
    }
  }
  return kv;
}

UnlearnMetadata decode_metadata(const KeyValues& kv) {
  UnlearnMetadata m;
  m.client_id = parse_number<int>("client_id", need(kv, "client_id"));
  m.local_size = parse_number<Index>("local_size", need(kv, "local_size"));
  m.unlearn_size = parse_number<Index>("unlearn_size", need(kv, "unlearn_size"));
  m.epochs = parse_number<int>("epochs", need(kv, "epochs"));
  m.batch = parse_number<Index>("batch", need(kv, "batch"));
  m.y_u = split_ints("y_u", need(kv, "y_u"));
  m.y_r = split_ints("y_r", need(kv, "y_r"));
  KeyValues rule;
  for (const auto& [k, v] : kv) {
    if (k.rfind("rule.", 0) == 0) {
      rule["unlearn." + k.substr(5)] = v;
    } else if (k != "client_id" && k != "local_size" && k != "unlearn_size" && k != "epochs" &&
               k != "batch" && k != "y_u" && k != "y_r") {
      throw ConfigError("unlearn metadata: unknown key '" + k + "'");
    }
  }
  if (!rule.empty()) {
    ExperimentConfig tmp;
    apply_config(tmp, rule);
    m.disclosed = tmp.unlearn;
  }
  if (static_cast<Index>(m.y_u.size()) != m.unlearn_size) {
    throw ConfigError("unlearn metadata: y_u does not list unlearn_size labels");
  }
  return m;
}

UnlearnStage stage_unlearn(const ExperimentConfig& cfg0, const Corpus& corpus,
                           const ParamVector& theta_s) {
  ExperimentConfig cfg = cfg0;
  derive_seeds(cfg);
  const ModelSpec spec = model_spec(cfg, *corpus.train);
  if (!(spec == theta_s.spec)) {
    throw ConfigError("checkpoint model does not match the configured model and dataset");
  }
  auto clients = make_clients(cfg, corpus);
  const ClientDataset& base = clients[static_cast<std::size_t>(cfg.unlearn_client)];
  if (cfg.unlearn_count >= base.size()) {
    throw ConfigError("unlearn.count must be smaller than the client's local set");
  }
  UnlearnStage out;
  out.client = mark_unlearn(base, cfg.unlearn_count, selection_seed(cfg));
  try {
    out.result = unlearn(theta_s, out.client, cfg.unlearn);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  UnlearnMetadata& m = out.meta;
  m.client_id = out.client.client_id;
  m.local_size = out.client.size();
  m.unlearn_size = static_cast<Index>(out.client.unlearn.size());
  m.epochs = cfg.unlearn.epochs;
  m.batch = cfg.unlearn.batch;
  m.y_u = corpus.train->gather_labels(out.client.unlearn);
  // Retain labels come from the samples the rule actually paired with D_u;
  // rules without a retain term still report |D_u| retain labels.
  std::vector<Index> r = out.result.retain_used;
  for (std::size_t i = 0; r.size() < out.client.unlearn.size() && i < out.client.retain.size(); ++i) {
    r.push_back(out.client.retain[i]);
  }
  r.resize(std::min(r.size(), out.client.unlearn.size()));
  m.y_r = corpus.train->gather_labels(r);
  if (attack_needs_rule(cfg.attack.mode)) m.disclosed = cfg.unlearn;
  out.truth = corpus.train->gather_images(out.client.unlearn);
  return out;
}

ParamVector stage_defend(const ExperimentConfig& cfg, const ParamVector& theta_s,
                         const ParamVector& theta_c) {
  if (!(theta_s.spec == theta_c.spec)) throw ConfigError("defend: checkpoints disagree on the model");
  switch (cfg.defense) {
    case DefenseKind::kNone: return theta_c;
    case DefenseKind::kNoise:
      return make_params(theta_c.spec, defend_noise(theta_c.values, theta_s.values,
                                                    cfg.defense_sigma, defense_seed(cfg)));
    case DefenseKind::kPrune:
      return make_params(theta_c.spec,
                         defend_prune(theta_c.values, theta_s.values, cfg.defense_tau));
  }
  return theta_c;
}

ReconstructionResult stage_attack(const ExperimentConfig& cfg0, const ParamVector& theta_s,
                                  const ParamVector& theta_c, const UnlearnMetadata& meta) {
  ExperimentConfig cfg = cfg0;
  derive_seeds(cfg);
  if (!(theta_s.spec == theta_c.spec)) throw ConfigError("attack: checkpoints disagree on the model");
  AttackConfig a = cfg.attack;
  a.epochs = meta.epochs;
  a.batch = meta.batch;
  const UnlearnConfig* rule = nullptr;
  if (attack_needs_rule(a.mode)) {
    if (!meta.disclosed) {
      throw ConfigError("attack.mode=" + to_string(a.mode) +
                        " needs the unlearning rule, which the metadata withholds");
    }
    rule = &*meta.disclosed;
    if (a.mode == AttackMode::kDraunSecond && rule->algo != UnlearnAlgo::kNewton) {
      throw ConfigError("attack.mode=draun-2nd requires a newton update");
    }
  }
  std::vector<int> y_r = meta.y_r;
  if (y_r.size() != meta.y_u.size()) y_r = meta.y_u;
  try {
    return run_attack(theta_s.spec, theta_s.values, theta_c.values, meta.y_u, y_r, a, rule);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace fuleak
