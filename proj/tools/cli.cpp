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

#include "cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "fuleak/checks.hpp"
#include "fuleak/experiment.hpp"
#include "fuleak/metrics.hpp"

namespace fuleak::cli {

namespace {

constexpr const char* kVersion = "0.1.0";

struct Common {
  std::vector<std::string> config_files;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
};

class Manifest {
 public:
  explicit Manifest(std::string command) { kv_["command"] = std::move(command); }
  void config(const ExperimentConfig& cfg) {
    for (const auto& [k, v] : config_snapshot(cfg)) kv_["config." + k] = v;
  }
  void input(const std::string& name, const std::filesystem::path& p) {
    kv_["input." + name] = file_digest(p);
  }
  void output(const std::filesystem::path& root, const std::filesystem::path& p) {
    kv_["output." + std::filesystem::relative(p, root).generic_string()] = file_digest(p);
  }
  void wall(const std::string& stage, double seconds) {
    kv_["wall_time." + stage] = format_double(seconds);
  }
  void note(const std::string& k, const std::string& v) { kv_[k] = v; }
  void write(const std::filesystem::path& dir) {
    kv_["version.fuleak"] = kVersion;
    kv_["version.compiler"] = __VERSION__;
    std::ofstream f(dir / "manifest.txt", std::ios::binary);
    f << format_key_values(kv_);
    if (!f) throw std::runtime_error("cannot write " + (dir / "manifest.txt").string());
  }

 private:
  KeyValues kv_;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

void add_common(CLI::App* app, Common& c, bool artifacts) {
  app->add_option("-c,--config", c.config_files, "key=value config file(s), applied in order");
  app->add_option("-s,--set", c.sets, "override one key, e.g. --set fed.rounds=3");
  auto* seed = app->add_option("--seed", c.seed, "master seed");
  auto* out = app->add_option("-o,--out", c.out, "output directory");
  if (artifacts) {
    seed->required();
    out->required();
  }
  // Any --dotted.key=value is taken as a config override.
  app->allow_extras();
}

// Config files, then --set, then bare --key=value extras, then --seed/--out.
ExperimentConfig resolve(const Common& c, const std::vector<std::string>& extras) {
  ExperimentConfig cfg;
  for (const auto& f : c.config_files) apply_config(cfg, read_key_values(f));
  KeyValues over;
  auto take = [&](const std::string& s) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("expected key=value, got '" + s + "'");
    over[s.substr(0, eq)] = s.substr(eq + 1);
  };
  for (const auto& s : c.sets) take(s);
  for (const auto& e : extras) {
    if (e.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + e + "'");
    take(e.substr(2));
  }
  apply_config(cfg, over);
  if (c.seed) cfg.master_seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  cfg.validate();
  return cfg;
}

std::filesystem::path prepare_out(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  return cfg.output_dir;
}

ParamVector load_ckpt(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("checkpoint not found: " + path);
  return load_checkpoint(path);
}

Tensor image_at(const Tensor& batch, Index i) {
  const Index c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  return slice(batch, i * c * h * w, {c, h, w});
}

std::vector<std::filesystem::path> write_images(const std::filesystem::path& dir,
                                                const std::string& stem, const Tensor& batch) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out;
  const std::string ext = batch.dim(1) == 1 ? ".pgm" : ".ppm";
  for (Index i = 0; i < batch.dim(0); ++i) {
    out.push_back(dir / (stem + "_" + std::to_string(i) + ext));
    write_pnm(out.back(), image_at(batch, i));
  }
  return out;
}

Tensor read_images(const std::vector<std::string>& paths) {
  std::vector<Tensor> parts;
  Shape shape;
  for (const auto& p : paths) {
    if (!std::filesystem::is_regular_file(p)) throw ConfigError("image not found: " + p);
    Tensor t = read_pnm(p);
    if (!shape.empty() && t.shape() != shape) throw ConfigError("image sizes differ: " + p);
    shape = t.shape();
    parts.push_back(reshape(t, {t.numel()}));
  }
  if (parts.empty()) throw ConfigError("no images given");
  Shape s{static_cast<Index>(parts.size())};
  s.insert(s.end(), shape.begin(), shape.end());
  return reshape(concat(parts), s);
}

void write_accuracy_csv(const std::filesystem::path& p, const std::vector<double>& acc) {
  std::ofstream f(p, std::ios::binary);
  f << "round,accuracy\n";
  for (std::size_t i = 0; i < acc.size(); ++i) f << i << ',' << format_double(acc[i]) << '\n';
  if (!f) throw std::runtime_error("cannot write " + p.string());
}

int cmd_train(const ExperimentConfig& cfg) {
  const auto dir = prepare_out(cfg);
  Manifest man("train");
  man.config(cfg);
  Stopwatch sw;
  const Corpus corpus = load_corpus(cfg);
  TrainResult r = stage_train(cfg, corpus, [](int round, const ParamVector&, double acc) {
    std::fprintf(stderr, "round %d accuracy %.4f\n", round, acc);
  });
  man.wall("train", sw.seconds());
  save_checkpoint(dir / "theta_s.flck", r.theta);
  write_accuracy_csv(dir / "accuracy.csv", r.accuracy);
  man.output(dir, dir / "theta_s.flck");
  man.output(dir, dir / "accuracy.csv");
  man.write(dir);
  return kOk;
}

int cmd_unlearn(const ExperimentConfig& cfg, const std::string& theta_s_path) {
  const auto dir = prepare_out(cfg);
  Manifest man("unlearn");
  man.config(cfg);
  const ParamVector theta_s = load_ckpt(theta_s_path);
  man.input("theta_s", theta_s_path);
  Stopwatch sw;
  const Corpus corpus = load_corpus(cfg);
  UnlearnStage u = stage_unlearn(cfg, corpus, theta_s);
  man.wall("unlearn", sw.seconds());
  save_checkpoint(dir / "theta_c.flck", u.result.theta_c);
  {
    std::ofstream f(dir / "unlearn_meta.txt", std::ios::binary);
    f << format_key_values(encode_metadata(u.meta));
  }
  man.output(dir, dir / "theta_c.flck");
  man.output(dir, dir / "unlearn_meta.txt");
  // Ground truth for evaluation; never an input to the attack.
  for (const auto& p : write_images(dir / "truth", "target", u.truth)) man.output(dir, p);
  man.write(dir);
  return kOk;
}

int cmd_defend(const ExperimentConfig& cfg, const std::string& s_path, const std::string& c_path) {
  const auto dir = prepare_out(cfg);
  Manifest man("defend");
  man.config(cfg);
  const ParamVector theta_s = load_ckpt(s_path), theta_c = load_ckpt(c_path);
  man.input("theta_s", s_path);
  man.input("theta_c", c_path);
  save_checkpoint(dir / "theta_c.flck", stage_defend(cfg, theta_s, theta_c));
  man.output(dir, dir / "theta_c.flck");
  man.write(dir);
  return kOk;
}

int cmd_attack(const ExperimentConfig& cfg, const std::string& s_path, const std::string& c_path,
               const std::string& meta_path, const std::vector<std::string>& truth) {
  const auto dir = prepare_out(cfg);
  Manifest man("attack");
  man.config(cfg);
  const ParamVector theta_s = load_ckpt(s_path), theta_c = load_ckpt(c_path);
  if (!std::filesystem::is_regular_file(meta_path)) {
    throw ConfigError("unlearn metadata not found: " + meta_path);
  }
  const UnlearnMetadata meta = decode_metadata(read_key_values(meta_path));
  man.input("theta_s", s_path);
  man.input("theta_c", c_path);
  man.input("meta", meta_path);
  std::optional<Tensor> truth_images;
  if (!truth.empty()) truth_images = read_images(truth);

  ExperimentConfig run = cfg;
  if (cfg.attack.snapshot_every > 0) {
    run.attack.on_snapshot = [&](int it, const Tensor& x) {
      write_images(dir / "snapshots", "iter" + std::to_string(it), x);
    };
  }
  ReconstructionResult r = stage_attack(run, theta_s, theta_c, meta);
  man.wall("attack", r.wall_time);
  write_trace_csv(dir / "trace.csv", r.trace);
  man.output(dir, dir / "trace.csv");
  for (const auto& p : write_images(dir, "recon", r.x_u)) man.output(dir, p);
  if (truth_images) {
    if (truth_images->shape() != r.x_u.shape()) throw ConfigError("truth images do not match the reconstruction shape");
    const MetricsRecord rec = assign_batch(r.x_u, *truth_images);
    write_metrics_csv(dir / "metrics.csv", rec);
    man.output(dir, dir / "metrics.csv");
    std::printf("mean ssim %.6f psnr %.4f mse %.6g\n", rec.mean.ssim, rec.mean.psnr, rec.mean.mse);
  }
  if (r.diverged) {
    man.note("status", "diverged: " + r.error);
    man.write(dir);
    std::fprintf(stderr, "attack diverged: %s (partial artifacts kept)\n", r.error.c_str());
    return kDiverged;
  }
  man.note("status", "ok");
  man.write(dir);
  return kOk;
}

int cmd_metrics(const std::string& out, const std::vector<std::string>& recon,
                const std::vector<std::string>& truth) {
  const Tensor a = read_images(recon), b = read_images(truth);
  if (a.shape() != b.shape()) throw ConfigError("reconstructions and truth differ in shape or count");
  const MetricsRecord rec = assign_batch(a, b);
  std::filesystem::create_directories(out);
  write_metrics_csv(std::filesystem::path(out) / "metrics.csv", rec);
  std::printf("mean ssim %.6f psnr %.4f mse %.6g\n", rec.mean.ssim, rec.mean.psnr, rec.mean.mse);
  return kOk;
}

int cmd_verify(const std::string& check, std::uint64_t seed, const std::string& out) {
  std::vector<CheckLine> lines;
  auto add = [&](std::vector<CheckLine> more) {
    for (auto& l : more) {
      std::printf("%s\n", format_check(l).c_str());
      lines.push_back(std::move(l));
    }
  };
  const bool all = check == "all";
  if (all || check == "autodiff") add(autodiff_checks(seed));
  if (all || check == "stationarity") add(stationarity_checks(10, seed));
  if (all || check == "bound") add(bound_checks(5, seed));
  if (all || check == "collapse") add(collapse_checks(seed));
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    write_check_csv(std::filesystem::path(out) / "verify.csv", lines);
  }
  std::size_t failed = 0;
  for (const auto& l : lines) {
    if (!l.pass) {
      std::fprintf(stderr, "failed: %s\n", l.name.c_str());
      ++failed;
    }
  }
  std::printf("%zu checks, %zu failed\n", lines.size(), failed);
  return failed ? kCheckFailed : kOk;
}

// train -> unlearn -> defend -> attack, one directory per stage.
int cmd_run(const ExperimentConfig& cfg) {
  const auto root = prepare_out(cfg);
  auto stage = [&](const char* name) {
    ExperimentConfig c = cfg;
    c.output_dir = root / name;
    return c;
  };
  if (int rc = cmd_train(stage("train")); rc != kOk) return rc;
  const std::string theta_s = (root / "train" / "theta_s.flck").string();
  if (int rc = cmd_unlearn(stage("unlearn"), theta_s); rc != kOk) return rc;
  std::string theta_c = (root / "unlearn" / "theta_c.flck").string();
  if (cfg.defense != DefenseKind::kNone) {
    if (int rc = cmd_defend(stage("defend"), theta_s, theta_c); rc != kOk) return rc;
    theta_c = (root / "defend" / "theta_c.flck").string();
  }
  std::vector<std::string> truth;
  for (const auto& e : std::filesystem::directory_iterator(root / "unlearn" / "truth")) {
    truth.push_back(e.path().string());
  }
  std::sort(truth.begin(), truth.end(), [](const std::string& a, const std::string& b) {
    return a.size() != b.size() ? a.size() < b.size() : a < b;
  });
  return cmd_attack(stage("attack"), theta_s, theta_c,
                    (root / "unlearn" / "unlearn_meta.txt").string(), truth);
}

}  // namespace

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(f.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Federated unlearning leakage simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common train_c, unlearn_c, defend_c, attack_c, run_c;
  auto* train = app.add_subcommand("train", "FedAvg training of theta_s");
  add_common(train, train_c, true);

  std::string theta_s, theta_c, meta;
  std::vector<std::string> truth, recon;
  auto* unlearn = app.add_subcommand("unlearn", "one client's unlearning update");
  add_common(unlearn, unlearn_c, true);
  unlearn->add_option("--theta-s", theta_s, "trained checkpoint")->required();

  auto* defend = app.add_subcommand("defend", "noise or prune the unlearning update");
  add_common(defend, defend_c, true);
  defend->add_option("--theta-s", theta_s, "trained checkpoint")->required();
  defend->add_option("--theta-c", theta_c, "unlearned checkpoint")->required();

  auto* attack = app.add_subcommand("attack", "reconstruct the unlearned samples");
  add_common(attack, attack_c, true);
  attack->add_option("--theta-s", theta_s, "trained checkpoint")->required();
  attack->add_option("--theta-c", theta_c, "unlearned checkpoint")->required();
  attack->add_option("--meta", meta, "unlearn_meta.txt from the unlearn stage")->required();
  attack->add_option("--truth", truth, "ground-truth images for metrics");

  std::string metrics_out;
  auto* metrics = app.add_subcommand("metrics", "SSIM/PSNR/MSE with optimal pairing");
  metrics->add_option("--recon", recon, "reconstructed images")->required();
  metrics->add_option("--truth", truth, "ground-truth images")->required();
  metrics->add_option("-o,--out", metrics_out, "output directory")->required();

  std::string check = "all", verify_out;
  std::uint64_t verify_seed = 1;
  auto* verify = app.add_subcommand("verify", "numeric checks of the attack theory");
  verify->add_option("--check", check, "autodiff|stationarity|bound|collapse|all")
      ->check(CLI::IsMember({"autodiff", "stationarity", "bound", "collapse", "all"}));
  verify->add_option("--seed", verify_seed, "probe seed");
  verify->add_option("-o,--out", verify_out, "write verify.csv here");

  auto* run_all = app.add_subcommand("run", "train, unlearn, defend and attack in one go");
  add_common(run_all, run_c, true);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(resolve(train_c, train->remaining()));
    if (*unlearn) return cmd_unlearn(resolve(unlearn_c, unlearn->remaining()), theta_s);
    if (*defend) return cmd_defend(resolve(defend_c, defend->remaining()), theta_s, theta_c);
    if (*attack) {
      return cmd_attack(resolve(attack_c, attack->remaining()), theta_s, theta_c, meta, truth);
    }
    if (*metrics) return cmd_metrics(metrics_out, recon, truth);
    if (*verify) return cmd_verify(check, verify_seed, verify_out);
    if (*run_all) return cmd_run(resolve(run_c, run_all->remaining()));
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kDiverged;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
  return kUsage;
}

}  // namespace fuleak::cli
