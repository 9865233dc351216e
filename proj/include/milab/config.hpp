// Copyright 2026 The milab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MILAB_CONFIG_HPP_
#define MILAB_CONFIG_HPP_

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "milab/attack.hpp"
#include "milab/erase.hpp"
#include "milab/error.hpp"
#include "milab/hash.hpp"

namespace milab {

/// Declarative description of one experiment cell: dataset, the three model
/// trainings, the attack, and the analysis toggles.
struct ExperimentConfig {
  // dataset
  int num_identities = 32;
  int samples_per_identity = 20;
  int width = 32;
  int height = 32;
  int channels = 3;
  int test_holdout = 5;  // per-identity samples held out for natural accuracy

  // target model
  int target_epochs = 40;
  double target_lr = 1e-3;
  double epoch_budget_fraction = 1.0;
  ErasePolicy policy;

  // evaluation model (always trained without defense)
  int eval_epochs = 40;
  double eval_lr = 1e-3;

  // decoder
  int decoder_epochs = 80;
  double decoder_lr = 1e-3;
  double decoder_latent_reg = 0.05;
  int latent_dim = 64;

  int batch_size = 32;

  // attack
  AttackConfig attack;
  int attack_samples_per_identity = 1;

  // analysis
  bool featspace_enabled = true;
  int featspace_identities = 3;

  // orchestration
  std::string out_dir = "runs/exp";
  std::string cache_dir;  // empty: "<out_dir>/cache"
  std::uint64_t master_seed = 7;
  int repeats = 3;
  int jobs = 1;

  ExperimentConfig() {
    // dataset-mean fill resolved against the training split at run time
    policy.fill = FillStrategy::channel_mean({});
  }

  std::string cache_path() const {
    return cache_dir.empty() ? out_dir + "/cache" : cache_dir;
  }

  void validate() const {
    if (num_identities < 2 || samples_per_identity < 2)
      throw ConfigError("dataset too small");
    if (test_holdout < 1 || test_holdout >= samples_per_identity)
      throw ConfigError("test_holdout must lie in [1, samples_per_identity)");
    if (target_epochs < 1 || eval_epochs < 1 || decoder_epochs < 1)
      throw ConfigError("epoch counts must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    if (attack_samples_per_identity < 1)
      throw ConfigError("attack samples per identity must be >= 1");
    if (epoch_budget_fraction < 0.0 || epoch_budget_fraction > 1.0)
      throw ConfigError("epoch_budget_fraction outside [0,1]");
    // fill with empty channel_means is the "use dataset means" marker,
    // resolved against the training split once the dataset exists
    auto validate_with_marker = [](ErasePolicy p) {
      if (p.fill.kind == FillKind::kChannelMean && p.fill.channel_means.empty())
        p.fill = FillStrategy::constant(0.0f);
      p.validate();
    };
    validate_with_marker(policy);
    AttackConfig attack_check = attack;
    if (attack_check.adaptive &&
        attack_check.adaptive_policy.fill.kind == FillKind::kChannelMean &&
        attack_check.adaptive_policy.fill.channel_means.empty())
      attack_check.adaptive_policy.fill = FillStrategy::constant(0.0f);
    attack_check.validate();
  }
};

inline nlohmann::json experiment_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["dataset"] = {{"num_identities", c.num_identities},
                  {"samples_per_identity", c.samples_per_identity},
                  {"width", c.width},
                  {"height", c.height},
                  {"channels", c.channels},
                  {"test_holdout", c.test_holdout}};
  j["target"] = {{"epochs", c.target_epochs},
                 {"learning_rate", c.target_lr},
                 {"epoch_budget_fraction", c.epoch_budget_fraction}};
  j["eval"] = {{"epochs", c.eval_epochs}, {"learning_rate", c.eval_lr}};
  j["decoder"] = {{"epochs", c.decoder_epochs},
                  {"learning_rate", c.decoder_lr},
                  {"latent_reg", c.decoder_latent_reg},
                  {"latent_dim", c.latent_dim}};
  j["batch_size"] = c.batch_size;
  j["policy"] = policy_to_json(c.policy);
  j["attack"] = attack_config_to_json(c.attack);
  j["attack"]["samples_per_identity"] = c.attack_samples_per_identity;
  j["featspace"] = {{"enabled", c.featspace_enabled},
                    {"identities", c.featspace_identities}};
  j["out"] = c.out_dir;
  j["cache"] = c.cache_dir;
  j["seed"] = c.master_seed;
  j["repeats"] = c.repeats;
  j["jobs"] = c.jobs;
  return j;
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    c.num_identities = d.value("num_identities", c.num_identities);
    c.samples_per_identity = d.value("samples_per_identity", c.samples_per_identity);
    c.width = d.value("width", c.width);
    c.height = d.value("height", c.height);
    c.channels = d.value("channels", c.channels);
    c.test_holdout = d.value("test_holdout", c.test_holdout);
  }
  if (j.contains("target")) {
    const auto& t = j.at("target");
    c.target_epochs = t.value("epochs", c.target_epochs);
    c.target_lr = t.value("learning_rate", c.target_lr);
    c.epoch_budget_fraction = t.value("epoch_budget_fraction", c.epoch_budget_fraction);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    c.eval_epochs = e.value("epochs", c.eval_epochs);
    c.eval_lr = e.value("learning_rate", c.eval_lr);
  }
  if (j.contains("decoder")) {
    const auto& d = j.at("decoder");
    c.decoder_epochs = d.value("epochs", c.decoder_epochs);
    c.decoder_lr = d.value("learning_rate", c.decoder_lr);
    c.decoder_latent_reg = d.value("latent_reg", c.decoder_latent_reg);
    c.latent_dim = d.value("latent_dim", c.latent_dim);
  }
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("policy")) c.policy = policy_from_json(j.at("policy"));
  if (j.contains("attack")) {
    c.attack = attack_config_from_json(j.at("attack"));
    c.attack_samples_per_identity =
        j.at("attack").value("samples_per_identity", c.attack_samples_per_identity);
  }
  if (j.contains("featspace")) {
    const auto& f = j.at("featspace");
    c.featspace_enabled = f.value("enabled", c.featspace_enabled);
    c.featspace_identities = f.value("identities", c.featspace_identities);
  }
  c.out_dir = j.value("out", c.out_dir);
  c.cache_dir = j.value("cache", c.cache_dir);
  c.master_seed = j.value("seed", c.master_seed);
  c.repeats = j.value("repeats", c.repeats);
  c.jobs = j.value("jobs", c.jobs);
  c.validate();
  return c;
}

/// Applies one "dotted.path=value" override onto a JSON config document.
/// Values parse as JSON when possible (numbers, booleans, arrays), otherwise
/// they are taken as strings.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }

  nlohmann::json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("empty key segment in override: " + assignment);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline ExperimentConfig load_experiment_config(
    const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config parse error: " + std::string(e.what()));
    }
  }
  for (const auto& assignment : overrides) apply_override(doc, assignment);
  return experiment_from_json(doc);
}

inline std::string experiment_hash(const ExperimentConfig& c) {
  nlohmann::json j = experiment_to_json(c);
  // location-independent: the same experiment in a different directory is
  // still the same experiment
  j.erase("out");
  j.erase("cache");
  j.erase("jobs");
  return hex64(fnv1a64(j.dump()));
}

}  // namespace milab

#endif  // MILAB_CONFIG_HPP_
