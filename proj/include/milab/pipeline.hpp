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

#ifndef MILAB_PIPELINE_HPP_
#define MILAB_PIPELINE_HPP_

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "milab/attack.hpp"
#include "milab/config.hpp"
#include "milab/dataset.hpp"
#include "milab/featspace.hpp"
#include "milab/hash.hpp"
#include "milab/metrics.hpp"
#include "milab/nn/train.hpp"

namespace milab {

// Experiment orchestration: gen-data -> train E -> train T -> train decoder
// -> attack -> metrics/feature analysis, every stage content-addressed in a
// cache so reruns and sweeps reuse whatever already exists. Everything under
// the output directory ends up in manifest.json with its hash.

namespace detail {

inline constexpr std::uint64_t kSeedTarget = 1;
inline constexpr std::uint64_t kSeedEval = 2;
inline constexpr std::uint64_t kSeedDecoder = 3;
inline constexpr std::uint64_t kSeedAttack = 4;
inline constexpr std::uint64_t kSeedFeatspace = 5;

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

}  // namespace detail

/// Runs one experiment cell. Stages are lazy: each ensure_*() either loads a
/// cache entry keyed by the stage's exact inputs or computes and stores it.
class Pipeline {
public:
  explicit Pipeline(ExperimentConfig config) : config_(std::move(config)) {
    config_.validate();
  }

  const ExperimentConfig& config() const { return config_; }

  const DatasetBundle& ensure_dataset() {
    if (bundle_) return *bundle_;
    const std::string key = dataset_key();
    const auto dir = cache_entry("dataset", key);
    if (!cache_hit(dir)) {
      DatasetBundle bundle = generate_synthfaces(
          config_.num_identities, config_.samples_per_identity, config_.width,
          config_.height, config_.channels, config_.master_seed);
      save_dataset(bundle, dir.string());
      mark_done(dir, key);
      bundle_ = std::move(bundle);
    } else {
      bundle_ = load_dataset(dir.string());
    }
    auto [train, test] = split_holdout(bundle_->private_split.images,
                                       config_.samples_per_identity,
                                       config_.test_holdout);
    train_split_ = std::move(train);
    test_split_ = std::move(test);
    resolved_policy_ = resolve_policy(config_.policy);
    resolved_attack_ = config_.attack;
    resolved_attack_.seed = derive_seed(config_.master_seed, detail::kSeedAttack);
    if (resolved_attack_.adaptive)
      resolved_attack_.adaptive_policy = resolve_policy(resolved_attack_.adaptive_policy);
    return *bundle_;
  }

  const ImageBatch& train_split() {
    ensure_dataset();
    return train_split_;
  }
  const ImageBatch& test_split() {
    ensure_dataset();
    return test_split_;
  }
  const ErasePolicy& resolved_policy() {
    ensure_dataset();
    return resolved_policy_;
  }

  const Model<float>& ensure_eval() {
    if (eval_) return *eval_;
    ensure_dataset();
    TrainConfig tc;
    tc.epochs = config_.eval_epochs;
    tc.batch_size = config_.batch_size;
    tc.learning_rate = config_.eval_lr;
    eval_ = ensure_classifier(
        "eval", arch::classifier_eval(config_.channels, config_.height,
                                      config_.width, config_.num_identities),
        ErasePolicy::no_defense(), tc,
        derive_seed(config_.master_seed, detail::kSeedEval));
    return *eval_;
  }

  const Model<float>& ensure_target() {
    if (target_) return *target_;
    ensure_dataset();
    TrainConfig tc;
    tc.epochs = config_.target_epochs;
    tc.batch_size = config_.batch_size;
    tc.learning_rate = config_.target_lr;
    tc.epoch_budget_fraction = config_.epoch_budget_fraction;
    target_ = ensure_classifier(
        "target", arch::classifier_small(config_.channels, config_.height,
                                         config_.width, config_.num_identities),
        resolved_policy_, tc,
        derive_seed(config_.master_seed, detail::kSeedTarget));
    return *target_;
  }

  const Model<float>& ensure_decoder() {
    if (decoder_) return *decoder_;
    ensure_dataset();
    const std::uint64_t seed = derive_seed(config_.master_seed, detail::kSeedDecoder);
    const std::string key = stage_key("decoder", decoder_desc());
    const auto dir = cache_entry("decoder", key);
    const auto ckpt = dir / "model.ckpt";
    if (cache_hit(dir)) {
      decoder_ = load_model<float>(ckpt.string());
    } else {
      TrainConfig tc;
      tc.epochs = config_.decoder_epochs;
      tc.batch_size = config_.batch_size;
      tc.learning_rate = config_.decoder_lr;
      tc.latent_reg = config_.decoder_latent_reg;
      decoder_ = train_decoder<float>(
          bundle_->public_split.images,
          arch::decoder(config_.latent_dim, config_.channels, config_.height,
                        config_.width),
          tc, seed);
      save_model(*decoder_, ckpt.string());
      mark_done(dir, key);
    }
    export_file(ckpt, "decoder.ckpt", "decoder");
    return *decoder_;
  }

  const AttackResult& ensure_attack() {
    if (attack_result_) return *attack_result_;
    ensure_target();
    ensure_decoder();
    const std::string key = stage_key("attack", attack_desc());
    const auto dir = cache_entry("attack", key);
    if (cache_hit(dir)) {
      attack_result_ = load_reconstructions(dir);
    } else {
      std::vector<std::uint32_t> labels(config_.num_identities);
      for (int i = 0; i < config_.num_identities; ++i)
        labels[i] = static_cast<std::uint32_t>(i);
      attack_result_ = attack_all(*target_, &*decoder_, labels, resolved_attack_,
                                  config_.attack_samples_per_identity, config_.jobs);
      save_reconstructions(*attack_result_, dir);
      mark_done(dir, key);
    }
    export_file(dir / "images.bin", "recon/images.bin", "attack");
    export_file(dir / "meta.json", "recon/meta.json", "attack");
    return *attack_result_;
  }

  /// Paper protocol: features of private, masked-private and reconstructed
  /// images through the target model, shared projection, hull IoU.
  const OverlapReport& ensure_featspace() {
    if (overlap_) return *overlap_;
    ensure_attack();
    const ImageBatch recon = reconstructions_to_batch(
        *attack_result_, config_.channels, config_.height, config_.width);
    // masked-private images need an actual masking scheme even when the
    // target itself is undefended
    ErasePolicy re_policy = resolved_policy_;
    if (re_policy.scheme != EraseScheme::kRandomErase &&
        re_policy.scheme != EraseScheme::kFixedErase) {
      re_policy = resolve_policy(
          ErasePolicy::random_erase(0.4, 0.4, FillStrategy::channel_mean({})));
    }
    std::vector<std::uint32_t> identities;
    for (int i = 0; i < std::min(config_.featspace_identities, config_.num_identities); ++i)
      identities.push_back(static_cast<std::uint32_t>(i));
    overlap_ = overlap_report(*target_, bundle_->private_split.images, re_policy,
                              recon, identities,
                              derive_seed(config_.master_seed, detail::kSeedFeatspace));
    detail::write_json(out_path("featspace.json"), overlap_to_json(*overlap_));
    record_out("featspace.json", "featspace");
    detail::write_text(out_path("projection.csv"), projection_csv(overlap_->projection));
    record_out("projection.csv", "featspace");
    return *overlap_;
  }

  MetricsReport compute_metrics() {
    ensure_attack();
    ensure_eval();
    const ImageBatch recon = reconstructions_to_batch(
        *attack_result_, config_.channels, config_.height, config_.width);

    MetricsReport report;
    report.acc = accuracy(*target_, test_split_);
    const AttackAccuracy att = attack_accuracy(*eval_, recon);
    report.att_acc = att.value;
    report.att_acc_ci = att.ci_half_width;
    report.knn_dist = knn_distance(*eval_, recon, bundle_->private_split.images);
    const FeatureSet f_recon = extract_features(*eval_, recon);
    const FeatureSet f_priv = extract_features(*eval_, bundle_->private_split.images);
    report.ffd = frechet_feature_distance(f_recon, f_priv);

    if (config_.featspace_enabled) {
      const OverlapReport& overlap = ensure_featspace();
      report.hull_iou_recon_priv = overlap.pooled.recon_priv;
      report.hull_iou_recon_re = overlap.pooled.recon_re;
      report.hull_iou_re_priv = overlap.pooled.re_priv;
    }

    report.delta = baseline_delta(report);
    report.provenance = provenance();
    detail::write_json(out_path("metrics.json"), metrics_to_json(report));
    record_out("metrics.json", "metrics");
    return report;
  }

  /// Full chain. Writes the manifest last; on failure the manifest still
  /// appears, carrying the failing stage and whatever was produced.
  MetricsReport run() {
    try {
      detail::write_json(out_path("config.json"), experiment_to_json(config_));
      record_out("config.json", "config");
      ensure_dataset();
      ensure_eval();
      ensure_target();
      ensure_decoder();
      ensure_attack();
      if (config_.featspace_enabled) ensure_featspace();
      const MetricsReport report = compute_metrics();
      write_manifest("ok", "");
      return report;
    } catch (...) {
      write_manifest("failed", current_stage_);
      throw;
    }
  }

  std::filesystem::path out_path(const std::string& name) const {
    return std::filesystem::path(config_.out_dir) / name;
  }

  /// Writes the manifest for a partial (stage-by-stage) invocation.
  void finalize() { write_manifest("ok", ""); }

private:
  ErasePolicy resolve_policy(ErasePolicy policy) const {
    if (policy.fill.kind == FillKind::kChannelMean &&
        policy.fill.channel_means.empty())
      policy.fill.channel_means = channel_means(train_split_);
    policy.validate();
    return policy;
  }

  std::string dataset_key() const {
    nlohmann::json desc;
    desc["num_identities"] = config_.num_identities;
    desc["samples_per_identity"] = config_.samples_per_identity;
    desc["width"] = config_.width;
    desc["height"] = config_.height;
    desc["channels"] = config_.channels;
    desc["seed"] = config_.master_seed;
    return hex64(fnv1a64("dataset:" + desc.dump()));
  }

  std::string stage_key(const std::string& stage, const nlohmann::json& desc) {
    const std::string key = hex64(fnv1a64(stage + ":" + desc.dump()));
    stage_keys_[stage] = key;
    return key;
  }

  std::filesystem::path cache_entry(const std::string& stage, const std::string& key) {
    current_stage_ = stage;
    const auto dir = std::filesystem::path(config_.cache_path()) / (stage + "-" + key);
    std::filesystem::create_directories(dir);
    return dir;
  }

  static bool cache_hit(const std::filesystem::path& dir) {
    return std::filesystem::exists(dir / "stage.json");
  }

  static void mark_done(const std::filesystem::path& dir, const std::string& key) {
    detail::write_json(dir / "stage.json", {{"key", key}});
  }

  Model<float> ensure_classifier(const std::string& stage, const ArchSpec& arch,
                                 const ErasePolicy& policy, const TrainConfig& tc,
                                 std::uint64_t seed) {
    const std::string key =
        stage_key(stage, classifier_desc(arch, policy, tc, seed));
    const auto dir = cache_entry(stage, key);
    const auto ckpt = dir / "model.ckpt";
    Model<float> model;
    if (cache_hit(dir)) {
      model = load_model<float>(ckpt.string());
    } else {
      model = train_classifier(build_model<float>(arch, seed), train_split_,
                               test_split_, policy, tc, seed);
      save_model(model, ckpt.string());
      mark_done(dir, key);
    }
    export_file(ckpt, stage + ".ckpt", stage);
    return model;
  }

  void save_reconstructions(const AttackResult& result,
                            const std::filesystem::path& dir) const {
    const ImageBatch batch = reconstructions_to_batch(
        result, config_.channels, config_.height, config_.width);
    std::ofstream bin(dir / "images.bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw IoError("cannot write reconstructions");
    bin.write(reinterpret_cast<const char*>(batch.data.data()),
              static_cast<std::streamsize>(batch.data.size() * sizeof(float)));
    nlohmann::json meta;
    meta["config_hash"] = result.config_hash;
    meta["target_id"] = result.target_id;
    meta["width"] = config_.width;
    meta["height"] = config_.height;
    meta["channels"] = config_.channels;
    nlohmann::json items = nlohmann::json::array();
    for (const auto& item : result.items)
      items.push_back({{"label", item.label},
                       {"sample_index", item.sample_index},
                       {"restart", item.selected_restart},
                       {"confidence", item.confidence}});
    meta["items"] = items;
    nlohmann::json failed = nlohmann::json::array();
    for (auto label : result.failed_labels) failed.push_back(label);
    meta["failed_labels"] = failed;
    detail::write_json(dir / "meta.json", meta);
  }

  AttackResult load_reconstructions(const std::filesystem::path& dir) const {
    std::ifstream meta_in(dir / "meta.json");
    if (!meta_in) throw FormatError("missing reconstruction meta.json");
    nlohmann::json meta;
    meta_in >> meta;
    AttackResult result;
    result.config_hash = meta.at("config_hash").get<std::string>();
    result.target_id = meta.at("target_id").get<std::string>();
    const std::size_t dim = static_cast<std::size_t>(config_.channels) *
                            config_.height * config_.width;
    std::ifstream bin(dir / "images.bin", std::ios::binary);
    if (!bin) throw FormatError("missing reconstruction images.bin");
    for (const auto& item : meta.at("items")) {
      IdentityReconstruction recon;
      recon.label = item.at("label").get<std::uint32_t>();
      recon.sample_index = item.at("sample_index").get<int>();
      recon.selected_restart = item.at("restart").get<int>();
      recon.confidence = item.at("confidence").get<double>();
      recon.image.resize(dim);
      bin.read(reinterpret_cast<char*>(recon.image.data()),
               static_cast<std::streamsize>(dim * sizeof(float)));
      if (!bin) throw FormatError("truncated reconstruction images.bin");
      result.items.push_back(std::move(recon));
    }
    for (const auto& label : meta.at("failed_labels"))
      result.failed_labels.push_back(label.get<std::uint32_t>());
    return result;
  }

  /// Delta needs a no-defense twin with the same seed. It is looked up in
  /// the cache and computed only when already available (as in sweeps, where
  /// the 0-value cell runs first); otherwise delta stays null.
  DeltaResult baseline_delta(const MetricsReport& defended) {
    if (resolved_policy_.scheme == EraseScheme::kNoDefense && !resolved_attack_.adaptive)
      return DeltaResult{};
    ExperimentConfig twin = config_;
    twin.policy = ErasePolicy::no_defense();
    twin.attack.adaptive = false;
    // scratch exports only; the probe must not leave files in this cell's
    // output tree, whose manifest accounts for everything
    twin.out_dir = config_.cache_path() + "/baseline-probe";
    twin.cache_dir = config_.cache_path();
    Pipeline probe(twin);
    probe.ensure_dataset();
    if (!probe.stages_cached({"target", "eval", "attack"})) return DeltaResult{};
    probe.ensure_attack();
    probe.ensure_eval();
    const ImageBatch base_recon = reconstructions_to_batch(
        *probe.attack_result_, twin.channels, twin.height, twin.width);
    const double base_acc = accuracy(*probe.target_, probe.test_split_);
    const double base_att = attack_accuracy(*probe.eval_, base_recon).value;
    return tradeoff_delta(base_acc * 100.0, base_att * 100.0,
                          defended.acc * 100.0, defended.att_acc * 100.0);
  }

  // stage input descriptors, shared by the ensure_*() implementations and the
  // dry cache probe so the keys can never drift apart
  nlohmann::json classifier_desc(const ArchSpec& arch, const ErasePolicy& policy,
                                 const TrainConfig& tc, std::uint64_t seed) const {
    nlohmann::json desc;
    desc["dataset"] = dataset_key();
    desc["holdout"] = config_.test_holdout;
    desc["arch"] = arch_to_json(arch);
    desc["policy"] = policy_to_json(policy);
    desc["epochs"] = tc.epochs;
    desc["batch_size"] = tc.batch_size;
    desc["learning_rate"] = tc.learning_rate;
    desc["budget"] = tc.epoch_budget_fraction;
    desc["seed"] = seed;
    return desc;
  }

  nlohmann::json target_desc() const {
    TrainConfig tc;
    tc.epochs = config_.target_epochs;
    tc.batch_size = config_.batch_size;
    tc.learning_rate = config_.target_lr;
    tc.epoch_budget_fraction = config_.epoch_budget_fraction;
    return classifier_desc(
        arch::classifier_small(config_.channels, config_.height, config_.width,
                               config_.num_identities),
        resolved_policy_, tc, derive_seed(config_.master_seed, detail::kSeedTarget));
  }

  nlohmann::json eval_desc() const {
    TrainConfig tc;
    tc.epochs = config_.eval_epochs;
    tc.batch_size = config_.batch_size;
    tc.learning_rate = config_.eval_lr;
    return classifier_desc(
        arch::classifier_eval(config_.channels, config_.height, config_.width,
                              config_.num_identities),
        ErasePolicy::no_defense(), tc,
        derive_seed(config_.master_seed, detail::kSeedEval));
  }

  nlohmann::json decoder_desc() const {
    nlohmann::json desc;
    desc["dataset"] = dataset_key();
    desc["epochs"] = config_.decoder_epochs;
    desc["learning_rate"] = config_.decoder_lr;
    desc["latent_reg"] = config_.decoder_latent_reg;
    desc["latent_dim"] = config_.latent_dim;
    desc["batch_size"] = config_.batch_size;
    desc["seed"] = derive_seed(config_.master_seed, detail::kSeedDecoder);
    return desc;
  }

  nlohmann::json attack_desc() {
    nlohmann::json desc;
    desc["target"] = stage_key("target", target_desc());
    desc["decoder"] = stage_key("decoder", decoder_desc());
    desc["attack"] = attack_config_to_json(resolved_attack_);
    desc["samples_per_identity"] = config_.attack_samples_per_identity;
    return desc;
  }

  bool stages_cached(const std::vector<std::string>& stages) {
    ensure_dataset();
    for (const auto& stage : stages) {
      std::string key;
      if (stage == "target") key = stage_key("target", target_desc());
      else if (stage == "eval") key = stage_key("eval", eval_desc());
      else if (stage == "attack") key = stage_key("attack", attack_desc());
      const auto dir = std::filesystem::path(config_.cache_path()) / (stage + "-" + key);
      if (!cache_hit(dir)) return false;
    }
    return true;
  }

  nlohmann::json provenance() const {
    nlohmann::json p;
    p["config_hash"] = experiment_hash(config_);
    p["dataset"] = stage_keys_.count("dataset") ? stage_keys_.at("dataset") : dataset_key();
    for (const char* stage : {"target", "eval", "decoder", "attack"})
      if (stage_keys_.count(stage)) p[stage] = stage_keys_.at(stage);
    if (attack_result_) {
      p["attack_config_hash"] = attack_result_->config_hash;
      p["target_id"] = attack_result_->target_id;
      nlohmann::json failed = nlohmann::json::array();
      for (auto label : attack_result_->failed_labels) failed.push_back(label);
      p["failed_labels"] = failed;
    }
    p["featspace_enabled"] = config_.featspace_enabled;
    return p;
  }

  void export_file(const std::filesystem::path& src, const std::string& rel,
                   const std::string& stage) {
    const auto dst = out_path(rel);
    std::filesystem::create_directories(dst.parent_path());
    std::filesystem::copy_file(src, dst,
                               std::filesystem::copy_options::overwrite_existing);
    record_out(rel, stage);
  }

  void record_out(const std::string& rel, const std::string& stage) {
    for (auto& entry : manifest_entries_)
      if (entry["path"] == rel) {
        entry["hash"] = hash_file_hex(out_path(rel).string());
        entry["stage"] = stage;
        return;
      }
    manifest_entries_.push_back({{"path", rel},
                                 {"hash", hash_file_hex(out_path(rel).string())},
                                 {"stage", stage}});
  }

  void write_manifest(const std::string& status, const std::string& failed_stage) {
    nlohmann::json manifest;
    manifest["status"] = status;
    if (!failed_stage.empty()) manifest["failed_stage"] = failed_stage;
    manifest["config_hash"] = experiment_hash(config_);
    std::sort(manifest_entries_.begin(), manifest_entries_.end(),
              [](const nlohmann::json& a, const nlohmann::json& b) {
                return a["path"].get<std::string>() < b["path"].get<std::string>();
              });
    manifest["files"] = manifest_entries_;
    detail::write_json(out_path("manifest.json"), manifest);
  }

  ExperimentConfig config_;
  std::optional<DatasetBundle> bundle_;
  ImageBatch train_split_, test_split_;
  ErasePolicy resolved_policy_;
  AttackConfig resolved_attack_;
  std::optional<Model<float>> eval_, target_, decoder_;
  std::optional<AttackResult> attack_result_;
  std::optional<OverlapReport> overlap_;
  std::map<std::string, std::string> stage_keys_;
  std::vector<nlohmann::json> manifest_entries_;
  std::string current_stage_ = "config";
};

/// Convenience wrapper for the one-shot full chain.
inline MetricsReport run_pipeline(const ExperimentConfig& config) {
  Pipeline pipeline(config);
  return pipeline.run();
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow {
  std::string scheme;
  double value = 0.0;  // a_h point value, or concealment level
  std::uint64_t seed = 0;
  MetricsReport metrics;
};

struct SweepVerdict {
  std::vector<double> values;
  std::vector<double> median_att_acc;  // percent
  std::vector<double> median_acc;      // percent
  bool strictly_decreasing_att_acc = false;
  double att_acc_drop = 0.0;  // percent points, first value to last
  double acc_drop = 0.0;      // percent points, first value to last
};

struct SweepResult {
  std::vector<SweepRow> rows;
  SweepVerdict verdict;
};

namespace detail {

inline double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n == 0) return 0.0;
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

inline std::string sweep_csv_header() {
  return "scheme,a_h,seed,acc,att_acc,att_acc_ci,knn_dist,ffd,delta,"
         "hull_iou_recon_priv,hull_iou_recon_re,hull_iou_re_priv\n";
}

inline std::string sweep_csv_row(const SweepRow& row) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%s,%.6g,%llu,%.6f,%.6f,%.6f,%.6f,%.6f,%s,%.6f,%.6f,%.6f\n",
                row.scheme.c_str(), row.value,
                static_cast<unsigned long long>(row.seed), row.metrics.acc,
                row.metrics.att_acc, row.metrics.att_acc_ci, row.metrics.knn_dist,
                row.metrics.ffd, render_delta(row.metrics.delta).c_str(),
                row.metrics.hull_iou_recon_priv, row.metrics.hull_iou_recon_re,
                row.metrics.hull_iou_re_priv);
  return buf;
}

}  // namespace detail

/// Privacy-utility sweep: one cell per (erased-area value, repeat). Values
/// are point erasure fractions by default (`point_mode`), or [0.1, v]
/// training ranges when `point_mode` is false. Value 0 is the no-defense
/// baseline. Cell failures are recorded and skipped; the sweep continues.
inline SweepResult sweep_ae(const ExperimentConfig& base,
                            const std::vector<double>& values, int repeats,
                            bool point_mode = true) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  for (double v : values)
    if (v < 0.0 || v > 1.0) throw ConfigError("sweep values must lie in [0,1]");

  SweepResult result;
  std::vector<std::string> failures;
  for (double value : values) {
    for (int rep = 0; rep < repeats; ++rep) {
      ExperimentConfig cell = base;
      cell.repeats = 1;
      if (value <= 0.0) {
        cell.policy = ErasePolicy::no_defense();
      } else {
        cell.policy = ErasePolicy::random_erase(point_mode ? value : 0.1, value,
                                                FillStrategy::channel_mean({}));
      }
      cell.master_seed = derive_seed(base.master_seed, static_cast<std::uint64_t>(rep));
      char cell_name[64];
      std::snprintf(cell_name, sizeof(cell_name), "cell-a%.3f-r%d", value, rep);
      cell.out_dir = base.out_dir + "/" + cell_name;
      cell.cache_dir = base.cache_path();
      SweepRow row;
      row.scheme = value <= 0.0 ? "no_defense" : "random_erase";
      row.value = value;
      row.seed = cell.master_seed;
      try {
        row.metrics = run_pipeline(cell);
        result.rows.push_back(row);
      } catch (const Error& e) {
        failures.push_back(std::string(cell_name) + ": " + e.what());
      }
    }
  }

  result.verdict.values = values;
  for (double value : values) {
    std::vector<double> att, acc;
    for (const auto& row : result.rows)
      if (row.value == value) {
        att.push_back(row.metrics.att_acc * 100.0);
        acc.push_back(row.metrics.acc * 100.0);
      }
    result.verdict.median_att_acc.push_back(detail::median(att));
    result.verdict.median_acc.push_back(detail::median(acc));
  }
  result.verdict.strictly_decreasing_att_acc = true;
  for (std::size_t i = 1; i < result.verdict.median_att_acc.size(); ++i)
    if (result.verdict.median_att_acc[i] >= result.verdict.median_att_acc[i - 1])
      result.verdict.strictly_decreasing_att_acc = false;
  if (!result.verdict.median_att_acc.empty()) {
    result.verdict.att_acc_drop = result.verdict.median_att_acc.front() -
                                  result.verdict.median_att_acc.back();
    result.verdict.acc_drop =
        result.verdict.median_acc.front() - result.verdict.median_acc.back();
  }

  std::string csv = detail::sweep_csv_header();
  for (const auto& row : result.rows) csv += detail::sweep_csv_row(row);
  detail::write_text(std::filesystem::path(base.out_dir) / "summary.csv", csv);

  nlohmann::json verdict;
  verdict["values"] = result.verdict.values;
  verdict["median_att_acc"] = result.verdict.median_att_acc;
  verdict["median_acc"] = result.verdict.median_acc;
  verdict["strictly_decreasing_att_acc"] = result.verdict.strictly_decreasing_att_acc;
  verdict["att_acc_drop"] = result.verdict.att_acc_drop;
  verdict["acc_drop"] = result.verdict.acc_drop;
  verdict["failures"] = failures;
  detail::write_json(std::filesystem::path(base.out_dir) / "sweep.json", verdict);
  return result;
}

struct SchemeVerdict {
  double level = 0.0;
  double median_att_acc_re = 0.0, median_att_acc_fe = 0.0, median_att_acc_ee = 0.0;
  double median_acc_re = 0.0, median_acc_fe = 0.0, median_acc_ee = 0.0;
};

struct SchemeComparison {
  std::vector<SweepRow> rows;
  std::vector<SchemeVerdict> verdicts;  // one per concealment level
};

/// Compares random / fixed / entire erasing at matched pixel-concealment
/// levels. Level c maps to a point erased-area fraction for
/// RE and FE and to an erased-sample fraction for EE; level 0 reduces every
/// scheme to the no-defense baseline.
inline SchemeComparison compare_schemes(const ExperimentConfig& base,
                                        const std::vector<double>& levels,
                                        int repeats) {
  if (levels.empty()) throw ConfigError("compare_schemes needs levels");
  SchemeComparison result;
  std::vector<std::string> failures;
  const std::vector<EraseScheme> schemes = {
      EraseScheme::kRandomErase, EraseScheme::kFixedErase, EraseScheme::kEntireErase};

  for (double level : levels) {
    if (level < 0.0 || level > 1.0)
      throw ConfigError("concealment level outside [0,1]");
    for (EraseScheme scheme : schemes) {
      for (int rep = 0; rep < repeats; ++rep) {
        ExperimentConfig cell = base;
        cell.repeats = 1;
        if (level <= 0.0) {
          cell.policy = ErasePolicy::no_defense();
        } else if (scheme == EraseScheme::kEntireErase) {
          cell.policy.scheme = EraseScheme::kEntireErase;
          cell.policy.ee_fraction = level;
          cell.policy.fill = FillStrategy::channel_mean({});
        } else {
          cell.policy = ErasePolicy::random_erase(level, level,
                                                  FillStrategy::channel_mean({}));
          cell.policy.scheme = scheme;
        }
        cell.master_seed = derive_seed(base.master_seed, static_cast<std::uint64_t>(rep));
        char cell_name[96];
        std::snprintf(cell_name, sizeof(cell_name), "cell-%s-c%.3f-r%d",
                      to_string(level <= 0.0 ? EraseScheme::kNoDefense : scheme).c_str(),
                      level, rep);
        cell.out_dir = base.out_dir + "/" + cell_name;
        cell.cache_dir = base.cache_path();
        SweepRow row;
        row.scheme = to_string(level <= 0.0 ? EraseScheme::kNoDefense : scheme);
        row.value = level;
        row.seed = cell.master_seed;
        try {
          row.metrics = run_pipeline(cell);
          result.rows.push_back(row);
        } catch (const Error& e) {
          failures.push_back(std::string(cell_name) + ": " + e.what());
        }
      }
    }
  }

  for (double level : levels) {
    SchemeVerdict verdict;
    verdict.level = level;
    auto med = [&](EraseScheme scheme, bool att) {
      std::vector<double> values;
      const std::string name =
          to_string(level <= 0.0 ? EraseScheme::kNoDefense : scheme);
      for (const auto& row : result.rows)
        if (row.value == level && row.scheme == name)
          values.push_back((att ? row.metrics.att_acc : row.metrics.acc) * 100.0);
      return detail::median(values);
    };
    verdict.median_att_acc_re = med(EraseScheme::kRandomErase, true);
    verdict.median_att_acc_fe = med(EraseScheme::kFixedErase, true);
    verdict.median_att_acc_ee = med(EraseScheme::kEntireErase, true);
    verdict.median_acc_re = med(EraseScheme::kRandomErase, false);
    verdict.median_acc_fe = med(EraseScheme::kFixedErase, false);
    verdict.median_acc_ee = med(EraseScheme::kEntireErase, false);
    result.verdicts.push_back(verdict);
  }

  std::string csv = "scheme,concealment,seed,acc,att_acc\n";
  for (const auto& row : result.rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%.6g,%llu,%.6f,%.6f\n", row.scheme.c_str(),
                  row.value, static_cast<unsigned long long>(row.seed),
                  row.metrics.acc, row.metrics.att_acc);
    csv += buf;
  }
  detail::write_text(std::filesystem::path(base.out_dir) / "schemes.csv", csv);

  nlohmann::json j = nlohmann::json::array();
  for (const auto& verdict : result.verdicts)
    j.push_back({{"level", verdict.level},
                 {"median_att_acc_re", verdict.median_att_acc_re},
                 {"median_att_acc_fe", verdict.median_att_acc_fe},
                 {"median_att_acc_ee", verdict.median_att_acc_ee},
                 {"median_acc_re", verdict.median_acc_re},
                 {"median_acc_fe", verdict.median_acc_fe},
                 {"median_acc_ee", verdict.median_acc_ee}});
  detail::write_json(std::filesystem::path(base.out_dir) / "schemes.json",
                     {{"levels", j}, {"failures", failures}});
  return result;
}

}  // namespace milab

#endif  // MILAB_PIPELINE_HPP_
