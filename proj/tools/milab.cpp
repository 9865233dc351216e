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

// milab command-line front end: config-driven model-inversion experiments.
//
//   milab gen-data --config cfg.json --out data/
//   milab train    --config cfg.json --out runs/exp
//   milab attack   --config cfg.json --out runs/exp --jobs 2
//   milab eval     --config cfg.json --out runs/exp
//   milab analyze  --config cfg.json --out runs/exp
//   milab sweep    --config cfg.json --values 0,0.2,0.5 --repeats 3
//   milab compare-schemes --config cfg.json --levels 0.4 --repeats 3
//   milab report   --in runs/exp
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "milab/config.hpp"
#include "milab/dataset.hpp"
#include "milab/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int jobs = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config file (JSON)");
  cmd->add_option("--set", args.sets, "override 'key.path=value' (repeatable)");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "master seed")->each([&](const std::string&) {
    args.seed_given = true;
  });
  cmd->add_option("--jobs", args.jobs, "parallel jobs");
}

milab::ExperimentConfig materialize(const CommonArgs& args) {
  milab::ExperimentConfig config =
      milab::load_experiment_config(args.config_path, args.sets);
  if (!args.out_dir.empty()) config.out_dir = args.out_dir;
  if (args.seed_given) config.master_seed = args.seed;
  if (args.jobs > 0) config.jobs = args.jobs;
  config.validate();
  return config;
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> values;
  std::stringstream stream(csv);
  std::string token;
  while (std::getline(stream, token, ','))
    if (!token.empty()) values.push_back(std::stod(token));
  return values;
}

void print_metrics(const milab::MetricsReport& report) {
  std::printf("%-22s %10.4f\n", "acc", report.acc);
  std::printf("%-22s %10.4f (+/- %.4f)\n", "att_acc", report.att_acc,
              report.att_acc_ci);
  std::printf("%-22s %10.4f\n", "knn_dist", report.knn_dist);
  std::printf("%-22s %10s\n", "delta", milab::render_delta(report.delta).c_str());
  std::printf("%-22s %10.4f\n", "ffd", report.ffd);
  std::printf("%-22s %10.4f\n", "hull_iou_recon_priv", report.hull_iou_recon_priv);
  std::printf("%-22s %10.4f\n", "hull_iou_recon_re", report.hull_iou_recon_re);
  std::printf("%-22s %10.4f\n", "hull_iou_re_priv", report.hull_iou_re_priv);
}

// report rendering ----------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw milab::IoError("cannot open " + path.string());
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream stream(line);
    std::string cell;
    while (std::getline(stream, cell, ',')) cells.push_back(cell);
    if (first) {
      table.header = cells;
      first = false;
    } else {
      table.rows.push_back(cells);
    }
  }
  return table;
}

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n == 0) return 0.0;
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

int render_report(const std::string& in_dir) {
  namespace fs = std::filesystem;
  const fs::path dir(in_dir);
  bool rendered = false;

  if (fs::exists(dir / "metrics.json")) {
    std::ifstream in(dir / "metrics.json");
    nlohmann::json j;
    in >> j;
    std::printf("metrics (%s)\n", (dir / "metrics.json").string().c_str());
    for (const char* key : {"acc", "att_acc", "att_acc_ci", "knn_dist", "ffd",
                            "hull_iou_recon_priv", "hull_iou_recon_re",
                            "hull_iou_re_priv"})
      std::printf("  %-22s %10.4f\n", key, j.at(key).get<double>());
    if (j.at("delta").is_null())
      std::printf("  %-22s %10s\n", "delta", "OP");
    else
      std::printf("  %-22s %10.4f\n", "delta", j.at("delta").get<double>());
    rendered = true;
  }

  for (const char* name : {"summary.csv", "schemes.csv"}) {
    if (!fs::exists(dir / name)) continue;
    const CsvTable table = read_csv(dir / name);
    // group rows by (scheme, value) and report median acc / att_acc
    std::map<std::pair<std::string, std::string>,
             std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const auto& row : table.rows) {
      const auto key = std::make_pair(row[0], row[1]);
      groups[key].first.push_back(std::stod(row[3]));
      groups[key].second.push_back(std::stod(row[4]));
    }
    std::printf("\n%s (%zu rows)\n", name, table.rows.size());
    std::printf("  %-14s %-8s %12s %12s\n", "scheme", table.header[1].c_str(),
                "median_acc", "median_attacc");
    std::string plot_csv = "scheme," + table.header[1] + ",median_acc,median_att_acc\n";
    for (const auto& [key, accs] : groups) {
      const double med_acc = median_of(accs.first);
      const double med_att = median_of(accs.second);
      std::printf("  %-14s %-8s %12.4f %12.4f\n", key.first.c_str(),
                  key.second.c_str(), med_acc, med_att);
      plot_csv += key.first + "," + key.second + "," + std::to_string(med_acc) +
                  "," + std::to_string(med_att) + "\n";
    }
    std::ofstream out(dir / "report.csv");
    out << plot_csv;
    std::printf("  -> %s\n", (dir / "report.csv").string().c_str());
    rendered = true;
  }

  if (!rendered) {
    std::fprintf(stderr, "nothing to report in %s\n", in_dir.c_str());
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"model-inversion attack/defense laboratory"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string values_csv = "0,0.2,0.5";
  std::string levels_csv = "0.4";
  int repeats = 0;
  bool range_mode = false;
  std::string report_dir = ".";

  CLI::App* gen_data = app.add_subcommand("gen-data", "generate the dataset");
  add_common(gen_data, args);
  CLI::App* train = app.add_subcommand("train", "train evaluation/target/decoder models");
  add_common(train, args);
  CLI::App* attack = app.add_subcommand("attack", "run the inversion attack");
  add_common(attack, args);
  CLI::App* eval_cmd = app.add_subcommand("eval", "compute metrics.json");
  add_common(eval_cmd, args);
  CLI::App* analyze = app.add_subcommand("analyze", "feature-space hull analysis");
  add_common(analyze, args);
  CLI::App* sweep = app.add_subcommand("sweep", "erased-area sweep");
  add_common(sweep, args);
  sweep->add_option("--values", values_csv, "comma-separated erased-area values");
  sweep->add_option("--repeats", repeats, "seeds per cell");
  sweep->add_flag("--range-mode", range_mode,
                  "train with ranges [0.1, v] instead of point values");
  CLI::App* schemes = app.add_subcommand("compare-schemes",
                                         "random/fixed/entire erasing comparison");
  add_common(schemes, args);
  schemes->add_option("--levels", levels_csv, "comma-separated concealment levels");
  schemes->add_option("--repeats", repeats, "seeds per cell");
  CLI::App* report = app.add_subcommand("report", "render metrics/summary tables");
  report->add_option("--in", report_dir, "directory with metrics.json or summary.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) return render_report(report_dir);

    milab::ExperimentConfig config = materialize(args);

    if (gen_data->parsed()) {
      const milab::DatasetBundle bundle = milab::generate_synthfaces(
          config.num_identities, config.samples_per_identity, config.width,
          config.height, config.channels, config.master_seed);
      milab::save_dataset(bundle, config.out_dir);
      std::printf("dataset written to %s (private + public, %d identities x %d)\n",
                  config.out_dir.c_str(), config.num_identities,
                  config.samples_per_identity);
      return 0;
    }
    if (train->parsed()) {
      milab::Pipeline pipeline(config);
      pipeline.ensure_eval();
      const auto& target = pipeline.ensure_target();
      pipeline.ensure_decoder();
      pipeline.finalize();
      std::printf("trained: target acc=%.4f (checkpoints under %s)\n",
                  target.history.empty() ? 0.0 : target.history.back().test_acc,
                  config.out_dir.c_str());
      return 0;
    }
    if (attack->parsed()) {
      milab::Pipeline pipeline(config);
      const auto& result = pipeline.ensure_attack();
      pipeline.finalize();
      std::printf("attack: %zu reconstructions, %zu failed labels -> %s/recon\n",
                  result.items.size(), result.failed_labels.size(),
                  config.out_dir.c_str());
      return 0;
    }
    if (eval_cmd->parsed()) {
      milab::Pipeline pipeline(config);
      const milab::MetricsReport report_out = pipeline.compute_metrics();
      pipeline.finalize();
      print_metrics(report_out);
      return 0;
    }
    if (analyze->parsed()) {
      milab::Pipeline pipeline(config);
      const auto& overlap = pipeline.ensure_featspace();
      pipeline.finalize();
      std::printf("pooled hull IoU: recon/priv=%.4f recon/re=%.4f re/priv=%.4f\n",
                  overlap.pooled.recon_priv, overlap.pooled.recon_re,
                  overlap.pooled.re_priv);
      return 0;
    }
    if (sweep->parsed()) {
      const auto values = parse_values(values_csv);
      const int reps = repeats > 0 ? repeats : config.repeats;
      const milab::SweepResult result =
          milab::sweep_ae(config, values, reps, !range_mode);
      std::printf("sweep: %zu rows -> %s/summary.csv\n", result.rows.size(),
                  config.out_dir.c_str());
      for (std::size_t i = 0; i < result.verdict.values.size(); ++i)
        std::printf("  a=%.3g median acc=%.2f%% att_acc=%.2f%%\n",
                    result.verdict.values[i], result.verdict.median_acc[i],
                    result.verdict.median_att_acc[i]);
      std::printf("  att_acc strictly decreasing: %s, drop %.2f pts (acc drop %.2f)\n",
                  result.verdict.strictly_decreasing_att_acc ? "yes" : "no",
                  result.verdict.att_acc_drop, result.verdict.acc_drop);
      return 0;
    }
    if (schemes->parsed()) {
      const auto levels = parse_values(levels_csv);
      const int reps = repeats > 0 ? repeats : config.repeats;
      const milab::SchemeComparison result =
          milab::compare_schemes(config, levels, reps);
      std::printf("compare-schemes: %zu rows -> %s/schemes.csv\n",
                  result.rows.size(), config.out_dir.c_str());
      for (const auto& verdict : result.verdicts)
        std::printf("  c=%.3g  RE acc=%.2f att=%.2f | FE acc=%.2f att=%.2f | EE acc=%.2f att=%.2f\n",
                    verdict.level, verdict.median_acc_re, verdict.median_att_acc_re,
                    verdict.median_acc_fe, verdict.median_att_acc_fe,
                    verdict.median_acc_ee, verdict.median_att_acc_ee);
      return 0;
    }
  } catch (const milab::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
