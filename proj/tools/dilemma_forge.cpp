// Copyright 2026 The Dilemma Forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line entry point: run, validate, compare and plot experiments.
// Exit codes: 0 ok, 2 configuration or usage error, 3 runtime error.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dilemma_forge/config.hpp"
#include "dilemma_forge/error.hpp"
#include "dilemma_forge/harness.hpp"
#include "dilemma_forge/report.hpp"
#include "json.hpp"

#ifndef DILEMMA_FORGE_VERSION
#define DILEMMA_FORGE_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dilemma_forge;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct RunOptions {
  std::string config;
  std::string out;
  bool force = false;
  std::vector<std::string> overrides;
  int jobs = 0;  // 0: fall back to DILEMMA_FORGE_JOBS, then 1
};

int resolve_jobs(int flag) {
  if (flag > 0) return flag;
  const char* env = std::getenv("DILEMMA_FORGE_JOBS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 4096) {
    throw ConfigError("DILEMMA_FORGE_JOBS must be a positive integer, got '" +
                      std::string(env) + "'");
  }
  return static_cast<int>(v);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// A run directory is one this tool created: it holds manifest.json.
void prepare_out_dir(const fs::path& dir, bool force) {
  if (!fs::exists(dir)) {
    fs::create_directories(dir);
    return;
  }
  if (!fs::is_directory(dir)) {
    throw ConfigError("--out " + dir.string() + " exists and is not a directory");
  }
  if (fs::is_empty(dir)) return;
  if (!force) {
    throw ConfigError("--out " + dir.string() +
                      " already exists and is not empty (pass --force to "
                      "replace a previous run)");
  }
  if (!fs::exists(dir / "manifest.json")) {
    throw ConfigError("--force only replaces previous run directories; " +
                      dir.string() + " has no manifest.json");
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    fs::remove_all(entry.path());
  }
}

void save_team(const fs::path& dir, const std::vector<nn::ParamVector>& theta,
               const std::vector<nn::ParamVector>& eta) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const std::string agent = "agent_" + std::to_string(i);
    nn::save_params(theta[i], dir / (agent + "_theta"));
    nn::save_params(eta[i], dir / (agent + "_eta"));
  }
}

json manifest_json(const RunOptions& opt,
                   const harness::ExperimentConfig& config, int jobs,
                   const std::string& status, double wall_seconds) {
  return json{{"tool", "dilemma_forge"},
              {"version", DILEMMA_FORGE_VERSION},
              {"status", status},
              {"name", config.name},
              {"config_file", opt.config},
              {"overrides", opt.overrides},
              {"config_hash", config::hash_hex(config::config_hash(config))},
              {"seeds", config.seeds},
              {"jobs", jobs},
              {"wall_time_seconds", wall_seconds}};
}

int cmd_run(const RunOptions& opt) {
  const auto config = config::load(opt.config, opt.overrides);
  const int jobs = resolve_jobs(opt.jobs);
  const fs::path out(opt.out);
  prepare_out_dir(out, opt.force);
  write_file(out / "config.json", config::canonical_json(config));
  write_file(out / "manifest.json",
             manifest_json(opt, config, jobs, "running", 0.0).dump(2) + "\n");

  harness::CheckpointFn checkpoint;
  if (config.checkpoint_every > 0) {
    checkpoint = [&out](std::uint64_t seed, int iteration,
                        const lio::Team& team) {
      save_team(out / "checkpoints" / ("seed_" + std::to_string(seed)) /
                    ("iter_" + std::to_string(iteration)),
                team.thetas(), [&] {
                  std::vector<nn::ParamVector> eta;
                  for (const auto& a : team.agents) eta.push_back(a.eta);
                  return eta;
                }());
    };
  }
  std::cerr << "running " << config.name << ": " << config.seeds.size()
            << " seeds x " << config.episodes << " episodes, " << jobs
            << " job(s)\n";
  const auto start = std::chrono::steady_clock::now();
  const auto records = harness::run_experiment(config, jobs, checkpoint);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();

  for (const auto& rec : records) {
    const fs::path dir = out / "seeds" / ("seed_" + std::to_string(rec.seed));
    fs::create_directories(dir);
    harness::write_run_csv(rec, dir / "episodes.csv");
    harness::write_iterations_csv(rec, dir / "iterations.csv");
    if (!rec.audits.empty()) harness::write_audit_jsonl(rec, dir / "audit.jsonl");
    save_team(dir / "final", rec.final_theta, rec.final_eta);
  }
  const auto summary = harness::aggregate(records, config.smoothing_window,
                                          config.convergence_threshold);
  harness::write_summary(summary, config, out);
  for (const auto& name : report::metric_names()) {
    report::plot(out, report::metric_from_string(name),
                 config.smoothing_window, out);
  }
  write_file(out / "manifest.json",
             manifest_json(opt, config, jobs, "complete", wall).dump(2) + "\n");

  std::cout << "final success " << summary.final_success_mean
            << ", median convergence episode "
            << (summary.median_convergence
                    ? harness::format_double(*summary.median_convergence)
                    : std::string("none"))
            << "\nwrote " << out.string() << "\n";
  return kOk;
}

int cmd_validate(const std::string& path,
                 const std::vector<std::string>& overrides) {
  const auto config = config::load(path, overrides);
  std::cout << config::canonical_json(config);
  std::cerr << "ok: config hash " << config::hash_hex(config::config_hash(config))
            << "\n";
  return kOk;
}

int cmd_compare(const std::string& baseline_dir, const std::string& attack_dir,
                std::string out, int window) {
  const auto baseline = harness::read_summary(baseline_dir);
  const auto attack = harness::read_summary(attack_dir);
  const auto cmp = report::compare(baseline, attack);
  if (out.empty()) {
    out = (fs::path(attack_dir) /
           ("compare_" + fs::path(baseline_dir).lexically_normal()
                             .filename()
                             .string()))
              .string();
  }
  report::write_comparison(cmp, baseline, attack, window, out);
  std::cout << cmp.markdown() << "\nwrote " << out << "\n";
  return kOk;
}

int cmd_plot(const std::string& run_dir, std::vector<std::string> metrics,
             std::string out, int window) {
  if (metrics.empty()) metrics = report::metric_names();
  std::vector<report::Metric> parsed;
  for (const auto& m : metrics) parsed.push_back(report::metric_from_string(m));
  if (out.empty()) out = run_dir;
  for (auto m : parsed) {
    const auto path = report::plot(run_dir, m, window, out);
    std::cout << "wrote " << path.string() << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned-incentive multi-agent training under manipulation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", DILEMMA_FORGE_VERSION);

  RunOptions run_opt;
  auto* run = app.add_subcommand("run", "train every seed of a config");
  run->add_option("--config", run_opt.config, "experiment JSON")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--out", run_opt.out, "output run directory")->required();
  run->add_flag("--force", run_opt.force, "replace a previous run directory");
  run->add_option("--override", run_opt.overrides,
                  "path=value, e.g. seeds=[1,2] or agents[0].mode=reverse")
      ->take_all();
  run->add_option("--jobs", run_opt.jobs,
                  "parallel seeds (default: DILEMMA_FORGE_JOBS, else 1)")
      ->check(CLI::PositiveNumber);

  std::string validate_config;
  std::vector<std::string> validate_overrides;
  auto* validate =
      app.add_subcommand("validate", "check a config and print its canonical form");
  validate->add_option("--config", validate_config, "experiment JSON")
      ->required()
      ->check(CLI::ExistingFile);
  validate->add_option("--override", validate_overrides, "path=value")
      ->take_all();

  std::string baseline_dir, attack_dir, compare_out;
  int compare_window = 100;
  auto* compare =
      app.add_subcommand("compare", "compare an attack run against a baseline");
  compare->add_option("baseline", baseline_dir, "baseline run directory")
      ->required();
  compare->add_option("attack", attack_dir, "attack run directory")->required();
  compare->add_option("--out", compare_out,
                      "report directory (default: <attack>/compare_<baseline>)");
  compare->add_option("--window", compare_window, "curve smoothing window")
      ->check(CLI::PositiveNumber);

  std::string plot_dir, plot_out;
  std::vector<std::string> plot_metrics;
  int plot_window = 100;
  auto* plot = app.add_subcommand("plot", "render SVG curves of a run");
  plot->add_option("run", plot_dir, "run directory")->required();
  plot->add_option("--metric", plot_metrics,
                   "success, steps, env_return or total_return (default: all)")
      ->take_all();
  plot->add_option("--out", plot_out, "output directory (default: the run)");
  plot->add_option("--window", plot_window, "curve smoothing window")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(run_opt);
    if (*validate) return cmd_validate(validate_config, validate_overrides);
    if (*compare) {
      return cmd_compare(baseline_dir, attack_dir, compare_out, compare_window);
    }
    if (*plot) return cmd_plot(plot_dir, plot_metrics, plot_out, plot_window);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}
