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

#ifndef DILEMMA_FORGE_HARNESS_HPP_
#define DILEMMA_FORGE_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dilemma_forge/admo.hpp"
#include "dilemma_forge/env.hpp"
#include "dilemma_forge/lio.hpp"
#include "dilemma_forge/manip.hpp"

namespace dilemma_forge::harness {

struct AgentConfig {
  std::vector<int> hidden = {64, 32};
  manip::ManipulationMode mode = manip::Honest{};
  double lr_policy = 2e-2;
  double lr_incentive = 1.0;

  bool operator==(const AgentConfig&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  env::GameSpec game;
  std::vector<AgentConfig> agents;
  double r_max = nn::kDefaultIncentiveBound;
  int episodes = 4000;
  int batch_size = 16;
  double alpha = 1e-2;
  double entropy_coef = 0.5;
  lio::Baseline baseline = lio::Baseline::kLeaveOneOut;
  std::vector<std::uint64_t> seeds;
  int smoothing_window = 100;
  double convergence_threshold = 0.9;
  int checkpoint_every = 0;  // iterations between checkpoints; 0 disables
  bool allow_matrix_bypass = false;

  bool operator==(const ExperimentConfig&) const = default;
  // Throws ConfigError naming the offending field.
  void validate() const;
  int iterations() const;
};

struct EpisodeRow {
  double success = 0.0;
  int steps = 0;
  std::vector<double> env_return;
  std::vector<double> total_return;
};

struct IterationRow {
  int episodes_done = 0;
  std::vector<double> policy_grad_norms;
};

struct AuditEntry {
  int iteration = 0;
  int agent = 0;
  admo::AuditRow row;
};

struct RunRecord {
  std::uint64_t seed = 0;
  std::vector<EpisodeRow> episodes;
  std::vector<IterationRow> iterations;
  std::vector<AuditEntry> audits;
  std::vector<nn::ParamVector> final_theta;
  std::vector<nn::ParamVector> final_eta;

  std::vector<double> success_series() const;
};

// Called after every `checkpoint_every` iterations with the live team. May be
// invoked concurrently from different seeds' worker threads.
using CheckpointFn = std::function<void(std::uint64_t seed, int iteration,
                                        const lio::Team& team)>;

lio::Team build_team(const ExperimentConfig& config, std::uint64_t seed);

RunRecord run_trial(const ExperimentConfig& config, std::uint64_t seed,
                    const CheckpointFn& on_checkpoint = nullptr);

// Runs every seed, up to `jobs` at a time. Records come back in seed order.
std::vector<RunRecord> run_experiment(const ExperimentConfig& config, int jobs,
                                      const CheckpointFn& on_checkpoint =
                                          nullptr);

// 1-indexed episode at which the trailing `window` mean first reaches
// `threshold`; nullopt if it never does.
std::optional<int> convergence_episode(std::span<const double> series,
                                       int window, double threshold);

// Median with nullopt ranked above every value. An even count averages the
// two middle entries, and is nullopt if either of them is.
std::optional<double> median_convergence(
    std::vector<std::optional<int>> values);

struct SeriesStats {
  std::vector<double> mean;
  std::vector<double> std;  // population
};

struct Summary {
  int n_agents = 0;
  int n_episodes = 0;
  int final_window = 0;  // last 10% of episodes
  SeriesStats success;
  SeriesStats steps;
  std::vector<SeriesStats> env_return;
  std::vector<SeriesStats> total_return;
  std::vector<std::uint64_t> seeds;
  std::vector<std::optional<int>> convergence;
  std::optional<double> median_convergence;
  std::vector<double> final_success;  // per seed
  double final_success_mean = 0.0;
  // [seed][agent] final-window means.
  std::vector<std::vector<double>> final_env_return;
  std::vector<std::vector<double>> final_total_return;
  std::vector<double> final_env_return_mean;    // per agent
  std::vector<double> final_total_return_mean;  // per agent
};

Summary aggregate(std::span<const RunRecord> records, int window,
                  double threshold);

// Mean of the last ceil(10%) entries.
int final_window_size(int n_episodes);
double final_window_mean(std::span<const double> series);

// Shortest round-trip decimal form.
std::string format_double(double x);

void write_run_csv(const RunRecord& record, const std::filesystem::path& path);
void write_iterations_csv(const RunRecord& record,
                          const std::filesystem::path& path);
// JSON lines; each row carries the FNV-1a hash of the previous row's hash
// and its own content.
void write_audit_jsonl(const RunRecord& record,
                       const std::filesystem::path& path);
RunRecord read_run_csv(const std::filesystem::path& path);

// summary.csv (one row per episode) and summary.json (everything else plus
// the game and experiment name).
void write_summary(const Summary& summary, const ExperimentConfig& config,
                   const std::filesystem::path& dir);

struct StoredSummary {
  std::string name;
  env::GameSpec game;
  Summary summary;
};
StoredSummary read_summary(const std::filesystem::path& dir);

std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace dilemma_forge::harness

#endif  // DILEMMA_FORGE_HARNESS_HPP_
