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

#ifndef DILEMMA_FORGE_TRAIN_HPP_
#define DILEMMA_FORGE_TRAIN_HPP_

#include <optional>
#include <random>
#include <vector>

#include "dilemma_forge/admo.hpp"
#include "dilemma_forge/lio.hpp"

namespace dilemma_forge::lio {

struct TrainSettings {
  int batch_size = 16;
  double alpha = 1e-2;  // incentive-cost weight for honest givers
  Baseline baseline = Baseline::kLeaveOneOut;
  // Weight of the entropy bonus in the update of every agent that ascends
  // its return. Agents that descend (Reverse) get no bonus.
  double entropy_coef = 0.0;
};

// Reported per episode. Returns are undiscounted and exclude fake bonuses.
struct EpisodeMetrics {
  double success = 0.0;
  int steps = 0;
  std::vector<double> env_return;
  std::vector<double> total_return;
};

EpisodeMetrics episode_metrics(const env::GameSpec& spec,
                               const Trajectory& trajectory);

struct AdversaryAudit {
  int agent = 0;
  admo::AuditRow row;
};

struct IterationResult {
  Batch batch;
  std::vector<EpisodeMetrics> episodes;
  // Norm of each agent's batch policy gradient on its learning reward; 0 for
  // agents that do not learn by policy gradient.
  std::vector<double> policy_grad_norms;
  std::vector<AdversaryAudit> audits;
};

// Controller state for every ADMO agent, empty for the rest.
using AdmoStates = std::vector<std::optional<admo::State>>;

AdmoStates init_admo_states(const Team& team);

// One bi-level iteration: roll out, compute lookahead policies, roll out under
// them, update honest givers' incentive heads, step the ADMO controllers,
// then commit the lookahead policies.
IterationResult train_iteration(Team& team, AdmoStates& admo_states,
                                const TrainSettings& settings,
                                std::mt19937_64& rng);

}  // namespace dilemma_forge::lio

#endif  // DILEMMA_FORGE_TRAIN_HPP_
