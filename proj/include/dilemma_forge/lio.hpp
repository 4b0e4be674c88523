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

#ifndef DILEMMA_FORGE_LIO_HPP_
#define DILEMMA_FORGE_LIO_HPP_

#include <random>
#include <span>
#include <vector>

#include "dilemma_forge/env.hpp"
#include "dilemma_forge/manip.hpp"
#include "dilemma_forge/nn.hpp"
#include "dilemma_forge/trajectory.hpp"

namespace dilemma_forge::lio {

enum class RewardSelector { kTotal, kEnvOnly, kNegatedTotal };

// kLeaveOneOut subtracts, at each timestep, the weighted mean return-to-go of
// the other episodes still running at that step. It keeps the estimator
// unbiased for independently sampled batches. Exact-enumeration batches must
// use kNone.
enum class Baseline { kNone, kLeaveOneOut };

struct AgentBundle {
  nn::ParamVector theta;  // policy
  nn::ParamVector eta;    // incentive head
  double lr_policy = 1e-2;
  double lr_incentive = 1e-2;
  manip::ManipulationMode mode = manip::Honest{};

  // Throws ConfigError.
  void validate() const;
};

struct Team {
  env::GameSpec spec;
  std::vector<AgentBundle> agents;
  double r_max = nn::kDefaultIncentiveBound;

  int n_agents() const { return static_cast<int>(agents.size()); }
  std::vector<manip::ManipulationMode> modes() const;
  std::vector<nn::ParamVector> thetas() const;
};

RewardFn reward_fn(RewardSelector selector, int j);
// What agent j learns from under everyone's modes.
RewardFn learning_reward_fn(std::vector<manip::ManipulationMode> modes, int j);

// Single-trajectory REINFORCE estimate sum_t gamma^t G_t * score_t, an
// unbiased estimate of the gradient of E[sum_t gamma^t r_t].
nn::ParamVector policy_gradient(int j, const Trajectory& trajectory,
                                const RewardFn& reward);
nn::ParamVector policy_gradient(int j, const Trajectory& trajectory,
                                RewardSelector selector);

// sum_e w_e sum_t gamma^t (G_{e,t} - b_{e,t}) * score_{e,t}.
nn::ParamVector batch_policy_gradient(int j, const Batch& batch,
                                      const RewardFn& reward,
                                      Baseline baseline);

// b_{e,t} for every episode and step; zeros for kNone.
std::vector<std::vector<double>> baselines(
    const std::vector<std::vector<double>>& returns,
    std::span<const double> weights, Baseline baseline);

// sum_e w_e sum_t grad H(pi_theta(. | o_{e,t})) over the batch's visited
// observations of agent j.
nn::ParamVector entropy_gradient(int j, const nn::ParamVector& theta,
                                 const Batch& batch);

// theta + lr * direction * batch gradient. Does not touch `bundle`.
nn::ParamVector recipient_update(int j, const AgentBundle& bundle,
                                 const Batch& batch, const RewardFn& reward,
                                 Baseline baseline);

// sum_t gamma^t sum_j incentives[i][j]_t for one episode.
double incentive_cost(int giver, const Trajectory& trajectory);
// Weighted over a batch.
double incentive_cost(int giver, const Batch& batch);

struct GiverGradientInputs {
  const Team* team = nullptr;
  const Batch* old_batch = nullptr;        // sampled under theta
  const Batch* lookahead_batch = nullptr;  // sampled under theta_hat
  double alpha = 1e-2;                     // incentive-cost weight
  Baseline baseline = Baseline::kLeaveOneOut;  // recipients' update
  Baseline lookahead_baseline = Baseline::kLeaveOneOut;
};

// Gradient with respect to eta_i of the giver's lookahead env return, chained
// through every recipient's one-step update, minus alpha times the gradient
// of the incentive cost on the old batch. Recipients are modelled as honest
// learners whatever their actual mode.
nn::ParamVector giver_gradient(int giver, const GiverGradientInputs& in);

// Per-giver incentive budget for one episode; infinity unless capped.
std::vector<double> incentive_budgets(const Team& team);

// Rolls out one episode with the given acting policies. Scores of the taken
// actions are cached for every agent, idling ones included.
Trajectory rollout_episode(const Team& team,
                           std::span<const nn::ParamVector> thetas,
                           std::mt19937_64& rng);
Batch rollout_batch(const Team& team, std::span<const nn::ParamVector> thetas,
                    int episodes, std::mt19937_64& rng);

// Every joint-action sequence with its probability as the batch weight.
// Exponential in horizon; intended for small exact checks.
Batch enumerate_batch(const Team& team,
                      std::span<const nn::ParamVector> thetas);

}  // namespace dilemma_forge::lio

#endif  // DILEMMA_FORGE_LIO_HPP_
