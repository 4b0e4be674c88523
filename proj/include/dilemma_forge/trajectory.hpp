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

#ifndef DILEMMA_FORGE_TRAJECTORY_HPP_
#define DILEMMA_FORGE_TRAJECTORY_HPP_

#include <functional>
#include <vector>

#include "dilemma_forge/env.hpp"
#include "dilemma_forge/nn.hpp"

namespace dilemma_forge::lio {

// Per-step decomposition of what every agent receives. incentives[i][j] is
// the amount giver i hands to recipient j; the diagonal stays 0.
struct RewardBreakdown {
  std::vector<double> env;
  std::vector<std::vector<double>> incentives;

  static RewardBreakdown zeros(int n_agents);
  int n_agents() const { return static_cast<int>(env.size()); }
};

// env[j] + sum_{i != j} incentives[i][j]
double total_reward(const RewardBreakdown& breakdown, int j);

struct Step {
  env::JointState state;  // state the actions were chosen in
  std::vector<std::vector<double>> observations;
  std::vector<int> actions;
  RewardBreakdown rewards;
  // Per giver: the incentive-head input at this step, and whether the head
  // actually emitted (false once a budget cap zeroed it).
  std::vector<std::vector<double>> incentive_inputs;
  std::vector<char> emission_active;
  bool exited = false;
  bool terminal = false;
};

using RewardFn = std::function<double(const Step&)>;

struct Trajectory {
  std::vector<Step> steps;
  // scores[agent][t] = grad log pi(a_t | o_t) at the parameters used for the
  // rollout.
  std::vector<std::vector<nn::ParamVector>> scores;
  double discount = 0.99;

  int length() const { return static_cast<int>(steps.size()); }
  bool has_scores(int agent) const {
    return agent < static_cast<int>(scores.size()) &&
           static_cast<int>(scores[agent].size()) == length();
  }
  std::vector<env::Transition> transitions() const;

  double discounted_return(const RewardFn& reward) const;
  std::vector<double> discounted_env_returns() const;
  std::vector<double> discounted_total_returns() const;
};

// G_t = sum_{u >= t} gamma^{u-t} r_u for every step of the episode.
std::vector<double> returns_to_go(const Trajectory& trajectory,
                                  const RewardFn& reward);

// A set of episodes with probability weights summing to 1. Sampled batches
// are uniform; exact-enumeration batches carry trajectory probabilities.
struct Batch {
  std::vector<Trajectory> episodes;
  std::vector<double> weights;

  static Batch uniform(std::vector<Trajectory> episodes);
  std::size_t size() const { return episodes.size(); }
};

}  // namespace dilemma_forge::lio

#endif  // DILEMMA_FORGE_TRAJECTORY_HPP_
