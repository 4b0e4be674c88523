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

#include "dilemma_forge/trajectory.hpp"

#include "dilemma_forge/error.hpp"

namespace dilemma_forge::lio {

RewardBreakdown RewardBreakdown::zeros(int n_agents) {
  RewardBreakdown b;
  b.env.assign(n_agents, 0.0);
  b.incentives.assign(n_agents, std::vector<double>(n_agents, 0.0));
  return b;
}

double total_reward(const RewardBreakdown& breakdown, int j) {
  DF_REQUIRE(j >= 0 && j < breakdown.n_agents(),
             "total_reward: agent index out of range");
  double total = breakdown.env[j];
  for (int i = 0; i < breakdown.n_agents(); ++i) {
    if (i != j) total += breakdown.incentives[i][j];
  }
  return total;
}

std::vector<env::Transition> Trajectory::transitions() const {
  std::vector<env::Transition> out;
  out.reserve(steps.size());
  for (const auto& s : steps) {
    env::Transition tr;
    tr.actions = s.actions;
    tr.outcome.env_rewards = s.rewards.env;
    tr.outcome.exited = s.exited;
    tr.outcome.terminal = s.terminal;
    out.push_back(std::move(tr));
  }
  return out;
}

double Trajectory::discounted_return(const RewardFn& reward) const {
  double acc = 0.0;
  double g = 1.0;
  for (const auto& s : steps) {
    acc += g * reward(s);
    g *= discount;
  }
  return acc;
}

std::vector<double> Trajectory::discounted_env_returns() const {
  const int n = steps.empty() ? 0 : steps.front().rewards.n_agents();
  std::vector<double> out(n, 0.0);
  for (int j = 0; j < n; ++j) {
    out[j] = discounted_return([j](const Step& s) { return s.rewards.env[j]; });
  }
  return out;
}

std::vector<double> Trajectory::discounted_total_returns() const {
  const int n = steps.empty() ? 0 : steps.front().rewards.n_agents();
  std::vector<double> out(n, 0.0);
  for (int j = 0; j < n; ++j) {
    out[j] = discounted_return(
        [j](const Step& s) { return total_reward(s.rewards, j); });
  }
  return out;
}

std::vector<double> returns_to_go(const Trajectory& trajectory,
                                  const RewardFn& reward) {
  const int len = trajectory.length();
  std::vector<double> g(len, 0.0);
  double running = 0.0;
  for (int t = len - 1; t >= 0; --t) {
    running = reward(trajectory.steps[t]) + trajectory.discount * running;
    g[t] = running;
  }
  return g;
}

Batch Batch::uniform(std::vector<Trajectory> episodes) {
  Batch b;
  const double w = episodes.empty() ? 0.0 : 1.0 / static_cast<double>(episodes.size());
  b.weights.assign(episodes.size(), w);
  b.episodes = std::move(episodes);
  return b;
}

}  // namespace dilemma_forge::lio
