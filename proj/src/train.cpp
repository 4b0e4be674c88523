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


#include "dilemma_forge/train.hpp"

#include "dilemma_forge/error.hpp"

namespace dilemma_forge::lio {

EpisodeMetrics episode_metrics(const env::GameSpec& spec,
                               const Trajectory& trajectory) {
  EpisodeMetrics m;
  const auto transitions = trajectory.transitions();
  m.success = env::success_rate(spec, transitions);
  m.steps = trajectory.length();
  m.env_return.assign(spec.n_agents, 0.0);
  m.total_return.assign(spec.n_agents, 0.0);
  for (const auto& s : trajectory.steps) {
    for (int j = 0; j < spec.n_agents; ++j) {
      m.env_return[j] += s.rewards.env[j];
      m.total_return[j] += total_reward(s.rewards, j);
    }
  }
  return m;
}

AdmoStates init_admo_states(const Team& team) {
  AdmoStates out(team.n_agents());
  for (int i = 0; i < team.n_agents(); ++i) {
    const auto& bundle = team.agents[i];
    if (const auto* a = std::get_if<manip::Admo>(&bundle.mode)) {
      out[i] = admo::State::init(a->settings, bundle.theta, bundle.eta);
    }
  }
  return out;
}

IterationResult train_iteration(Team& team, AdmoStates& admo_states,
                                const TrainSettings& settings,
                                std::mt19937_64& rng) {
  const int n = team.n_agents();
  DF_REQUIRE(static_cast<int>(admo_states.size()) == n,
             "train_iteration: one controller slot per agent required");
  DF_REQUIRE(settings.batch_size > 0, "train_iteration: empty batch");
  IterationResult res;
  const auto modes = team.modes();
  {
    const auto thetas = team.thetas();
    res.batch = rollout_batch(team, thetas, settings.batch_size, rng);
  }
  res.episodes.reserve(res.batch.size());
  double mean_success = 0.0;
  for (const auto& ep : res.batch.episodes) {
    res.episodes.push_back(episode_metrics(team.spec, ep));
    mean_success += res.episodes.back().success;
  }
  mean_success /= static_cast<double>(res.batch.size());

  std::vector<nn::ParamVector> theta_hat(n);
  res.policy_grad_norms.assign(n, 0.0);
  for (int j = 0; j < n; ++j) {
    const auto& bundle = team.agents[j];
    if (!manip::learns_policy_by_reinforce(bundle.mode)) {
      theta_hat[j] = bundle.theta;
      continue;
    }
    const auto grad = batch_policy_gradient(
        j, res.batch, learning_reward_fn(modes, j), settings.baseline);
    res.policy_grad_norms[j] = grad.norm();
    theta_hat[j] = bundle.theta;
    theta_hat[j].axpy(bundle.lr_policy * manip::update_direction(bundle.mode),
                      grad);
    // The exploration bonus belongs to the ascent rule; a descending agent
    // follows the plain negated gradient.
    if (settings.entropy_coef != 0.0 &&
        manip::update_direction(bundle.mode) > 0.0) {
      theta_hat[j].axpy(bundle.lr_policy * settings.entropy_coef,
                        entropy_gradient(j, bundle.theta, res.batch));
    }
  }

  const Batch lookahead =
      rollout_batch(team, theta_hat, settings.batch_size, rng);
  GiverGradientInputs gin;
  gin.team = &team;
  gin.old_batch = &res.batch;
  gin.lookahead_batch = &lookahead;
  gin.alpha = settings.alpha;
  gin.baseline = settings.baseline;
  gin.lookahead_baseline = settings.baseline;
  std::vector<nn::ParamVector> eta_grads(n);
  for (int i = 0; i < n; ++i) {
    if (manip::trains_incentives_honestly(team.agents[i].mode)) {
      eta_grads[i] = giver_gradient(i, gin);
    }
  }
  for (int i = 0; i < n; ++i) {
    if (!eta_grads[i].values.empty()) {
      team.agents[i].eta.axpy(team.agents[i].lr_incentive, eta_grads[i]);
    }
  }

  for (int i = 0; i < n; ++i) {
    if (!admo_states[i]) continue;
    const auto& st = std::get<manip::Admo>(team.agents[i].mode).settings;
    admo::StepInputs in;
    in.batch = &res.batch;
    in.adversary = i;
    in.batch_success = mean_success;
    in.baseline = settings.baseline;
    res.audits.push_back({i, admo::admo_step(*admo_states[i], team, st, in)});
  }

  for (int j = 0; j < n; ++j) {
    if (manip::learns_policy_by_reinforce(team.agents[j].mode)) {
      team.agents[j].theta = std::move(theta_hat[j]);
    }
  }
  return res;
}

}  // namespace dilemma_forge::lio
