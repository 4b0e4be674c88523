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


#include "dilemma_forge/lio.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "dilemma_forge/error.hpp"

namespace dilemma_forge::lio {

void AgentBundle::validate() const {
  if (!(lr_policy > 0.0)) throw ConfigError("lr_policy must be > 0");
  if (!(lr_incentive > 0.0)) throw ConfigError("lr_incentive must be > 0");
  if (!theta.layout_consistent() || !eta.layout_consistent()) {
    throw ConfigError("agent parameters have an inconsistent layout");
  }
}

std::vector<manip::ManipulationMode> Team::modes() const {
  std::vector<manip::ManipulationMode> out;
  out.reserve(agents.size());
  for (const auto& a : agents) out.push_back(a.mode);
  return out;
}

std::vector<nn::ParamVector> Team::thetas() const {
  std::vector<nn::ParamVector> out;
  out.reserve(agents.size());
  for (const auto& a : agents) out.push_back(a.theta);
  return out;
}

RewardFn reward_fn(RewardSelector selector, int j) {
  switch (selector) {
    case RewardSelector::kTotal:
      return [j](const Step& s) { return total_reward(s.rewards, j); };
    case RewardSelector::kEnvOnly:
      return [j](const Step& s) { return s.rewards.env[j]; };
    case RewardSelector::kNegatedTotal:
      return [j](const Step& s) { return -total_reward(s.rewards, j); };
  }
  return nullptr;
}

RewardFn learning_reward_fn(std::vector<manip::ManipulationMode> modes,
                            int j) {
  return [modes = std::move(modes), j](const Step& s) {
    return manip::select_reward(modes, s.rewards, j);
  };
}

nn::ParamVector policy_gradient(int j, const Trajectory& trajectory,
                                const RewardFn& reward) {
  DF_REQUIRE(trajectory.length() > 0, "policy_gradient: empty trajectory");
  DF_REQUIRE(trajectory.has_scores(j), "policy_gradient: no cached scores");
  const auto g = returns_to_go(trajectory, reward);
  nn::ParamVector grad = trajectory.scores[j][0].zeros_like();
  double disc = 1.0;
  for (int t = 0; t < trajectory.length(); ++t) {
    if (g[t] != 0.0) grad.axpy(disc * g[t], trajectory.scores[j][t]);
    disc *= trajectory.discount;
  }
  return grad;
}

nn::ParamVector policy_gradient(int j, const Trajectory& trajectory,
                                RewardSelector selector) {
  return policy_gradient(j, trajectory, reward_fn(selector, j));
}

std::vector<std::vector<double>> baselines(
    const std::vector<std::vector<double>>& returns,
    std::span<const double> weights, Baseline baseline) {
  const std::size_t n = returns.size();
  std::vector<std::vector<double>> b(n);
  std::size_t horizon = 0;
  for (std::size_t e = 0; e < n; ++e) {
    b[e].assign(returns[e].size(), 0.0);
    horizon = std::max(horizon, returns[e].size());
  }
  if (baseline == Baseline::kNone) return b;
  for (std::size_t t = 0; t < horizon; ++t) {
    double sum_wg = 0.0;
    double sum_w = 0.0;
    for (std::size_t e = 0; e < n; ++e) {
      if (t < returns[e].size()) {
        sum_wg += weights[e] * returns[e][t];
        sum_w += weights[e];
      }
    }
    for (std::size_t e = 0; e < n; ++e) {
      if (t >= returns[e].size()) continue;
      const double w_rest = sum_w - weights[e];
      if (w_rest > 0.0) {
        b[e][t] = (sum_wg - weights[e] * returns[e][t]) / w_rest;
      }
    }
  }
  return b;
}

nn::ParamVector batch_policy_gradient(int j, const Batch& batch,
                                      const RewardFn& reward,
                                      Baseline baseline) {
  DF_REQUIRE(batch.size() > 0, "batch_policy_gradient: empty batch");
  DF_REQUIRE(batch.weights.size() == batch.size(),
             "batch_policy_gradient: weights do not match episodes");
  std::vector<std::vector<double>> g;
  g.reserve(batch.size());
  for (const auto& ep : batch.episodes) g.push_back(returns_to_go(ep, reward));
  const auto b = baselines(g, batch.weights, baseline);
  DF_REQUIRE(batch.episodes[0].has_scores(j),
             "batch_policy_gradient: no cached scores");
  nn::ParamVector grad = batch.episodes[0].scores[j][0].zeros_like();
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const auto& ep = batch.episodes[e];
    DF_REQUIRE(ep.has_scores(j), "batch_policy_gradient: no cached scores");
    double disc = 1.0;
    for (int t = 0; t < ep.length(); ++t) {
      const double coef = batch.weights[e] * disc * (g[e][t] - b[e][t]);
      if (coef != 0.0) grad.axpy(coef, ep.scores[j][t]);
      disc *= ep.discount;
    }
  }
  return grad;
}

nn::ParamVector entropy_gradient(int j, const nn::ParamVector& theta,
                                 const Batch& batch) {
  nn::ParamVector grad = theta.zeros_like();
  for (std::size_t e = 0; e < batch.size(); ++e) {
    for (const auto& s : batch.episodes[e].steps) {
      nn::entropy_gradient_accumulate(theta, s.observations[j],
                                      batch.weights[e], grad);
    }
  }
  return grad;
}

nn::ParamVector recipient_update(int j, const AgentBundle& bundle,
                                 const Batch& batch, const RewardFn& reward,
                                 Baseline baseline) {
  nn::ParamVector out = bundle.theta;
  if (!manip::learns_policy_by_reinforce(bundle.mode)) return out;
  const auto grad = batch_policy_gradient(j, batch, reward, baseline);
  out.axpy(bundle.lr_policy * manip::update_direction(bundle.mode), grad);
  return out;
}

double incentive_cost(int giver, const Trajectory& trajectory) {
  double acc = 0.0;
  double g = 1.0;
  for (const auto& s : trajectory.steps) {
    const auto& row = s.rewards.incentives[giver];
    double spend = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (static_cast<int>(j) != giver) spend += row[j];
    }
    acc += g * spend;
    g *= trajectory.discount;
  }
  return acc;
}

double incentive_cost(int giver, const Batch& batch) {
  double acc = 0.0;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    acc += batch.weights[e] * incentive_cost(giver, batch.episodes[e]);
  }
  return acc;
}

namespace {

// Incentive-head output slot for recipient j of giver i.
int recipient_slot(int giver, int j) { return j < giver ? j : j - 1; }

}  // namespace

nn::ParamVector giver_gradient(int giver, const GiverGradientInputs& in) {
  DF_REQUIRE(in.team && in.old_batch && in.lookahead_batch,
             "giver_gradient: missing inputs");
  const Team& team = *in.team;
  const Batch& old_batch = *in.old_batch;
  const Batch& new_batch = *in.lookahead_batch;
  const int n = team.n_agents();
  DF_REQUIRE(giver >= 0 && giver < n, "giver_gradient: giver out of range");
  DF_REQUIRE(old_batch.size() > 0 && new_batch.size() > 0,
             "giver_gradient: empty batch");
  for (const auto* batch : {&old_batch, &new_batch}) {
    for (const auto& ep : batch->episodes) {
      for (const auto& s : ep.steps) {
        DF_REQUIRE(s.rewards.n_agents() == n,
                   "giver_gradient: batch agent count mismatch");
      }
    }
  }
  const AgentBundle& gb = team.agents[giver];
  const double gamma = team.spec.discount;
  const std::size_t n_eps = old_batch.size();

  // cot[e][u][slot]: cotangent on the giver's head output at old step (e,u).
  std::vector<std::vector<std::vector<double>>> cot(n_eps);
  for (std::size_t e = 0; e < n_eps; ++e) {
    const int len = old_batch.episodes[e].length();
    cot[e].assign(len, std::vector<double>(n - 1, 0.0));
    double disc = 1.0;
    for (int u = 0; u < len; ++u) {
      for (int s = 0; s < n - 1; ++s) {
        cot[e][u][s] = -in.alpha * old_batch.weights[e] * disc;
      }
      disc *= gamma;
    }
  }

  // Givers cannot observe anyone's mode, so every recipient is modelled as
  // an honest learner ascending its total reward with its own step size.
  const RewardFn giver_env = reward_fn(RewardSelector::kEnvOnly, giver);
  for (int j = 0; j < n; ++j) {
    if (j == giver) continue;
    const nn::ParamVector v =
        batch_policy_gradient(j, new_batch, giver_env, in.lookahead_baseline);
    const double scale = team.agents[j].lr_policy;

    // c[e][t] = gamma^t <v, score_j(e,t)>, then fold the baseline's dependence on
    // every other episode's return into k[e][t].
    std::vector<std::vector<double>> c(n_eps);
    std::size_t horizon = 0;
    for (std::size_t e = 0; e < n_eps; ++e) {
      const auto& ep = old_batch.episodes[e];
      DF_REQUIRE(ep.has_scores(j), "giver_gradient: no cached scores");
      c[e].resize(ep.length());
      double disc = 1.0;
      for (int t = 0; t < ep.length(); ++t) {
        c[e][t] = disc * v.dot(ep.scores[j][t]);
        disc *= gamma;
      }
      horizon = std::max(horizon, c[e].size());
    }
    std::vector<std::vector<double>> k(n_eps);
    for (std::size_t e = 0; e < n_eps; ++e) {
      k[e].resize(c[e].size());
      for (std::size_t t = 0; t < c[e].size(); ++t) {
        k[e][t] = old_batch.weights[e] * c[e][t];
      }
    }
    if (in.baseline == Baseline::kLeaveOneOut) {
      for (std::size_t t = 0; t < horizon; ++t) {
        double sum_w = 0.0;
        for (std::size_t e = 0; e < n_eps; ++e) {
          if (t < c[e].size()) sum_w += old_batch.weights[e];
        }
        // q_e = w_e c_e / W_{-e}; each episode e' subtracts w_{e'} times the
        // sum of q over the other live episodes.
        std::vector<double> q(n_eps, 0.0);
        double q_sum = 0.0;
        for (std::size_t e = 0; e < n_eps; ++e) {
          if (t >= c[e].size()) continue;
          const double w_rest = sum_w - old_batch.weights[e];
          if (w_rest > 0.0) q[e] = old_batch.weights[e] * c[e][t] / w_rest;
          q_sum += q[e];
        }
        for (std::size_t e = 0; e < n_eps; ++e) {
          if (t >= c[e].size()) continue;
          k[e][t] -= old_batch.weights[e] * (q_sum - q[e]);
        }
      }
    }
    const int slot = recipient_slot(giver, j);
    for (std::size_t e = 0; e < n_eps; ++e) {
      double d = 0.0;
      for (std::size_t u = 0; u < k[e].size(); ++u) {
        d = d * gamma + k[e][u];
        cot[e][u][slot] += scale * d;
      }
    }
  }

  nn::ParamVector grad = gb.eta.zeros_like();
  for (std::size_t e = 0; e < n_eps; ++e) {
    const auto& ep = old_batch.episodes[e];
    for (int u = 0; u < ep.length(); ++u) {
      const auto& s = ep.steps[u];
      if (!s.emission_active[giver]) continue;
      nn::incentive_vjp_accumulate(gb.eta, s.incentive_inputs[giver],
                                   cot[e][u], team.r_max, grad);
    }
  }
  return grad;
}

std::vector<double> incentive_budgets(const Team& team) {
  std::vector<double> out(team.n_agents(),
                          std::numeric_limits<double>::infinity());
  for (int i = 0; i < team.n_agents(); ++i) {
    if (const auto* a = std::get_if<manip::Admo>(&team.agents[i].mode)) {
      out[i] = a->settings.budget;
    }
  }
  return out;
}

namespace {

struct Decision {
  std::vector<std::vector<double>> observations;
  std::vector<std::vector<double>> probs;
  std::vector<nn::ForwardTrace> traces;
  std::vector<char> idle;
};

Decision decide(const Team& team, std::span<const nn::ParamVector> thetas,
                const env::JointState& state) {
  const int n = team.n_agents();
  Decision d;
  d.observations.resize(n);
  d.probs.resize(n);
  d.traces.resize(n);
  d.idle.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    d.observations[i] = env::observe(team.spec, state, i);
    d.idle[i] = std::holds_alternative<manip::Bypass>(team.agents[i].mode);
    d.traces[i] = nn::forward_trace(thetas[i], d.observations[i]);
    d.probs[i] = nn::softmax(d.traces[i].raw_output);
  }
  return d;
}

// Applies the joint action: env transition plus every giver's incentives,
// honouring budgets. `spent` tracks each giver's spend this episode.
Step make_step(const Team& team, const env::JointState& state,
               Decision&& decision, const std::vector<int>& actions,
               std::span<const double> budgets, std::vector<double>& spent,
               env::JointState& next) {
  const int n = team.n_agents();
  const int na = env::num_actions(team.spec);
  const auto outcome = env::step(team.spec, state, actions);
  Step s;
  s.state = state;
  s.observations = std::move(decision.observations);
  s.actions = actions;
  s.rewards = RewardBreakdown::zeros(n);
  s.rewards.env = outcome.env_rewards;
  s.incentive_inputs.resize(n);
  s.emission_active.assign(n, 0);
  std::vector<int> others;
  others.reserve(n - 1);
  for (int i = 0; i < n; ++i) {
    others.clear();
    for (int j = 0; j < n; ++j) {
      if (j != i) others.push_back(actions[j]);
    }
    s.incentive_inputs[i] =
        nn::incentive_input(s.observations[i], others, na);
    if (spent[i] >= budgets[i]) continue;
    s.emission_active[i] = 1;
    const auto inc = nn::incentive_forward(team.agents[i].eta,
                                           s.incentive_inputs[i], team.r_max);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double v = inc[recipient_slot(i, j)];
      s.rewards.incentives[i][j] = v;
      spent[i] += v;
    }
  }
  s.exited = outcome.exited;
  s.terminal = outcome.terminal;
  next = outcome.next_state;
  return s;
}

Trajectory empty_trajectory(const Team& team) {
  Trajectory tr;
  tr.discount = team.spec.discount;
  tr.scores.resize(team.n_agents());
  return tr;
}

void check_thetas(const Team& team, std::span<const nn::ParamVector> thetas) {
  DF_REQUIRE(static_cast<int>(thetas.size()) == team.n_agents(),
             "rollout: one policy per agent required");
  DF_REQUIRE(team.n_agents() == team.spec.n_agents,
             "rollout: team size does not match the game");
}

}  // namespace

Trajectory rollout_episode(const Team& team,
                           std::span<const nn::ParamVector> thetas,
                           std::mt19937_64& rng) {
  check_thetas(team, thetas);
  const int n = team.n_agents();
  const auto budgets = incentive_budgets(team);
  std::vector<double> spent(n, 0.0);
  Trajectory tr = empty_trajectory(team);
  env::JointState state = env::reset(team.spec);
  std::vector<int> actions(n);
  while (!state.terminal) {
    Decision d = decide(team, thetas, state);
    for (int i = 0; i < n; ++i) {
      actions[i] = manip::select_action(team.agents[i].mode, team.spec,
                                        d.observations[i], d.probs[i], rng);
      tr.scores[i].push_back(
          nn::score_from_trace(thetas[i], d.traces[i], actions[i]));
    }
    env::JointState next;
    tr.steps.push_back(
        make_step(team, state, std::move(d), actions, budgets, spent, next));
    state = std::move(next);
  }
  return tr;
}

Batch rollout_batch(const Team& team, std::span<const nn::ParamVector> thetas,
                    int episodes, std::mt19937_64& rng) {
  DF_REQUIRE(episodes > 0, "rollout_batch: episodes must be positive");
  std::vector<Trajectory> eps;
  eps.reserve(episodes);
  for (int e = 0; e < episodes; ++e) {
    eps.push_back(rollout_episode(team, thetas, rng));
  }
  return Batch::uniform(std::move(eps));
}

namespace {

void enumerate_from(const Team& team, std::span<const nn::ParamVector> thetas,
                    std::span<const double> budgets,
                    const env::JointState& state, std::vector<double> spent,
                    const Trajectory& prefix, double prob, Batch& out) {
  if (state.terminal) {
    out.episodes.push_back(prefix);
    out.weights.push_back(prob);
    return;
  }
  const int n = team.n_agents();
  const int na = env::num_actions(team.spec);
  const Decision base = decide(team, thetas, state);
  std::vector<int> choices(n);
  std::vector<int> actions(n, 0);
  // Idling agents have exactly one choice.
  for (int i = 0; i < n; ++i) choices[i] = base.idle[i] ? 1 : na;
  std::vector<int> idx(n, 0);
  while (true) {
    double p = prob;
    for (int i = 0; i < n; ++i) {
      if (base.idle[i]) {
        actions[i] = manip::idle_action(team.spec, base.observations[i]);
      } else {
        actions[i] = idx[i];
        p *= base.probs[i][idx[i]];
      }
    }
    Trajectory tr = prefix;
    for (int i = 0; i < n; ++i) {
      tr.scores[i].push_back(
          nn::score_from_trace(thetas[i], base.traces[i], actions[i]));
    }
    auto local_spent = spent;
    Decision d = base;
    env::JointState next;
    tr.steps.push_back(
        make_step(team, state, std::move(d), actions, budgets, local_spent,
                  next));
    enumerate_from(team, thetas, budgets, next, local_spent, tr, p, out);
    int i = 0;
    while (i < n && ++idx[i] == choices[i]) idx[i++] = 0;
    if (i == n) break;
  }
}

}  // namespace

Batch enumerate_batch(const Team& team,
                      std::span<const nn::ParamVector> thetas) {
  check_thetas(team, thetas);
  const auto budgets = incentive_budgets(team);
  Batch out;
  enumerate_from(team, thetas, budgets, env::reset(team.spec),
                 std::vector<double>(team.n_agents(), 0.0),
                 empty_trajectory(team), 1.0, out);
  return out;
}

}  // namespace dilemma_forge::lio
