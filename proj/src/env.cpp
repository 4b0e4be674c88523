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

#include "dilemma_forge/env.hpp"

#include <algorithm>
#include <cmath>

#include "dilemma_forge/error.hpp"

namespace dilemma_forge::env {

std::string to_string(GameKind kind) {
  switch (kind) {
    case GameKind::kEscapeRoom:
      return "er";
    case GameKind::kPrisonersDilemma:
      return "ipd";
    case GameKind::kStagHunt:
      return "stag_hunt";
  }
  return "unknown";
}

GameKind game_kind_from_string(const std::string& name) {
  if (name == "er" || name == "escape_room") return GameKind::kEscapeRoom;
  if (name == "ipd") return GameKind::kPrisonersDilemma;
  if (name == "stag_hunt" || name == "staghunt") return GameKind::kStagHunt;
  throw ConfigError("game.kind: unknown game '" + name +
                    "' (expected er, ipd or stag_hunt)");
}

void validate(const GameSpec& spec) {
  if (spec.n_agents < 2) {
    throw ConfigError("game.n_agents: need at least 2 agents, got " +
                      std::to_string(spec.n_agents));
  }
  if (spec.kind == GameKind::kEscapeRoom) {
    if (spec.er_threshold < 1 || spec.er_threshold >= spec.n_agents) {
      throw ConfigError("game.er_threshold: Escape Room needs 1 <= M < N, got M=" +
                        std::to_string(spec.er_threshold) +
                        " N=" + std::to_string(spec.n_agents));
    }
  } else if (spec.n_agents > kMaxMatrixPlayers) {
    throw ConfigError("game.n_agents: matrix games support at most " +
                      std::to_string(kMaxMatrixPlayers) + " agents");
  }
  if (spec.horizon < 1) {
    throw ConfigError("game.horizon: must be >= 1");
  }
  if (!(spec.discount >= 0.0 && spec.discount < 1.0)) {
    throw ConfigError("game.discount: must lie in [0, 1)");
  }
}

int num_actions(const GameSpec& spec) {
  return spec.kind == GameKind::kEscapeRoom ? 3 : 2;
}

int observation_size(const GameSpec& spec) {
  if (spec.kind == GameKind::kEscapeRoom) return 3 + 1 + (spec.n_agents + 1);
  return (1 << spec.n_agents) + 1;
}

double max_env_reward(const GameSpec& spec) {
  switch (spec.kind) {
    case GameKind::kEscapeRoom:
      return kExitReward;
    case GameKind::kPrisonersDilemma:
      return 0.0;
    case GameKind::kStagHunt:
      return kStagPayoff;
  }
  return 0.0;
}

JointState reset(const GameSpec& spec, std::uint64_t /*seed*/) {
  validate(spec);
  JointState s;
  s.step_index = 0;
  s.terminal = false;
  if (spec.kind == GameKind::kEscapeRoom) {
    s.positions.assign(spec.n_agents, kStart);
    s.door_open = false;
    s.initial = false;
  } else {
    s.last_actions.assign(spec.n_agents, 0);
    s.initial = true;
  }
  return s;
}

double ipd_pair_payoff(int own, int other) {
  static constexpr double kTable[2][2] = {{-1.0, -3.0}, {0.0, -2.0}};
  return kTable[own][other];
}

int joint_action_index(std::span<const int> actions) {
  int code = 0;
  for (int a : actions) code = (code << 1) | a;
  return 1 + code;
}

namespace {

StepOutcome step_escape_room(const GameSpec& spec, const JointState& state,
                             std::span<const int> actions) {
  const int n = spec.n_agents;
  StepOutcome out;
  out.env_rewards.assign(n, 0.0);
  JointState next = state;
  int at_lever = 0;
  for (int i = 0; i < n; ++i) {
    next.positions[i] = actions[i];
    if (next.positions[i] != state.positions[i]) {
      out.env_rewards[i] += kMovementCost;
    }
    if (next.positions[i] == kLever) ++at_lever;
  }
  next.door_open = at_lever >= spec.er_threshold;
  if (next.door_open) {
    for (int i = 0; i < n; ++i) {
      if (next.positions[i] == kDoor) {
        out.env_rewards[i] += kExitReward;
        out.exited = true;
      }
    }
  }
  next.step_index = state.step_index + 1;
  next.terminal = out.exited || next.step_index >= spec.horizon;
  out.terminal = next.terminal;
  out.next_state = std::move(next);
  return out;
}

StepOutcome step_matrix(const GameSpec& spec, const JointState& state,
                        std::span<const int> actions) {
  const int n = spec.n_agents;
  StepOutcome out;
  out.env_rewards.assign(n, 0.0);
  if (spec.kind == GameKind::kPrisonersDilemma) {
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j != i) sum += ipd_pair_payoff(actions[i], actions[j]);
      }
      out.env_rewards[i] = sum / static_cast<double>(n - 1);
    }
  } else {
    const bool all_stag = std::all_of(actions.begin(), actions.end(),
                                      [](int a) { return a == kStag; });
    for (int i = 0; i < n; ++i) {
      if (actions[i] == kHare) {
        out.env_rewards[i] = kHarePayoff;
      } else {
        out.env_rewards[i] = all_stag ? kStagPayoff : kFailedStagPayoff;
      }
    }
  }
  JointState next = state;
  next.last_actions.assign(actions.begin(), actions.end());
  next.initial = false;
  next.step_index = state.step_index + 1;
  next.terminal = next.step_index >= spec.horizon;
  out.terminal = next.terminal;
  out.next_state = std::move(next);
  return out;
}

}  // namespace

StepOutcome step(const GameSpec& spec, const JointState& state,
                 std::span<const int> actions) {
  DF_REQUIRE(!state.terminal, "env::step called on a terminal state");
  DF_REQUIRE(static_cast<int>(actions.size()) == spec.n_agents,
             "env::step: joint action has wrong arity");
  const int n_act = num_actions(spec);
  for (int a : actions) {
    DF_REQUIRE(a >= 0 && a < n_act, "env::step: action out of range");
  }
  if (spec.kind == GameKind::kEscapeRoom) {
    return step_escape_room(spec, state, actions);
  }
  return step_matrix(spec, state, actions);
}

std::vector<double> observe(const GameSpec& spec, const JointState& state,
                            int agent_id) {
  DF_REQUIRE(agent_id >= 0 && agent_id < spec.n_agents,
             "env::observe: agent id out of range");
  std::vector<double> obs(observation_size(spec), 0.0);
  if (spec.kind == GameKind::kEscapeRoom) {
    obs[state.positions[agent_id]] = 1.0;
    obs[3] = state.door_open ? 1.0 : 0.0;
    const int at_lever = static_cast<int>(
        std::count(state.positions.begin(), state.positions.end(), kLever));
    obs[4 + at_lever] = 1.0;
  } else {
    obs[state.initial ? 0 : joint_action_index(state.last_actions)] = 1.0;
  }
  return obs;
}

double success_rate(const GameSpec& spec,
                    std::span<const Transition> transitions) {
  if (transitions.empty()) return 0.0;
  switch (spec.kind) {
    case GameKind::kEscapeRoom:
      for (const auto& tr : transitions) {
        if (tr.outcome.exited) return 1.0;
      }
      return 0.0;
    case GameKind::kStagHunt: {
      double acc = 0.0;
      for (const auto& tr : transitions) {
        double team = 0.0;
        for (double r : tr.outcome.env_rewards) team += r;
        acc += team / static_cast<double>(spec.n_agents) / kStagPayoff;
      }
      return std::clamp(acc / static_cast<double>(transitions.size()), 0.0, 1.0);
    }
    case GameKind::kPrisonersDilemma: {
      int mutual = 0;
      for (const auto& tr : transitions) {
        if (std::all_of(tr.actions.begin(), tr.actions.end(),
                        [](int a) { return a == kCooperate; })) {
          ++mutual;
        }
      }
      return static_cast<double>(mutual) /
             static_cast<double>(transitions.size());
    }
  }
  return 0.0;
}

}  // namespace dilemma_forge::env
