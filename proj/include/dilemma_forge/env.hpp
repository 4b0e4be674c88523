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

#ifndef DILEMMA_FORGE_ENV_HPP_
#define DILEMMA_FORGE_ENV_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dilemma_forge::env {

enum class GameKind { kEscapeRoom, kPrisonersDilemma, kStagHunt };

std::string to_string(GameKind kind);
GameKind game_kind_from_string(const std::string& name);

// Escape Room positions double as its actions: choosing your current
// position is the free no-op.
enum ErPosition : int { kStart = 0, kLever = 1, kDoor = 2 };
inline constexpr int kCooperate = 0;
inline constexpr int kDefect = 1;
inline constexpr int kStag = 0;
inline constexpr int kHare = 1;

inline constexpr double kMovementCost = -1.0;
inline constexpr double kExitReward = 10.0;
inline constexpr double kStagPayoff = 5.0;
inline constexpr double kHarePayoff = 1.0;
inline constexpr double kFailedStagPayoff = 0.0;
inline constexpr int kMaxMatrixPlayers = 4;

struct GameSpec {
  GameKind kind = GameKind::kEscapeRoom;
  int n_agents = 2;
  int er_threshold = 1;  // M, Escape Room only
  int horizon = 5;
  double discount = 0.99;

  bool operator==(const GameSpec&) const = default;
};

// Throws ConfigError naming the offending field.
void validate(const GameSpec& spec);

int num_actions(const GameSpec& spec);
int observation_size(const GameSpec& spec);
// Escape Room: maximal single-step env reward; used by fake-incentive checks.
double max_env_reward(const GameSpec& spec);

struct JointState {
  // Escape Room positions, one per agent.
  std::vector<int> positions;
  bool door_open = false;
  // Matrix games: the previous joint action, meaningless while `initial`.
  std::vector<int> last_actions;
  bool initial = true;
  int step_index = 0;
  bool terminal = false;

  bool operator==(const JointState&) const = default;
};

struct StepOutcome {
  JointState next_state;
  std::vector<double> env_rewards;
  bool terminal = false;
  // Escape Room: someone walked out through the open door this step.
  bool exited = false;
};

// The seed is accepted for interface symmetry; every game here starts from a
// fixed initial state.
JointState reset(const GameSpec& spec, std::uint64_t seed = 0);

StepOutcome step(const GameSpec& spec, const JointState& state,
                 std::span<const int> actions);

std::vector<double> observe(const GameSpec& spec, const JointState& state,
                            int agent_id);

// Index of a matrix-game joint action inside the one-hot observation
// (0 is the initial marker). Agent 0 is the most significant bit.
int joint_action_index(std::span<const int> actions);

// Pairwise Table payoff for the row player.
double ipd_pair_payoff(int own, int other);

struct Transition {
  std::vector<int> actions;
  StepOutcome outcome;
};

// ER: 1 if anyone exited. Stag Hunt: mean per-step team reward over the stag
// payoff, clamped to [0, 1]. IPD: fraction of fully cooperative steps.
double success_rate(const GameSpec& spec,
                    std::span<const Transition> transitions);

}  // namespace dilemma_forge::env

#endif  // DILEMMA_FORGE_ENV_HPP_
