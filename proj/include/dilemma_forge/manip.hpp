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

#ifndef DILEMMA_FORGE_MANIP_HPP_
#define DILEMMA_FORGE_MANIP_HPP_

#include <random>
#include <set>
#include <span>
#include <string>
#include <variant>

#include "dilemma_forge/admo_settings.hpp"
#include "dilemma_forge/env.hpp"
#include "dilemma_forge/trajectory.hpp"

namespace dilemma_forge::manip {

struct Honest {
  bool operator==(const Honest&) const = default;
};
// Learns from extrinsic reward only while still emitting incentives.
struct PartialComm {
  bool operator==(const PartialComm&) const = default;
};
// Adds a constant c to every other agent's learning reward each step.
struct FakeIncentive {
  double c = 50.0;
  bool operator==(const FakeIncentive&) const = default;
};
// Idles: never leaves its current position (Defect/Hare in matrix games).
struct Bypass {
  bool operator==(const Bypass&) const = default;
};
// Descends its own return instead of ascending it.
struct Reverse {
  bool operator==(const Reverse&) const = default;
};
struct Admo {
  admo::Settings settings;
  bool operator==(const Admo&) const = default;
};

using ManipulationMode =
    std::variant<Honest, PartialComm, FakeIncentive, Bypass, Reverse, Admo>;

std::string mode_name(const ManipulationMode& mode);
bool is_adversarial(const ManipulationMode& mode);

// Throws ConfigError. Fake incentives must dominate both the incentive bound
// and the largest extrinsic reward; Bypass outside Escape Room is gated.
void validate_mode(const ManipulationMode& mode, const env::GameSpec& spec,
                   double r_max, bool allow_matrix_bypass);

// The per-step reward agent j learns from, given everyone's modes.
double select_reward(std::span<const ManipulationMode> modes,
                     const lio::RewardBreakdown& breakdown, int j);

// Constant per-step bonus j receives from fake-incentive senders.
double fake_bonus(std::span<const ManipulationMode> modes, int j);

// The action Bypass takes from this observation: stay put in Escape Room,
// Defect/Hare in matrix games.
int idle_action(const env::GameSpec& spec, std::span<const double> obs);

// Samples from `probs` unless the mode idles.
int select_action(const ManipulationMode& mode, const env::GameSpec& spec,
                  std::span<const double> obs, std::span<const double> probs,
                  std::mt19937_64& rng);

int sample_categorical(std::span<const double> probs, std::mt19937_64& rng);

// -1 for Reverse, +1 otherwise.
double update_direction(const ManipulationMode& mode);

// Does the agent update its policy through the recipient rule at all?
bool learns_policy_by_reinforce(const ManipulationMode& mode);
// Is its incentive head trained by the honest giver rule?
bool trains_incentives_honestly(const ManipulationMode& mode);

// Escape Room: can the agents outside `idle_set` still open the door and
// leave? Needs M lever pullers plus one agent to walk out.
bool coalition_feasible(const env::GameSpec& spec,
                        const std::set<int>& idle_set);

}  // namespace dilemma_forge::manip

#endif  // DILEMMA_FORGE_MANIP_HPP_
