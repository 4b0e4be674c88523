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


#include "dilemma_forge/manip.hpp"

#include <algorithm>
#include <sstream>

#include "dilemma_forge/error.hpp"

namespace dilemma_forge::manip {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

std::string mode_name(const ManipulationMode& mode) {
  return std::visit(
      Overloaded{[](const Honest&) { return std::string("honest"); },
                 [](const PartialComm&) { return std::string("partial_comm"); },
                 [](const FakeIncentive&) {
                   return std::string("fake_incentive");
                 },
                 [](const Bypass&) { return std::string("bypass"); },
                 [](const Reverse&) { return std::string("reverse"); },
                 [](const Admo&) { return std::string("admo"); }},
      mode);
}

bool is_adversarial(const ManipulationMode& mode) {
  return !std::holds_alternative<Honest>(mode);
}

void validate_mode(const ManipulationMode& mode, const env::GameSpec& spec,
                   double r_max, bool allow_matrix_bypass) {
  if (const auto* fake = std::get_if<FakeIncentive>(&mode)) {
    const double floor = std::max(r_max, env::max_env_reward(spec));
    if (!(fake->c > floor)) {
      std::ostringstream msg;
      msg << "c must exceed both r_max and the largest env "
             "reward ("
          << floor << "), got " << fake->c;
      throw ConfigError(msg.str());
    }
  }
  if (std::holds_alternative<Bypass>(mode) &&
      spec.kind != env::GameKind::kEscapeRoom && !allow_matrix_bypass) {
    throw ConfigError(
        "mode: bypass outside Escape Room requires allow_matrix_bypass");
  }
  if (const auto* admo = std::get_if<Admo>(&mode)) admo->settings.validate();
}

double fake_bonus(std::span<const ManipulationMode> modes, int j) {
  double bonus = 0.0;
  for (int i = 0; i < static_cast<int>(modes.size()); ++i) {
    if (i == j) continue;
    if (const auto* fake = std::get_if<FakeIncentive>(&modes[i])) {
      bonus += fake->c;
    }
  }
  return bonus;
}

double select_reward(std::span<const ManipulationMode> modes,
                     const lio::RewardBreakdown& breakdown, int j) {
  DF_REQUIRE(static_cast<int>(modes.size()) == breakdown.n_agents(),
             "select_reward: one mode per agent required");
  if (std::holds_alternative<PartialComm>(modes[j])) return breakdown.env[j];
  return lio::total_reward(breakdown, j) + fake_bonus(modes, j);
}

int idle_action(const env::GameSpec& spec, std::span<const double> obs) {
  switch (spec.kind) {
    case env::GameKind::kEscapeRoom: {
      DF_REQUIRE(obs.size() >= 3, "idle_action: observation too short");
      return static_cast<int>(std::max_element(obs.begin(), obs.begin() + 3) -
                              obs.begin());
    }
    case env::GameKind::kPrisonersDilemma:
      return env::kDefect;
    case env::GameKind::kStagHunt:
      return env::kHare;
  }
  return 0;
}

int sample_categorical(std::span<const double> probs, std::mt19937_64& rng) {
  DF_REQUIRE(!probs.empty(), "sample_categorical: empty distribution");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    acc += probs[a];
    if (u < acc) return static_cast<int>(a);
  }
  return static_cast<int>(probs.size()) - 1;
}

int select_action(const ManipulationMode& mode, const env::GameSpec& spec,
                  std::span<const double> obs, std::span<const double> probs,
                  std::mt19937_64& rng) {
  if (std::holds_alternative<Bypass>(mode)) return idle_action(spec, obs);
  return sample_categorical(probs, rng);
}

double update_direction(const ManipulationMode& mode) {
  return std::holds_alternative<Reverse>(mode) ? -1.0 : 1.0;
}

bool learns_policy_by_reinforce(const ManipulationMode& mode) {
  return !std::holds_alternative<Bypass>(mode) &&
         !std::holds_alternative<Admo>(mode);
}

bool trains_incentives_honestly(const ManipulationMode& mode) {
  return !std::holds_alternative<Admo>(mode);
}

bool coalition_feasible(const env::GameSpec& spec,
                        const std::set<int>& idle_set) {
  DF_REQUIRE(spec.kind == env::GameKind::kEscapeRoom,
             "coalition_feasible: Escape Room only");
  for (int i : idle_set) {
    DF_REQUIRE(i >= 0 && i < spec.n_agents,
               "coalition_feasible: idle agent out of range");
  }
  const int active = spec.n_agents - static_cast<int>(idle_set.size());
  return active >= spec.er_threshold + 1;
}

}  // namespace dilemma_forge::manip
