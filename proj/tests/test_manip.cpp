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

#include <array>
#include <random>
#include <set>
#include <vector>

#include "doctest.h"
#include "dilemma_forge/error.hpp"
#include "dilemma_forge/lio.hpp"
#include "dilemma_forge/manip.hpp"
#include "oracles.hpp"

namespace dilemma_forge::manip {
namespace {

using lio::RewardBreakdown;

lio::Team er_team(int n, int m, std::vector<ManipulationMode> modes,
                  std::uint64_t seed) {
  lio::Team team;
  team.spec = {env::GameKind::kEscapeRoom, n, m, 5, 0.99};
  const int obs = env::observation_size(team.spec);
  for (int i = 0; i < n; ++i) {
    lio::AgentBundle b;
    b.theta = nn::init_params({obs, {8}, 3, nn::HeadKind::kSoftmax, 2.0},
                              seed + 2 * i);
    b.eta = nn::init_params(
        {obs + 3 * (n - 1), {8}, n - 1, nn::HeadKind::kBoundedIncentive, 2.0},
        seed + 2 * i + 1);
    b.mode = modes[i];
    team.agents.push_back(std::move(b));
  }
  return team;
}

TEST_CASE("select_reward examples") {
  RewardBreakdown rb = RewardBreakdown::zeros(2);
  rb.env = {-1.0, -1.0};
  rb.incentives[1][0] = 1.7;
  const std::vector<ManipulationMode> pc{PartialComm{}, Honest{}};
  CHECK(select_reward(pc, rb, 0) == -1.0);

  rb.incentives[1][0] = 0.3;
  const std::vector<ManipulationMode> fake{Honest{}, FakeIncentive{50.0}};
  CHECK(select_reward(fake, rb, 0) == doctest::Approx(49.3).epsilon(1e-15));
  // The sender itself gets no bonus from its own constant.
  CHECK(select_reward(fake, rb, 1) == -1.0);

  const std::vector<ManipulationMode> honest{Honest{}, Honest{}};
  for (int j = 0; j < 2; ++j) {
    CHECK(select_reward(honest, rb, j) == lio::total_reward(rb, j));
  }
  const std::vector<ManipulationMode> others{Reverse{}, Bypass{}};
  for (int j = 0; j < 2; ++j) {
    CHECK(select_reward(others, rb, j) == lio::total_reward(rb, j));
  }
}

TEST_CASE("fake bonuses add up per sender") {
  const std::vector<ManipulationMode> modes{FakeIncentive{50.0}, Honest{},
                                            FakeIncentive{20.0}};
  CHECK(fake_bonus(modes, 1) == 70.0);
  CHECK(fake_bonus(modes, 0) == 20.0);
  CHECK(fake_bonus(modes, 2) == 50.0);
}

TEST_CASE("update directions") {
  CHECK(update_direction(Reverse{}) == -1.0);
  CHECK(update_direction(Honest{}) == 1.0);
  CHECK(update_direction(PartialComm{}) == 1.0);
  CHECK(update_direction(FakeIncentive{}) == 1.0);
  CHECK(update_direction(Bypass{}) == 1.0);
}

TEST_CASE("mode validation") {
  const env::GameSpec er21{env::GameKind::kEscapeRoom, 2, 1, 5, 0.99};
  const env::GameSpec ipd{env::GameKind::kPrisonersDilemma, 2, 1, 5, 0.99};
  CHECK_NOTHROW(validate_mode(FakeIncentive{50.0}, er21, 2.0, false));
  CHECK_THROWS_AS(validate_mode(FakeIncentive{2.0}, er21, 2.0, false),
                  ConfigError);
  // Dominance must also beat the exit reward.
  CHECK_THROWS_AS(validate_mode(FakeIncentive{9.5}, er21, 2.0, false),
                  ConfigError);
  CHECK_THROWS_AS(validate_mode(Bypass{}, ipd, 2.0, false), ConfigError);
  CHECK_NOTHROW(validate_mode(Bypass{}, ipd, 2.0, true));
  CHECK_NOTHROW(validate_mode(Bypass{}, er21, 2.0, false));
}

TEST_CASE("coalition feasibility") {
  auto er = [](int n, int m) {
    return env::GameSpec{env::GameKind::kEscapeRoom, n, m, 5, 0.99};
  };
  CHECK(coalition_feasible(er(4, 2), {0}));
  CHECK_FALSE(coalition_feasible(er(2, 1), {0}));
  CHECK_FALSE(coalition_feasible(er(4, 3), {0}));

  for (int n = 2; n <= 6; ++n) {
    for (int m = 1; m < n; ++m) {
      for (int mask = 0; mask < (1 << n); ++mask) {
        std::set<int> idle;
        for (int i = 0; i < n; ++i) {
          if (mask & (1 << i)) idle.insert(i);
        }
        const bool expected = n - static_cast<int>(idle.size()) >= m + 1;
        CHECK(coalition_feasible(er(n, m), idle) == expected);
      }
    }
  }
  const env::GameSpec stag{env::GameKind::kStagHunt, 2, 1, 5, 0.99};
  CHECK_THROWS_AS(coalition_feasible(stag, {}), ContractViolation);
}

// Coalition oracle: search every joint action for one that exits while the
// idle agents stay at Start.
TEST_CASE("coalition predicate agrees with a one-step search") {
  for (int n = 2; n <= 4; ++n) {
    for (int m = 1; m < n; ++m) {
      const env::GameSpec spec{env::GameKind::kEscapeRoom, n, m, 5, 0.99};
      for (int mask = 0; mask < (1 << n); ++mask) {
        std::set<int> idle;
        for (int i = 0; i < n; ++i) {
          if (mask & (1 << i)) idle.insert(i);
        }
        bool reachable = false;
        int combos = 1;
        for (int i = 0; i < n; ++i) combos *= 3;
        for (int c = 0; c < combos && !reachable; ++c) {
          std::vector<int> a(n);
          int rest = c;
          bool ok = true;
          for (int i = 0; i < n; ++i) {
            a[i] = rest % 3;
            rest /= 3;
            if (idle.count(i) && a[i] != env::kStart) ok = false;
          }
          if (!ok) continue;
          reachable = env::step(spec, env::reset(spec), a).exited;
        }
        CHECK(coalition_feasible(spec, idle) == reachable);
      }
    }
  }
}

TEST_CASE("Bypass never moves and pays nothing") {
  const lio::Team team = er_team(3, 1, {Bypass{}, Honest{}, Honest{}}, 11);
  std::mt19937_64 rng(5);
  const auto batch = lio::rollout_batch(team, team.thetas(), 200, rng);
  for (const auto& ep : batch.episodes) {
    for (const auto& st : ep.steps) {
      CHECK(st.actions[0] == env::kStart);
      CHECK(st.rewards.env[0] == 0.0);
    }
  }
  const env::GameSpec ipd{env::GameKind::kPrisonersDilemma, 2, 1, 5, 0.99};
  const env::GameSpec stag{env::GameKind::kStagHunt, 2, 1, 5, 0.99};
  const std::vector<double> obs(5, 0.0);
  CHECK(idle_action(ipd, obs) == env::kDefect);
  CHECK(idle_action(stag, obs) == env::kHare);
  const std::vector<double> at_lever{0, 1, 0, 0, 0, 1, 0};
  CHECK(idle_action(env::GameSpec{env::GameKind::kEscapeRoom, 2, 1, 5, 0.99},
                    at_lever) == env::kLever);
}

TEST_CASE("policy sampling at zero weights is uniform") {
  const env::GameSpec spec{env::GameKind::kEscapeRoom, 2, 1, 5, 0.99};
  const auto obs = std::vector<double>(env::observation_size(spec), 0.0);
  const auto zero = nn::make_layout(
      {static_cast<int>(obs.size()), {8}, 3, nn::HeadKind::kSoftmax, 2.0});
  const auto probs = nn::policy_forward(zero, obs);
  std::mt19937_64 rng(99);
  constexpr int kDraws = 30000;
  std::array<int, 3> counts{};
  for (int k = 0; k < kDraws; ++k) {
    ++counts[select_action(Honest{}, spec, obs, probs, rng)];
  }
  double chi2 = 0.0;
  for (int c : counts) {
    const double e = kDraws / 3.0;
    chi2 += (c - e) * (c - e) / e;
  }
  // 99.9th percentile of chi-square with 2 degrees of freedom.
  CHECK(chi2 < 13.82);
}

TEST_CASE("PartialComm gradient ignores incentives addressed to it") {
  lio::Team team = er_team(2, 1, {PartialComm{}, Honest{}}, 3);
  std::mt19937_64 rng(8);
  const auto batch = lio::rollout_batch(team, team.thetas(), 16, rng);
  const auto reward = lio::learning_reward_fn(team.modes(), 0);
  const auto g = lio::batch_policy_gradient(0, batch, reward,
                                            lio::Baseline::kLeaveOneOut);
  auto tampered = batch;
  std::mt19937_64 noise(1);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (auto& ep : tampered.episodes) {
    for (auto& st : ep.steps) st.rewards.incentives[1][0] = u(noise);
  }
  const auto g2 = lio::batch_policy_gradient(0, tampered, reward,
                                             lio::Baseline::kLeaveOneOut);
  CHECK(g.values == g2.values);
  // The honest recipient does react to the change.
  const auto h = lio::learning_reward_fn(team.modes(), 1);
  auto tampered1 = batch;
  for (auto& ep : tampered1.episodes) {
    for (auto& st : ep.steps) st.rewards.incentives[0][1] += 0.5;
  }
  CHECK(lio::batch_policy_gradient(1, batch, h, lio::Baseline::kNone).values !=
        lio::batch_policy_gradient(1, tampered1, h, lio::Baseline::kNone).values);
}

// Exact discounted total return of agent 0 on the enumerable IPD, incentives
// from agent 1 included.
double exact_total_return(const lio::Team& team,
                          const std::vector<nn::ParamVector>& thetas) {
  return testing::exact_return(
      team.spec, thetas,
      [&](const env::JointState& s, const std::vector<int>& a,
          const env::StepOutcome& out) {
        const auto obs1 = env::observe(team.spec, s, 1);
        const std::vector<int> others{a[0]};
        const double inc =
            nn::incentive_forward(team.agents[1].eta, obs1, others, 2,
                                  team.r_max)[0];
        return out.env_rewards[0] + inc;
      });
}

TEST_CASE("Reverse updates never raise the exact return") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    lio::Team team = testing::small_ipd_team(2, seed);
    team.agents[0].mode = Reverse{};
    team.agents[0].lr_policy = 1e-3;
    const auto batch = lio::enumerate_batch(team, team.thetas());
    const auto theta_new = lio::recipient_update(
        0, team.agents[0], batch, lio::learning_reward_fn(team.modes(), 0),
        lio::Baseline::kNone);
    auto thetas = team.thetas();
    const double before = exact_total_return(team, thetas);
    thetas[0] = theta_new;
    const double after = exact_total_return(team, thetas);
    CHECK(after <= before + 1e-6);
    CHECK(after < before);

    team.agents[0].mode = Honest{};
    const auto theta_up = lio::recipient_update(
        0, team.agents[0], batch, lio::learning_reward_fn(team.modes(), 0),
        lio::Baseline::kNone);
    thetas[0] = theta_up;
    CHECK(exact_total_return(team, thetas) >= before - 1e-6);
  }
}

}  // namespace
}  // namespace dilemma_forge::manip
