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

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "dilemma_forge/admo.hpp"
#include "dilemma_forge/error.hpp"
#include "dilemma_forge/lio.hpp"
#include "oracles.hpp"

namespace dilemma_forge::admo {
namespace {

double dot(const std::vector<double>& x, const std::vector<double>& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

double norm_at(double a1, double q11, double q12, double q22) {
  const double a2 = 1.0 - a1;
  return std::sqrt(std::max(0.0, a1 * a1 * q11 + 2 * a1 * a2 * q12 + a2 * a2 * q22));
}

// Grid search over the feasible segment with step 1e-4, endpoints included.
double grid_min_norm(const std::vector<double>& g1,
                     const std::vector<double>& g2, const Floors& f) {
  const double q11 = dot(g1, g1), q12 = dot(g1, g2), q22 = dot(g2, g2);
  const double lo = f.c1, hi = 1.0 - f.c2;
  double best = std::min(norm_at(lo, q11, q12, q22), norm_at(hi, q11, q12, q22));
  const long steps = static_cast<long>(std::floor((hi - lo) / 1e-4));
  for (long k = 0; k <= steps; ++k) {
    best = std::min(best, norm_at(lo + 1e-4 * k, q11, q12, q22));
  }
  return best;
}

TEST_CASE("solver matches grid search and keeps weights valid") {
  std::mt19937_64 rng(2026);
  std::uniform_int_distribution<int> dim(1, 32);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 0.45);
  int interior = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = dim(rng);
    std::vector<double> g1(d), g2(d);
    const double s1 = std::exp(nd(rng)), s2 = std::exp(nd(rng));
    for (int i = 0; i < d; ++i) {
      g1[i] = s1 * nd(rng);
      g2[i] = s2 * nd(rng);
    }
    // Bias some pairs towards conflict so interior optima are common.
    if (trial % 3 == 0) {
      for (int i = 0; i < d; ++i) g2[i] -= 0.8 * g1[i];
    }
    const Floors f = trial % 2 ? Floors{0.1, 0.1} : Floors{ud(rng), ud(rng)};
    const ParetoWeights w = solve_pareto_weights(g1, g2, f);
    CHECK(w.alpha1 + w.alpha2 == 1.0);
    CHECK(w.alpha1 >= f.c1 - 1e-12);
    CHECK(w.alpha2 >= f.c2 - 1e-12);
    const auto gs = combine(w, g1, g2);
    const double achieved = std::sqrt(dot(gs, gs));
    CHECK(achieved <= grid_min_norm(g1, g2, f) + 1e-6);

    const bool strictly_inside =
        w.alpha1 > f.c1 + 1e-9 && w.alpha2 > f.c2 + 1e-9;
    if (strictly_inside) {
      ++interior;
      const double n2 = dot(gs, gs);
      CHECK(dot(g1, gs) >= n2 - 1e-8);
      CHECK(dot(g2, gs) >= n2 - 1e-8);
    }
  }
  CHECK(interior > 100);
}

TEST_CASE("solver examples") {
  const Floors f{0.1, 0.1};
  SUBCASE("antipodal") {
    const std::vector<double> g1{1.0, -2.0, 0.5};
    const std::vector<double> g2{-1.0, 2.0, -0.5};
    const auto w = solve_pareto_weights(g1, g2, f);
    CHECK(w.alpha1 == doctest::Approx(0.5).epsilon(1e-12));
    for (double x : combine(w, g1, g2)) CHECK(std::abs(x) <= 1e-12);
  }
  SUBCASE("orthogonal with norms 1 and 2") {
    const std::vector<double> g1{1.0, 0.0};
    const std::vector<double> g2{0.0, 2.0};
    const auto w = solve_pareto_weights(g1, g2, f);
    CHECK(w.alpha1 == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(w.alpha2 == doctest::Approx(0.2).epsilon(1e-12));
    CHECK_FALSE(w.degenerate);
  }
  SUBCASE("identical gradients are degenerate") {
    const std::vector<double> g{0.3, -0.7};
    const auto w = solve_pareto_weights(g, g, Floors{0.1, 0.3});
    CHECK(w.degenerate);
    CHECK(w.alpha1 == doctest::Approx(0.4));
    CHECK(w.alpha1 + w.alpha2 == 1.0);
  }
  SUBCASE("zero gradients are degenerate") {
    const std::vector<double> z{0.0, 0.0};
    const auto w = solve_pareto_weights(z, z, f);
    CHECK(w.degenerate);
    CHECK(w.alpha1 == 0.5);
  }
  SUBCASE("parallel gradients of different length pick the shorter end") {
    const std::vector<double> g1{1.0, 1.0};
    const std::vector<double> g2{3.0, 3.0};
    const auto w = solve_pareto_weights(g1, g2, f);
    CHECK(w.alpha1 == doctest::Approx(0.9));
  }
  SUBCASE("combine") {
    const std::vector<double> g1{1.0, 2.0};
    const std::vector<double> g2{5.0, -1.0};
    CHECK(combine({1.0, 0.0, false}, g1, g2) == g1);
  }
  CHECK_THROWS_AS(solve_pareto_weights(std::vector<double>{1.0},
                                       std::vector<double>{1.0, 2.0}, f),
                  ContractViolation);
}

TEST_CASE("floor updates") {
  Settings st;
  State s;
  s.ema_success_prev = 0.4;
  s.ema_success = 0.5;
  s.ema_incentive_variance = 0.0;
  CHECK(update_floors(s, st) == Floors{0.1, 0.1});

  s.ema_success_prev = 0.6;
  s.ema_success = 0.4;
  const Floors stalled = update_floors(s, st);
  CHECK(stalled.c2 == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(stalled.c1 == 0.1);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 10000; ++k) {
    s.ema_success_prev = u(rng);
    s.ema_success = u(rng);
    s.ema_incentive_variance = std::abs(u(rng));
    const Floors f = update_floors(s, st);
    CHECK(f.c1 + f.c2 <= st.floor_sum_cap + 1e-12);
    CHECK(f.c1 >= st.c_init.c1);
    CHECK(f.c2 >= st.c_init.c2);
    CHECK(f.c1 <= st.floor_cap);
    CHECK(f.c2 <= st.floor_cap);
  }
}

TEST_CASE("proxy divergence") {
  nn::ParamVector ref = nn::make_layout({1, {}, 2, nn::HeadKind::kSoftmax, 2.0});
  nn::ParamVector th = ref;
  CHECK(proxy_divergence(th, ref) == 0.0);
  th.values[0] = 0.3;
  th.values[1] = -0.4;
  CHECK(proxy_divergence(th, ref) == doctest::Approx(0.125).epsilon(1e-15));
}

TEST_CASE("updates are clipped and follow AdamW exactly") {
  Settings st;
  State s;
  s.adam_m.assign(3, 0.0);
  s.adam_v.assign(3, 0.0);
  std::vector<double> omega{0.5, -1.0, 2.0};
  const std::vector<double> g{30.0, -40.0, 0.0};  // norm 50, clipped to 1
  const double sn = apply_update(s, omega, g, st);
  // First AdamW step: m_hat = g_c, v_hat = g_c^2, so step = -lr(sign + wd*w).
  const std::vector<double> gc{0.6, -0.8, 0.0};
  const std::vector<double> w0{0.5, -1.0, 2.0};
  for (int i = 0; i < 3; ++i) {
    const double adam = gc[i] / (std::abs(gc[i]) + st.epsilon);
    const double expect = w0[i] - st.lr * (adam + st.weight_decay * w0[i]);
    CHECK(omega[i] == doctest::Approx(expect).epsilon(1e-15));
  }
  CHECK(sn <= st.clip_norm + 1e-12);
  CHECK(s.adam_steps == 1);

  // A large learning rate triggers the committed-step clip.
  Settings big = st;
  big.lr = 10.0;
  State s2;
  s2.adam_m.assign(3, 0.0);
  s2.adam_v.assign(3, 0.0);
  std::vector<double> w{0.0, 0.0, 0.0};
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 5.0);
  for (int k = 0; k < 100; ++k) {
    const std::vector<double> before = w;
    const std::vector<double> gk{nd(rng), nd(rng), nd(rng)};
    const double step = apply_update(s2, w, gk, big);
    double moved = 0.0;
    for (int i = 0; i < 3; ++i) moved += (w[i] - before[i]) * (w[i] - before[i]);
    CHECK(std::sqrt(moved) <= 1.0 + 1e-12);
    CHECK(step <= 1.0 + 1e-12);
  }
}

// A one-step, zero-reward episode with the adversary's emission switched
// off: every term of both losses vanishes.
lio::Batch quiet_batch(const lio::Team& team) {
  const int n = team.n_agents();
  lio::Trajectory tr;
  tr.discount = team.spec.discount;
  lio::Step st;
  st.state = env::reset(team.spec);
  for (int i = 0; i < n; ++i) st.observations.push_back(env::observe(team.spec, st.state, i));
  st.actions.assign(n, 0);
  st.rewards = lio::RewardBreakdown::zeros(n);
  st.incentive_inputs.assign(n, std::vector<double>(team.agents[0].eta.layout[0].cols, 0.0));
  st.emission_active.assign(n, 0);
  st.terminal = true;
  tr.steps.push_back(st);
  tr.scores.resize(n);
  for (int i = 0; i < n; ++i) {
    tr.scores[i].push_back(nn::score(team.agents[i].theta, st.observations[i], 0));
  }
  return lio::Batch::uniform({tr});
}

lio::Team admo_ipd_team(const Settings& settings) {
  lio::Team team = testing::small_ipd_team(2, 3);
  team.agents[0].mode = manip::Admo{settings};
  return team;
}

TEST_CASE("zero combined gradient skips the update") {
  Settings st;
  st.lambda_d = 0.0;
  lio::Team team = admo_ipd_team(st);
  State s = State::init(st, team.agents[0].theta, team.agents[0].eta);
  const auto theta0 = team.agents[0].theta.values;
  const auto eta0 = team.agents[0].eta.values;
  const lio::Batch batch = quiet_batch(team);
  const AuditRow row = admo_step(s, team, st, {&batch, 0, 0.0, lio::Baseline::kNone});
  CHECK(row.skipped);
  CHECK(row.g_norm == 0.0);
  CHECK(row.k == 1);
  CHECK(s.k == 1);
  CHECK(s.adam_steps == 0);
  CHECK(team.agents[0].theta.values == theta0);
  CHECK(team.agents[0].eta.values == eta0);
}

TEST_CASE("reference refresh raises lambda_d on large drift") {
  Settings st;
  st.lambda_d = 0.0;
  st.k_ref = 3;
  lio::Team team = admo_ipd_team(st);
  State s = State::init(st, team.agents[0].theta, team.agents[0].eta);
  const lio::Batch batch = quiet_batch(team);
  const StepInputs in{&batch, 0, 0.0, lio::Baseline::kNone};

  SUBCASE("drift 0.7 triggers the override") {
    s.theta_ref.values[0] -= std::sqrt(1.4);  // D_proxy = 0.7
    s.k = 2;
    // lambda_d is 0 so the drift adds no gradient and theta stays put.
    const AuditRow row = admo_step(s, team, st, in);
    CHECK(row.k == 3);
    CHECK(row.refreshed);
    CHECK(row.d_proxy == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(s.lambda_d == 0.05);
    CHECK(s.theta_ref.values == team.agents[0].theta.values);
    // The raised weight holds for the next k_ref iterations, then reverts.
    CHECK(admo_step(s, team, st, in).lambda_d == 0.05);
    CHECK(admo_step(s, team, st, in).lambda_d == 0.05);
    CHECK(s.lambda_d == 0.05);
    const AuditRow last = admo_step(s, team, st, in);
    CHECK(last.lambda_d == 0.05);
    CHECK(last.refreshed);
    CHECK(s.lambda_d == 0.0);
  }
  SUBCASE("drift 0.3 refreshes without override") {
    s.theta_ref.values[0] -= std::sqrt(0.6);
    s.k = 2;
    const AuditRow row = admo_step(s, team, st, in);
    CHECK(row.refreshed);
    CHECK(row.d_proxy == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(s.lambda_d == 0.0);
  }
  SUBCASE("no refresh off the period") {
    s.theta_ref.values[0] -= std::sqrt(1.4);
    const AuditRow row = admo_step(s, team, st, in);
    CHECK_FALSE(row.refreshed);
    CHECK(s.theta_ref.values != team.agents[0].theta.values);
  }
}

lio::Team admo_er_team(int n, int m, const Settings& settings) {
  lio::Team team;
  team.spec = {env::GameKind::kEscapeRoom, n, m, 5, 0.99};
  const int obs = env::observation_size(team.spec);
  for (int i = 0; i < n; ++i) {
    lio::AgentBundle b;
    b.theta = nn::init_params({obs, {8}, 3, nn::HeadKind::kSoftmax, 2.0}, 30 + i);
    b.eta = nn::init_params(
        {obs + 3 * (n - 1), {8}, n - 1, nn::HeadKind::kBoundedIncentive, 2.0},
        60 + i);
    if (i == 0) b.mode = manip::Admo{settings};
    team.agents.push_back(std::move(b));
  }
  return team;
}

TEST_CASE("budget caps the adversary's emissions") {
  Settings st;
  SUBCASE("zero budget zeroes every emission") {
    st.budget = 0.0;
    const lio::Team team = admo_er_team(3, 1, st);
    std::mt19937_64 rng(3);
    const auto batch = lio::rollout_batch(team, team.thetas(), 100, rng);
    for (const auto& ep : batch.episodes) {
      for (const auto& s : ep.steps) {
        for (double x : s.rewards.incentives[0]) CHECK(x == 0.0);
        CHECK_FALSE(s.emission_active[0]);
      }
    }
  }
  SUBCASE("positive budget overshoots by at most one step") {
    st.budget = 1.5;
    const lio::Team team = admo_er_team(3, 1, st);
    std::mt19937_64 rng(4);
    const auto batch = lio::rollout_batch(team, team.thetas(), 200, rng);
    for (const auto& ep : batch.episodes) {
      double spent = 0.0;
      for (const auto& s : ep.steps) {
        for (double x : s.rewards.incentives[0]) spent += x;
      }
      CHECK(spent <= st.budget + 2 * team.r_max);
    }
  }
}

// A one-step episode with chosen rewards, for the loss examples.
lio::Batch one_step_batch(const lio::Team& team, std::vector<double> env_r,
                          std::vector<std::vector<double>> inc,
                          std::vector<char> active) {
  lio::Batch b = quiet_batch(team);
  auto& st = b.episodes[0].steps[0];
  st.rewards.env = std::move(env_r);
  st.rewards.incentives = std::move(inc);
  st.emission_active = std::move(active);
  return b;
}

TEST_CASE("loss examples") {
  Settings settings;
  const lio::Team team = admo_ipd_team(settings);
  SUBCASE("symmetric rewards leave only the cost") {
    const auto b = one_step_batch(team, {-1.0, -1.0}, {{0.0, 0.5}, {0.5, 0.0}},
                                  {1, 1});
    const auto v = loss_inc(team, b, 0, 0.01, lio::Baseline::kNone);
    CHECK(v.value == doctest::Approx(0.01 * 0.5).epsilon(1e-15));
  }
  SUBCASE("no emission and no cost weight gives no eta gradient") {
    const auto b = one_step_batch(team, {-1.0, -3.0}, {{0.0, 0.0}, {1.2, 0.0}},
                                  {0, 1});
    const auto v = loss_inc(team, b, 0, 0.0, lio::Baseline::kNone);
    CHECK(v.grad.eta.norm() == 0.0);
  }
  SUBCASE("welfare sign flips and the drift term does not") {
    const auto b = one_step_batch(team, {-1.0, -3.0}, {{0.0, 0.4}, {1.2, 0.0}},
                                  {1, 1});
    nn::ParamVector ref = team.agents[0].theta;
    ref.values[0] += 0.6;
    const double d = proxy_divergence(team.agents[0].theta, ref);
    const auto up = loss_pol(team, b, 0, ref, 1.0, 0.02, lio::Baseline::kNone);
    const auto down = loss_pol(team, b, 0, ref, -1.0, 0.02, lio::Baseline::kNone);
    CHECK(up.value + down.value == doctest::Approx(2 * 0.02 * d).epsilon(1e-14));
    CHECK(up.value - down.value == doctest::Approx(2 * 2.4).epsilon(1e-14));
    for (std::size_t i = 0; i < up.grad.eta.size(); ++i) {
      CHECK(up.grad.eta.values[i] == -down.grad.eta.values[i]);
    }
    const auto at_ref = loss_pol(team, b, 0, team.agents[0].theta, 1.0, 0.02,
                                 lio::Baseline::kNone);
    const auto no_drift = loss_pol(team, b, 0, team.agents[0].theta, 1.0, 0.0,
                                   lio::Baseline::kNone);
    CHECK(at_ref.grad.theta.values == no_drift.grad.theta.values);
  }
  CHECK_THROWS_AS(loss_inc(team, quiet_batch(team), 5, 0.0, lio::Baseline::kNone),
                  ContractViolation);
}

// Exact loss as a function of omega, by full enumeration.
template <typename LossFn>
std::vector<double> fd_omega(lio::Team team, LossFn loss) {
  std::vector<double> g;
  auto eval = [&](const lio::Team& t) {
    return loss(t, lio::enumerate_batch(t, t.thetas())).value;
  };
  for (nn::ParamVector* p : {&team.agents[0].theta, &team.agents[0].eta}) {
    for (std::size_t k = 0; k < p->size(); ++k) {
      const double saved = p->values[k];
      p->values[k] = saved + 1e-5;
      const double up = eval(team);
      p->values[k] = saved - 1e-5;
      const double down = eval(team);
      p->values[k] = saved;
      g.push_back((up - down) / 2e-5);
    }
  }
  return g;
}

TEST_CASE("loss gradients match finite differences of the exact losses") {
  Settings settings;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    lio::Team team = testing::small_ipd_team(2, seed);
    team.agents[0].mode = manip::Admo{settings};
    nn::ParamVector ref = team.agents[0].theta;
    for (double& x : ref.values) x += 0.1;

    auto inc = [](const lio::Team& t, const lio::Batch& b) {
      return loss_inc(t, b, 0, 0.05, lio::Baseline::kNone);
    };
    auto pol = [&ref](const lio::Team& t, const lio::Batch& b) {
      return loss_pol(t, b, 0, ref, -1.0, 0.03, lio::Baseline::kNone);
    };
    const auto exact = lio::enumerate_batch(team, team.thetas());
    CHECK(testing::rel_err(inc(team, exact).grad.flat(), fd_omega(team, inc)) <= 1e-6);
    CHECK(testing::rel_err(pol(team, exact).grad.flat(), fd_omega(team, pol)) <= 1e-6);
  }
}

TEST_CASE("sampled incentive loss agrees with exact enumeration") {
  Settings settings;
  lio::Team team = testing::small_ipd_team(2, 7);
  team.agents[0].mode = manip::Admo{settings};
  const double exact =
      loss_inc(team, lio::enumerate_batch(team, team.thetas()), 0, 0.05,
               lio::Baseline::kNone).value;
  std::mt19937_64 rng(77);
  constexpr int kEpisodes = 200000;
  double s1 = 0.0, s2 = 0.0;
  for (int e = 0; e < kEpisodes; ++e) {
    const auto tr = lio::rollout_episode(team, team.thetas(), rng);
    const double v =
        loss_inc(team, lio::Batch::uniform({tr}), 0, 0.05, lio::Baseline::kNone).value;
    s1 += v;
    s2 += v * v;
  }
  const double mean = s1 / kEpisodes;
  const double se = std::sqrt((s2 / kEpisodes - mean * mean) / kEpisodes);
  CHECK(std::abs(mean - exact) <= 3.0 * se);
}

TEST_CASE("settings validation") {
  Settings st;
  CHECK_NOTHROW(st.validate());
  Settings bad = st;
  bad.s = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = st;
  bad.c_init = {0.5, 0.5};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = st;
  bad.k_ref = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = st;
  bad.budget = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

}  // namespace
}  // namespace dilemma_forge::admo
