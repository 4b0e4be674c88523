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


#include "dilemma_forge/admo.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "dilemma_forge/error.hpp"

namespace dilemma_forge::admo {

void Settings::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("admo." + field + " " + why);
  };
  if (s != 1.0 && s != -1.0) fail("s", "must be +1 or -1");
  if (!(beta_b >= 0.0)) fail("beta_b", "must be >= 0");
  if (!(lambda_d >= 0.0)) fail("lambda_d", "must be >= 0");
  if (!(lambda_override >= 0.0)) fail("lambda_override", "must be >= 0");
  if (!(c_init.c1 >= 0.0 && c_init.c2 >= 0.0)) fail("c_init", "must be >= 0");
  if (!(c_init.c1 <= floor_cap && c_init.c2 <= floor_cap)) {
    fail("c_init", "must not exceed floor_cap");
  }
  if (!(floor_cap <= 1.0)) fail("floor_cap", "must be <= 1");
  if (!(c_init.c1 + c_init.c2 <= floor_sum_cap)) {
    fail("c_init", "must sum to at most floor_sum_cap");
  }
  if (!(floor_sum_cap <= 1.0)) fail("floor_sum_cap", "must be <= 1");
  if (k_ref < 1) fail("k_ref", "must be >= 1");
  if (!(budget >= 0.0)) fail("budget", "must be >= 0");
  if (!(clip_norm > 0.0)) fail("clip_norm", "must be > 0");
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) fail("ema_decay", "must be in (0,1)");
  if (!(kappa >= 0.0)) fail("kappa", "must be >= 0");
  if (!(lr > 0.0)) fail("lr", "must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "must be in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "must be in [0,1)");
  if (!(epsilon > 0.0)) fail("epsilon", "must be > 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay", "must be >= 0");
}

std::vector<double> OmegaGrad::flat() const {
  std::vector<double> out;
  out.reserve(theta.size() + eta.size());
  out.insert(out.end(), theta.values.begin(), theta.values.end());
  out.insert(out.end(), eta.values.begin(), eta.values.end());
  return out;
}

double OmegaGrad::dot(const OmegaGrad& other) const {
  return theta.dot(other.theta) + eta.dot(other.eta);
}

double OmegaGrad::norm() const { return std::sqrt(dot(*this)); }

State State::init(const Settings& settings, const nn::ParamVector& theta,
                  const nn::ParamVector& eta) {
  State st;
  st.theta_ref = theta;
  st.floors = settings.c_init;
  st.lambda_d = settings.lambda_d;
  st.adam_m.assign(theta.size() + eta.size(), 0.0);
  st.adam_v.assign(theta.size() + eta.size(), 0.0);
  return st;
}

namespace {

// Score-function gradient of E[sum_t gamma^t r_t] for agent a.
nn::ParamVector score_term(const lio::Batch& batch, int a,
                           const lio::RewardFn& reward,
                           lio::Baseline baseline) {
  return lio::batch_policy_gradient(a, batch, reward, baseline);
}

// sum_e w_e sum_t gamma^t vjp(eta, input, per_slot) over emitting steps.
nn::ParamVector direct_eta_term(const lio::Team& team, const lio::Batch& batch,
                                int a, double per_slot) {
  const auto& eta = team.agents[a].eta;
  nn::ParamVector grad = eta.zeros_like();
  if (per_slot == 0.0) return grad;
  std::vector<double> cot(team.n_agents() - 1, 0.0);
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const auto& ep = batch.episodes[e];
    double disc = batch.weights[e] * per_slot;
    for (const auto& s : ep.steps) {
      if (s.emission_active[a]) {
        std::fill(cot.begin(), cot.end(), disc);
        nn::incentive_vjp_accumulate(eta, s.incentive_inputs[a], cot,
                                     team.r_max, grad);
      }
      disc *= ep.discount;
    }
  }
  return grad;
}

double margin(const lio::Step& s, int a) {
  const int n = s.rewards.n_agents();
  double others = 0.0;
  for (int j = 0; j < n; ++j) {
    if (j != a) others += lio::total_reward(s.rewards, j);
  }
  return lio::total_reward(s.rewards, a) - others / (n - 1);
}

double spend(const lio::Step& s, int a) {
  double acc = 0.0;
  for (int j = 0; j < s.rewards.n_agents(); ++j) {
    if (j != a) acc += s.rewards.incentives[a][j];
  }
  return acc;
}

double welfare(const lio::Step& s) {
  double acc = 0.0;
  for (int j = 0; j < s.rewards.n_agents(); ++j) {
    acc += lio::total_reward(s.rewards, j);
  }
  return acc;
}

double weighted_return(const lio::Batch& batch, const lio::RewardFn& reward) {
  double acc = 0.0;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    acc += batch.weights[e] * batch.episodes[e].discounted_return(reward);
  }
  return acc;
}

}  // namespace

LossValue loss_inc(const lio::Team& team, const lio::Batch& batch, int a,
                   double beta_b, lio::Baseline baseline) {
  const int n = team.n_agents();
  DF_REQUIRE(n >= 2, "loss_inc: needs at least two agents");
  DF_REQUIRE(a >= 0 && a < n, "loss_inc: adversary out of range");
  const lio::RewardFn per_step = [a, beta_b](const lio::Step& s) {
    return -margin(s, a) + beta_b * spend(s, a);
  };
  LossValue out;
  out.value = weighted_return(batch, per_step);
  out.grad.theta = score_term(batch, a, per_step, baseline);
  out.grad.eta = direct_eta_term(team, batch, a, 1.0 / (n - 1) + beta_b);
  return out;
}

double proxy_divergence(const nn::ParamVector& theta,
                        const nn::ParamVector& theta_ref) {
  DF_REQUIRE(theta.same_layout(theta_ref),
             "proxy_divergence: layout mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double d = theta.values[i] - theta_ref.values[i];
    acc += d * d;
  }
  return 0.5 * acc;
}

LossValue loss_pol(const lio::Team& team, const lio::Batch& batch, int a,
                   const nn::ParamVector& theta_ref, double s, double lambda_d,
                   lio::Baseline baseline) {
  DF_REQUIRE(a >= 0 && a < team.n_agents(), "loss_pol: adversary out of range");
  const auto& theta = team.agents[a].theta;
  const lio::RewardFn per_step = [s](const lio::Step& st) {
    return -s * welfare(st);
  };
  LossValue out;
  out.value = weighted_return(batch, per_step) +
              lambda_d * proxy_divergence(theta, theta_ref);
  out.grad.theta = score_term(batch, a, per_step, baseline);
  if (lambda_d != 0.0) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      out.grad.theta.values[i] +=
          lambda_d * (theta.values[i] - theta_ref.values[i]);
    }
  }
  out.grad.eta = direct_eta_term(team, batch, a, -s);
  return out;
}

namespace {

// Solves A y = b for 3x3 A by Gaussian elimination with partial pivoting.
std::array<double, 3> solve3(std::array<std::array<double, 3>, 3> A,
                             std::array<double, 3> b) {
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r) {
      if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
    }
    std::swap(A[col], A[piv]);
    std::swap(b[col], b[piv]);
    const double p = A[col][col];
    if (p == 0.0) continue;
    for (int r = col + 1; r < 3; ++r) {
      const double f = A[r][col] / p;
      for (int c = col; c < 3; ++c) A[r][c] -= f * A[col][c];
      b[r] -= f * b[col];
    }
  }
  std::array<double, 3> y{};
  for (int r = 2; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < 3; ++c) acc -= A[r][c] * y[c];
    y[r] = A[r][r] == 0.0 ? 0.0 : acc / A[r][r];
  }
  return y;
}

double dot(std::span<const double> x, std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

}  // namespace

ParetoWeights solve_pareto_weights(std::span<const double> g_inc,
                                   std::span<const double> g_pol,
                                   const Floors& floors) {
  DF_REQUIRE(g_inc.size() == g_pol.size(),
             "solve_pareto_weights: dimension mismatch");
  DF_REQUIRE(floors.c1 >= 0.0 && floors.c2 >= 0.0 &&
                 floors.c1 + floors.c2 <= 1.0,
             "solve_pareto_weights: infeasible floors");
  const double lo = floors.c1;
  const double hi = 1.0 - floors.c2;
  double q11 = dot(g_inc, g_inc);
  double q22 = dot(g_pol, g_pol);
  const double q12 = dot(g_inc, g_pol);
  // ||g1 - g2||^2 is the curvature along the segment.
  const double curvature = q11 + q22 - 2.0 * q12;
  const double scale = std::max(q11, q22);
  ParetoWeights w;
  if (scale == 0.0 || curvature <= 1e-14 * scale) {
    w.degenerate = true;
    w.alpha1 = 0.5 * (lo + hi);
    w.alpha2 = 1.0 - w.alpha1;
    return w;
  }
  if (std::abs(q11 * q22 - q12 * q12) <= 1e-12 * scale * scale) {
    q11 += 1e-10;
    q22 += 1e-10;
  }
  // alpha = c + x; M [x; lambda] = [-Q c; 1 - e^T c].
  const std::array<std::array<double, 3>, 3> M = {
      {{q11, q12, 1.0}, {q12, q22, 1.0}, {1.0, 1.0, 0.0}}};
  const std::array<double, 3> rhs = {-(q11 * floors.c1 + q12 * floors.c2),
                                     -(q12 * floors.c1 + q22 * floors.c2),
                                     1.0 - floors.c1 - floors.c2};
  // Least-squares form (M M^T) y = M rhs; equal to M^{-1} rhs here.
  std::array<std::array<double, 3>, 3> mmt{};
  std::array<double, 3> mr{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < 3; ++k) mmt[r][c] += M[r][k] * M[c][k];
    }
    for (int k = 0; k < 3; ++k) mr[r] += M[r][k] * rhs[k];
  }
  auto y = solve3(mmt, mr);
  // Squaring M squares its condition number; refine against the original
  // system so the interior optimum is accurate to rounding.
  for (int it = 0; it < 3; ++it) {
    std::array<double, 3> res{};
    for (int r = 0; r < 3; ++r) {
      res[r] = rhs[r];
      for (int k = 0; k < 3; ++k) res[r] -= M[r][k] * y[k];
    }
    std::array<double, 3> mres{};
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) mres[r] += M[r][k] * res[k];
    }
    const auto dy = solve3(mmt, mres);
    for (int r = 0; r < 3; ++r) y[r] += dy[r];
  }
  double a1 = floors.c1 + y[0];
  if (!std::isfinite(a1)) a1 = 0.5 * (lo + hi);
  w.alpha1 = std::clamp(a1, lo, hi);
  w.alpha2 = 1.0 - w.alpha1;
  return w;
}

std::vector<double> combine(const ParetoWeights& w,
                            std::span<const double> g_inc,
                            std::span<const double> g_pol) {
  DF_REQUIRE(g_inc.size() == g_pol.size(), "combine: dimension mismatch");
  std::vector<double> out(g_inc.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = w.alpha1 * g_inc[i] + w.alpha2 * g_pol[i];
  }
  return out;
}

Floors update_floors(const State& state, const Settings& settings) {
  const Floors& base = settings.c_init;
  const double stall =
      std::max(0.0, state.ema_success_prev - state.ema_success);
  Floors f;
  f.c2 = std::clamp(base.c2 + settings.kappa * stall, base.c2,
                    settings.floor_cap);
  f.c1 = std::clamp(base.c1 + settings.kappa * state.ema_incentive_variance,
                    base.c1, settings.floor_cap);
  if (f.c1 + f.c2 > settings.floor_sum_cap) {
    // Shrink only the raised part so the floors never drop below c_init.
    const double room = settings.floor_sum_cap - base.c1 - base.c2;
    const double e1 = f.c1 - base.c1;
    const double e2 = f.c2 - base.c2;
    const double factor = room / (e1 + e2);
    f.c1 = base.c1 + e1 * factor;
    f.c2 = base.c2 + e2 * factor;
  }
  return f;
}

double incentive_variance(const lio::Batch& batch, int a) {
  double sw = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    for (const auto& s : batch.episodes[e].steps) {
      if (!s.emission_active[a]) continue;
      for (int j = 0; j < s.rewards.n_agents(); ++j) {
        if (j == a) continue;
        const double v = s.rewards.incentives[a][j];
        sw += batch.weights[e];
        s1 += batch.weights[e] * v;
        s2 += batch.weights[e] * v * v;
      }
    }
  }
  if (sw == 0.0) return 0.0;
  const double mean = s1 / sw;
  return std::max(0.0, s2 / sw - mean * mean);
}

double apply_update(State& state, std::span<double> omega,
                    std::span<const double> g_star, const Settings& settings) {
  DF_REQUIRE(omega.size() == g_star.size() &&
                 state.adam_m.size() == omega.size(),
             "apply_update: dimension mismatch");
  std::vector<double> g(g_star.begin(), g_star.end());
  const double gn = std::sqrt(dot(g, g));
  if (gn > settings.clip_norm) {
    for (double& x : g) x *= settings.clip_norm / gn;
  }
  ++state.adam_steps;
  const double bc1 =
      1.0 - std::pow(settings.beta1, static_cast<double>(state.adam_steps));
  const double bc2 =
      1.0 - std::pow(settings.beta2, static_cast<double>(state.adam_steps));
  std::vector<double> step(omega.size());
  for (std::size_t i = 0; i < omega.size(); ++i) {
    state.adam_m[i] =
        settings.beta1 * state.adam_m[i] + (1.0 - settings.beta1) * g[i];
    state.adam_v[i] =
        settings.beta2 * state.adam_v[i] + (1.0 - settings.beta2) * g[i] * g[i];
    const double mhat = state.adam_m[i] / bc1;
    const double vhat = state.adam_v[i] / bc2;
    step[i] = -settings.lr * (mhat / (std::sqrt(vhat) + settings.epsilon) +
                              settings.weight_decay * omega[i]);
  }
  double sn = std::sqrt(dot(step, step));
  if (sn > settings.clip_norm) {
    for (double& x : step) x *= settings.clip_norm / sn;
    sn = settings.clip_norm;
  }
  for (std::size_t i = 0; i < omega.size(); ++i) omega[i] += step[i];
  return sn;
}

AuditRow admo_step(State& state, lio::Team& team, const Settings& settings,
                   const StepInputs& in) {
  DF_REQUIRE(in.batch != nullptr, "admo_step: missing batch");
  const lio::Batch& batch = *in.batch;
  const int a = in.adversary;
  DF_REQUIRE(a >= 0 && a < team.n_agents(), "admo_step: adversary out of range");
  lio::AgentBundle& bundle = team.agents[a];
  DF_REQUIRE(bundle.theta.same_layout(state.theta_ref),
             "admo_step: reference layout mismatch");

  const double var_norm =
      incentive_variance(batch, a) / (0.25 * team.r_max * team.r_max);
  if (!state.ema_initialized) {
    state.ema_incentive_variance = var_norm;
    state.ema_success = in.batch_success;
    state.ema_success_prev = in.batch_success;
    state.ema_initialized = true;
  } else {
    const double d = settings.ema_decay;
    state.ema_incentive_variance =
        d * state.ema_incentive_variance + (1.0 - d) * var_norm;
    state.ema_success_prev = state.ema_success;
    state.ema_success = d * state.ema_success + (1.0 - d) * in.batch_success;
  }

  const LossValue inc =
      loss_inc(team, batch, a, settings.beta_b, in.baseline);
  const LossValue pol = loss_pol(team, batch, a, state.theta_ref, settings.s,
                                 state.lambda_d, in.baseline);
  state.floors = update_floors(state, settings);
  const auto g_inc = inc.grad.flat();
  const auto g_pol = pol.grad.flat();
  const ParetoWeights w = solve_pareto_weights(g_inc, g_pol, state.floors);
  const auto g_star = combine(w, g_inc, g_pol);

  AuditRow row;
  row.alpha1 = w.alpha1;
  row.alpha2 = w.alpha2;
  row.c1 = state.floors.c1;
  row.c2 = state.floors.c2;
  row.loss_inc = inc.value;
  row.loss_pol = pol.value;
  row.g_norm = std::sqrt(dot(g_star, g_star));
  row.degenerate = w.degenerate;
  row.lambda_d = state.lambda_d;

  if (row.g_norm > 0.0) {
    std::vector<double> omega = g_inc;  // reuse the allocation
    const std::size_t nt = bundle.theta.size();
    std::copy(bundle.theta.values.begin(), bundle.theta.values.end(),
              omega.begin());
    std::copy(bundle.eta.values.begin(), bundle.eta.values.end(),
              omega.begin() + static_cast<std::ptrdiff_t>(nt));
    row.step_norm = apply_update(state, omega, g_star, settings);
    std::copy(omega.begin(), omega.begin() + static_cast<std::ptrdiff_t>(nt),
              bundle.theta.values.begin());
    std::copy(omega.begin() + static_cast<std::ptrdiff_t>(nt), omega.end(),
              bundle.eta.values.begin());
  } else {
    row.skipped = true;
  }

  ++state.k;
  row.k = state.k;
  if (state.override_remaining > 0 && --state.override_remaining == 0) {
    state.lambda_d = settings.lambda_d;
  }
  if (state.k % settings.k_ref == 0) {
    row.d_proxy = proxy_divergence(bundle.theta, state.theta_ref);
    state.theta_ref = bundle.theta;
    row.refreshed = true;
    if (row.d_proxy > settings.drift_trigger) {
      state.lambda_d = settings.lambda_override;
      state.override_remaining = settings.k_ref;
    }
  } else {
    row.d_proxy = proxy_divergence(bundle.theta, state.theta_ref);
  }

  double spent = 0.0;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    for (const auto& s : batch.episodes[e].steps) spent += spend(s, a);
  }
  row.budget_spent = batch.size() ? spent / static_cast<double>(batch.size())
                                  : 0.0;
  return row;
}

}  // namespace dilemma_forge::admo
