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

#ifndef DILEMMA_FORGE_ADMO_HPP_
#define DILEMMA_FORGE_ADMO_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dilemma_forge/admo_settings.hpp"
#include "dilemma_forge/lio.hpp"
#include "dilemma_forge/nn.hpp"
#include "dilemma_forge/trajectory.hpp"

namespace dilemma_forge::admo {

// A gradient over omega = [theta, eta].
struct OmegaGrad {
  nn::ParamVector theta;
  nn::ParamVector eta;

  std::vector<double> flat() const;
  double dot(const OmegaGrad& other) const;
  double norm() const;
};

struct LossValue {
  double value = 0.0;
  OmegaGrad grad;
};

struct State {
  nn::ParamVector theta_ref;
  bool ema_initialized = false;
  double ema_incentive_variance = 0.0;
  double ema_success = 0.0;
  double ema_success_prev = 0.0;
  Floors floors{};
  double lambda_d = 1e-2;
  int override_remaining = 0;  // iterations left at the raised lambda_d
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::int64_t adam_steps = 0;
  std::int64_t k = 0;  // completed controller iterations

  static State init(const Settings& settings, const nn::ParamVector& theta,
                    const nn::ParamVector& eta);
};

// -E[sum_t gamma^t (r^a - mean_{j != a} r^j)] + beta_b * cost.
// theta: score-function estimate; eta: direct pathway through the
// adversary's own incentives.
LossValue loss_inc(const lio::Team& team, const lio::Batch& batch, int a,
                   double beta_b, lio::Baseline baseline);

// -s * W + lambda_d * D_proxy, W = discounted sum of every agent's total
// reward.
LossValue loss_pol(const lio::Team& team, const lio::Batch& batch, int a,
                   const nn::ParamVector& theta_ref, double s, double lambda_d,
                   lio::Baseline baseline);

// 0.5 * ||theta - theta_ref||^2
double proxy_divergence(const nn::ParamVector& theta,
                        const nn::ParamVector& theta_ref);

struct ParetoWeights {
  double alpha1 = 0.5;
  double alpha2 = 0.5;
  bool degenerate = false;
};

// Minimises ||a1 g1 + a2 g2|| over a1 + a2 = 1, a_i >= c_i.
ParetoWeights solve_pareto_weights(std::span<const double> g_inc,
                                   std::span<const double> g_pol,
                                   const Floors& floors);

std::vector<double> combine(const ParetoWeights& w,
                            std::span<const double> g_inc,
                            std::span<const double> g_pol);

// Raises the policy floor when success stalls and the incentive floor when
// the adversary's emissions vary. Keeps c1 + c2 <= floor_sum_cap.
Floors update_floors(const State& state, const Settings& settings);

// Variance of the adversary's emitted incentives over the batch.
double incentive_variance(const lio::Batch& batch, int a);

struct AuditRow {
  std::int64_t k = 0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double loss_inc = 0.0;
  double loss_pol = 0.0;
  double g_norm = 0.0;
  double step_norm = 0.0;
  double budget_spent = 0.0;  // mean per-episode spend in the batch
  double lambda_d = 0.0;
  double d_proxy = 0.0;
  bool refreshed = false;
  bool degenerate = false;
  bool skipped = false;
};

struct StepInputs {
  const lio::Batch* batch = nullptr;
  int adversary = 0;
  double batch_success = 0.0;
  lio::Baseline baseline = lio::Baseline::kLeaveOneOut;
};

// One controller iteration. Updates the adversary's theta and eta inside
// `team` and advances `state`.
AuditRow admo_step(State& state, lio::Team& team, const Settings& settings,
                   const StepInputs& in);

// Applies a gradient step to omega with the controller's optimizer and
// clipping; returns the committed step norm. Exposed for tests.
double apply_update(State& state, std::span<double> omega,
                    std::span<const double> g_star, const Settings& settings);

}  // namespace dilemma_forge::admo

#endif  // DILEMMA_FORGE_ADMO_HPP_
