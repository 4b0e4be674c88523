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

#ifndef DILEMMA_FORGE_ADMO_SETTINGS_HPP_
#define DILEMMA_FORGE_ADMO_SETTINGS_HPP_

namespace dilemma_forge::admo {

struct Floors {
  double c1 = 0.1;  // incentive-manipulation weight floor
  double c2 = 0.1;  // policy-manipulation weight floor
  bool operator==(const Floors&) const = default;
};

struct Settings {
  double s = 1.0;  // +1 raises team welfare, -1 depresses it
  double beta_b = 1e-2;
  double lambda_d = 1e-2;
  double lambda_override = 0.05;
  double drift_trigger = 0.5;
  Floors c_init{};
  int k_ref = 50;
  double budget = 20.0;  // per-episode incentive spend B_a
  double clip_norm = 1.0;
  double ema_decay = 0.9;
  double kappa = 1.0;
  double floor_cap = 0.5;
  double floor_sum_cap = 0.9;
  // AdamW on omega = [theta, eta].
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;

  bool operator==(const Settings&) const = default;
  // Throws ConfigError.
  void validate() const;
};

}  // namespace dilemma_forge::admo

#endif  // DILEMMA_FORGE_ADMO_SETTINGS_HPP_
