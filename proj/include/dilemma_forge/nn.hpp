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

#ifndef DILEMMA_FORGE_NN_HPP_
#define DILEMMA_FORGE_NN_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dilemma_forge::nn {

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Segment&) const = default;
};

// Flat parameter storage for one network. Weight matrices are row-major
// (rows = fan-out); each "W<l>" segment is followed by its bias "b<l>".
struct ParamVector {
  std::vector<double> values;
  std::vector<Segment> layout;

  std::size_t size() const { return values.size(); }
  bool same_layout(const ParamVector& other) const {
    return layout == other.layout;
  }
  const Segment& segment(const std::string& name) const;
  std::span<const double> view(const Segment& seg) const {
    return {values.data() + seg.offset, seg.size()};
  }

  ParamVector zeros_like() const;
  // this += scale * other
  void axpy(double scale, const ParamVector& other);
  void scale(double factor);
  double dot(const ParamVector& other) const;
  double norm() const;
  // Checks the layout invariants: contiguous, non-overlapping, exact cover.
  bool layout_consistent() const;
};

enum class HeadKind { kSoftmax, kBoundedIncentive };

struct NetConfig {
  int input_dim = 1;
  std::vector<int> hidden;
  int output_dim = 1;
  HeadKind head = HeadKind::kSoftmax;
  double r_max = 2.0;  // BoundedIncentive only

  void validate() const;
  std::size_t param_count() const;
};

inline constexpr double kDefaultIncentiveBound = 2.0;

ParamVector make_layout(const NetConfig& config);
// Normal weights with std 1/sqrt(fan_in); zero biases.
ParamVector init_params(const NetConfig& config, std::uint64_t seed);

// Activations kept from a forward pass so gradients can reuse them.
struct ForwardTrace {
  std::vector<std::vector<double>> inputs;  // input to each layer
  std::vector<double> raw_output;           // final pre-head values
};

ForwardTrace forward_trace(const ParamVector& params,
                           std::span<const double> input);

std::vector<double> softmax(std::span<const double> logits);
double sigmoid(double x);

std::vector<double> policy_forward(const ParamVector& params,
                                   std::span<const double> obs);

// Net input for an incentive head: giver observation followed by the one-hot
// actions of every other agent (in agent order, giver skipped).
std::vector<double> incentive_input(std::span<const double> obs_giver,
                                    std::span<const int> actions_others,
                                    int num_actions);

std::vector<double> incentive_forward(const ParamVector& params,
                                      std::span<const double> input,
                                      double r_max);
std::vector<double> incentive_forward(const ParamVector& params,
                                      std::span<const double> obs_giver,
                                      std::span<const int> actions_others,
                                      int num_actions, double r_max);

// Gradient of log pi(action | obs) with respect to every parameter.
ParamVector score(const ParamVector& params, std::span<const double> obs,
                  int action);
ParamVector score_from_trace(const ParamVector& params,
                             const ForwardTrace& trace, int action);

// out += scale * grad of the policy entropy H(pi(. | obs)).
void entropy_gradient_accumulate(const ParamVector& params,
                                 std::span<const double> obs, double scale,
                                 ParamVector& out);
double entropy(std::span<const double> probs);

// Gradient of <incentive_forward(params, input), cotangent>.
ParamVector incentive_vjp(const ParamVector& params,
                          std::span<const double> input,
                          std::span<const double> cotangent, double r_max);
// Same, accumulated into `out` to avoid an allocation per step.
void incentive_vjp_accumulate(const ParamVector& params,
                              std::span<const double> input,
                              std::span<const double> cotangent, double r_max,
                              ParamVector& out);

// Checkpoint format: `<base>.bin` holds the values as little-endian float64,
// `<base>.json` describes the segment layout.
void save_params(const ParamVector& params, const std::filesystem::path& base);
ParamVector load_params(const std::filesystem::path& base);

}  // namespace dilemma_forge::nn

#endif  // DILEMMA_FORGE_NN_HPP_
