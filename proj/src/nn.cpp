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

#include "dilemma_forge/nn.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>

#include "dilemma_forge/error.hpp"
#include "json.hpp"

namespace dilemma_forge::nn {

const Segment& ParamVector::segment(const std::string& name) const {
  for (const auto& seg : layout) {
    if (seg.name == name) return seg;
  }
  throw ContractViolation("ParamVector: no segment named " + name);
}

ParamVector ParamVector::zeros_like() const {
  ParamVector out;
  out.layout = layout;
  out.values.assign(values.size(), 0.0);
  return out;
}

void ParamVector::axpy(double scale, const ParamVector& other) {
  DF_REQUIRE(other.values.size() == values.size(),
             "ParamVector::axpy: size mismatch");
  const double* src = other.values.data();
  double* dst = values.data();
  for (std::size_t i = 0; i < values.size(); ++i) dst[i] += scale * src[i];
}

void ParamVector::scale(double factor) {
  for (double& v : values) v *= factor;
}

double ParamVector::dot(const ParamVector& other) const {
  DF_REQUIRE(other.values.size() == values.size(),
             "ParamVector::dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += values[i] * other.values[i];
  }
  return acc;
}

double ParamVector::norm() const { return std::sqrt(dot(*this)); }

bool ParamVector::layout_consistent() const {
  std::size_t expected = 0;
  for (const auto& seg : layout) {
    if (seg.offset != expected) return false;
    expected += seg.size();
  }
  return expected == values.size();
}

void NetConfig::validate() const {
  if (input_dim < 1 || output_dim < 1) {
    throw ConfigError("network: input/output dimensions must be >= 1");
  }
  for (int h : hidden) {
    if (h < 1) throw ConfigError("network.hidden: widths must be >= 1");
  }
  if (head == HeadKind::kBoundedIncentive && !(r_max > 0.0)) {
    throw ConfigError("network.r_max: incentive bound must be > 0");
  }
}

std::size_t NetConfig::param_count() const { return make_layout(*this).size(); }

ParamVector make_layout(const NetConfig& config) {
  config.validate();
  ParamVector p;
  std::vector<int> dims;
  dims.push_back(config.input_dim);
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(config.output_dim);
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto rows = static_cast<std::size_t>(dims[l + 1]);
    const auto cols = static_cast<std::size_t>(dims[l]);
    p.layout.push_back({"W" + std::to_string(l), offset, rows, cols});
    offset += rows * cols;
    p.layout.push_back({"b" + std::to_string(l), offset, rows, 1});
    offset += rows;
  }
  p.values.assign(offset, 0.0);
  return p;
}

ParamVector init_params(const NetConfig& config, std::uint64_t seed) {
  ParamVector p = make_layout(config);
  std::mt19937_64 rng(seed);
  for (const auto& seg : p.layout) {
    if (seg.name[0] != 'W') continue;
    std::normal_distribution<double> dist(
        0.0, 1.0 / std::sqrt(static_cast<double>(seg.cols)));
    for (std::size_t i = 0; i < seg.size(); ++i) {
      p.values[seg.offset + i] = dist(rng);
    }
  }
  return p;
}

ForwardTrace forward_trace(const ParamVector& params,
                           std::span<const double> input) {
  const std::size_t n_layers = params.layout.size() / 2;
  DF_REQUIRE(n_layers >= 1, "forward: empty network");
  DF_REQUIRE(input.size() == params.layout[0].cols,
             "forward: input has " + std::to_string(input.size()) +
                 " entries, network expects " +
                 std::to_string(params.layout[0].cols));
  ForwardTrace trace;
  trace.inputs.reserve(n_layers);
  trace.inputs.emplace_back(input.begin(), input.end());
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Segment& w = params.layout[2 * l];
    const Segment& b = params.layout[2 * l + 1];
    const std::vector<double>& x = trace.inputs[l];
    const double* wv = params.values.data() + w.offset;
    const double* bv = params.values.data() + b.offset;
    std::vector<double> z(w.rows);
    for (std::size_t r = 0; r < w.rows; ++r) {
      double acc = bv[r];
      const double* row = wv + r * w.cols;
      for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * x[c];
      z[r] = acc;
    }
    if (l + 1 < n_layers) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
      trace.inputs.push_back(std::move(z));
    } else {
      trace.raw_output = std::move(z);
    }
  }
  return trace;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> policy_forward(const ParamVector& params,
                                   std::span<const double> obs) {
  return softmax(forward_trace(params, obs).raw_output);
}

std::vector<double> incentive_input(std::span<const double> obs_giver,
                                    std::span<const int> actions_others,
                                    int num_actions) {
  std::vector<double> in(obs_giver.begin(), obs_giver.end());
  const std::size_t base = in.size();
  in.resize(base + actions_others.size() * static_cast<std::size_t>(num_actions),
            0.0);
  for (std::size_t k = 0; k < actions_others.size(); ++k) {
    DF_REQUIRE(actions_others[k] >= 0 && actions_others[k] < num_actions,
               "incentive_input: action out of range");
    in[base + k * num_actions + actions_others[k]] = 1.0;
  }
  return in;
}

std::vector<double> incentive_forward(const ParamVector& params,
                                      std::span<const double> input,
                                      double r_max) {
  std::vector<double> out = forward_trace(params, input).raw_output;
  for (double& v : out) v = r_max * sigmoid(v);
  return out;
}

std::vector<double> incentive_forward(const ParamVector& params,
                                      std::span<const double> obs_giver,
                                      std::span<const int> actions_others,
                                      int num_actions, double r_max) {
  const auto in = incentive_input(obs_giver, actions_others, num_actions);
  return incentive_forward(params, in, r_max);
}

namespace {

// Accumulates d<output, delta>/d(params) into `out`, walking the layers in
// reverse. A ReLU input is positive exactly when its pre-activation was.
void backprop(const ParamVector& params, const ForwardTrace& trace,
              std::vector<double> delta, ParamVector& out) {
  const std::size_t n_layers = params.layout.size() / 2;
  for (std::size_t l = n_layers; l-- > 0;) {
    const Segment& w = params.layout[2 * l];
    const Segment& b = params.layout[2 * l + 1];
    const std::vector<double>& x = trace.inputs[l];
    double* gw = out.values.data() + w.offset;
    double* gb = out.values.data() + b.offset;
    for (std::size_t r = 0; r < w.rows; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      gb[r] += d;
      double* row = gw + r * w.cols;
      for (std::size_t c = 0; c < w.cols; ++c) row[c] += d * x[c];
    }
    if (l == 0) break;
    const double* wv = params.values.data() + w.offset;
    std::vector<double> prev(w.cols, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      const double* row = wv + r * w.cols;
      for (std::size_t c = 0; c < w.cols; ++c) prev[c] += row[c] * d;
    }
    for (std::size_t c = 0; c < w.cols; ++c) {
      if (!(x[c] > 0.0)) prev[c] = 0.0;
    }
    delta = std::move(prev);
  }
}

}  // namespace

ParamVector score_from_trace(const ParamVector& params,
                             const ForwardTrace& trace, int action) {
  const auto probs = softmax(trace.raw_output);
  DF_REQUIRE(action >= 0 && action < static_cast<int>(probs.size()),
             "score: action out of range");
  std::vector<double> delta(probs.size());
  for (std::size_t k = 0; k < probs.size(); ++k) {
    delta[k] = (static_cast<int>(k) == action ? 1.0 : 0.0) - probs[k];
  }
  ParamVector grad = params.zeros_like();
  backprop(params, trace, std::move(delta), grad);
  return grad;
}

ParamVector score(const ParamVector& params, std::span<const double> obs,
                  int action) {
  return score_from_trace(params, forward_trace(params, obs), action);
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

void entropy_gradient_accumulate(const ParamVector& params,
                                 std::span<const double> obs, double scale,
                                 ParamVector& out) {
  DF_REQUIRE(out.size() == params.size(), "entropy_gradient: size mismatch");
  if (scale == 0.0) return;
  const ForwardTrace trace = forward_trace(params, obs);
  const auto probs = softmax(trace.raw_output);
  const double h = entropy(probs);
  // dH/dz_k = -pi_k (log pi_k + H)
  std::vector<double> delta(probs.size());
  for (std::size_t k = 0; k < probs.size(); ++k) {
    delta[k] = -scale * probs[k] * (std::log(probs[k]) + h);
  }
  backprop(params, trace, std::move(delta), out);
}

void incentive_vjp_accumulate(const ParamVector& params,
                              std::span<const double> input,
                              std::span<const double> cotangent, double r_max,
                              ParamVector& out) {
  DF_REQUIRE(out.size() == params.size(), "incentive_vjp: output size mismatch");
  const ForwardTrace trace = forward_trace(params, input);
  DF_REQUIRE(cotangent.size() == trace.raw_output.size(),
             "incentive_vjp: cotangent length must equal recipient count");
  std::vector<double> delta(cotangent.size());
  bool any = false;
  for (std::size_t k = 0; k < delta.size(); ++k) {
    const double s = sigmoid(trace.raw_output[k]);
    delta[k] = cotangent[k] * r_max * s * (1.0 - s);
    any = any || delta[k] != 0.0;
  }
  if (any) backprop(params, trace, std::move(delta), out);
}

ParamVector incentive_vjp(const ParamVector& params,
                          std::span<const double> input,
                          std::span<const double> cotangent, double r_max) {
  ParamVector grad = params.zeros_like();
  incentive_vjp_accumulate(params, input, cotangent, r_max, grad);
  return grad;
}

namespace {

template <typename T>
T to_little_endian(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

std::filesystem::path with_suffix(const std::filesystem::path& base,
                                  const char* suffix) {
  auto p = base;
  p += suffix;
  return p;
}

}  // namespace

void save_params(const ParamVector& params, const std::filesystem::path& base) {
  std::ofstream bin(with_suffix(base, ".bin"), std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + base.string() + ".bin");
  for (double v : params.values) {
    const std::uint64_t bits =
        to_little_endian(std::bit_cast<std::uint64_t>(v));
    bin.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
  }
  nlohmann::json sidecar;
  sidecar["dtype"] = "float64";
  sidecar["endianness"] = "little";
  sidecar["length"] = params.values.size();
  sidecar["segments"] = nlohmann::json::array();
  for (const auto& seg : params.layout) {
    sidecar["segments"].push_back({{"name", seg.name},
                                   {"offset", seg.offset},
                                   {"shape", {seg.rows, seg.cols}}});
  }
  std::ofstream meta(with_suffix(base, ".json"));
  meta << sidecar.dump(2) << '\n';
}

ParamVector load_params(const std::filesystem::path& base) {
  std::ifstream meta(with_suffix(base, ".json"));
  if (!meta) throw std::runtime_error("cannot read " + base.string() + ".json");
  const auto sidecar = nlohmann::json::parse(meta);
  ParamVector p;
  for (const auto& seg : sidecar.at("segments")) {
    p.layout.push_back({seg.at("name").get<std::string>(),
                        seg.at("offset").get<std::size_t>(),
                        seg.at("shape")[0].get<std::size_t>(),
                        seg.at("shape")[1].get<std::size_t>()});
  }
  const auto length = sidecar.at("length").get<std::size_t>();
  p.values.resize(length);
  std::ifstream bin(with_suffix(base, ".bin"), std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read " + base.string() + ".bin");
  for (std::size_t i = 0; i < length; ++i) {
    std::uint64_t bits = 0;
    bin.read(reinterpret_cast<char*>(&bits), sizeof(bits));
    if (!bin) throw std::runtime_error("truncated checkpoint " + base.string());
    p.values[i] = std::bit_cast<double>(to_little_endian(bits));
  }
  if (!p.layout_consistent()) {
    throw std::runtime_error("checkpoint layout inconsistent: " + base.string());
  }
  return p;
}

}  // namespace dilemma_forge::nn
