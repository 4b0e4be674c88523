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


#include "dilemma_forge/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dilemma_forge/error.hpp"
#include "dilemma_forge/train.hpp"
#include "json.hpp"

namespace dilemma_forge::harness {
namespace {

using nlohmann::json;

std::uint64_t stream_seed(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), stream};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

constexpr std::uint32_t kSamplingStream = 0xffffu;

}  // namespace

void ExperimentConfig::validate() const {
  env::validate(game);
  if (static_cast<int>(agents.size()) != game.n_agents) {
    throw ConfigError("agents: expected " + std::to_string(game.n_agents) +
                      " entries to match game.n_agents, got " +
                      std::to_string(agents.size()));
  }
  if (!(r_max > 0.0)) throw ConfigError("r_max must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  if (episodes < batch_size) {
    throw ConfigError("episodes must be >= batch_size");
  }
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (!(entropy_coef >= 0.0)) throw ConfigError("entropy_coef must be >= 0");
  if (seeds.empty()) throw ConfigError("seeds must be non-empty");
  auto sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("seeds must be distinct");
  }
  if (smoothing_window < 1) throw ConfigError("smoothing_window must be >= 1");
  if (!(convergence_threshold > 0.0 && convergence_threshold <= 1.0)) {
    throw ConfigError("convergence_threshold must be in (0, 1]");
  }
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const auto& a = agents[i];
    const std::string where = "agents[" + std::to_string(i) + "].";
    if (a.hidden.empty()) throw ConfigError(where + "hidden must be non-empty");
    for (int h : a.hidden) {
      if (h < 1) throw ConfigError(where + "hidden sizes must be >= 1");
    }
    if (!(a.lr_policy > 0.0)) throw ConfigError(where + "lr_policy must be > 0");
    if (!(a.lr_incentive > 0.0)) {
      throw ConfigError(where + "lr_incentive must be > 0");
    }
    try {
      manip::validate_mode(a.mode, game, r_max, allow_matrix_bypass);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

int ExperimentConfig::iterations() const {
  return (episodes + batch_size - 1) / batch_size;
}

std::vector<double> RunRecord::success_series() const {
  std::vector<double> out;
  out.reserve(episodes.size());
  for (const auto& e : episodes) out.push_back(e.success);
  return out;
}

lio::Team build_team(const ExperimentConfig& config, std::uint64_t seed) {
  lio::Team team;
  team.spec = config.game;
  team.r_max = config.r_max;
  const int n = config.game.n_agents;
  const int obs = env::observation_size(config.game);
  const int na = env::num_actions(config.game);
  for (int i = 0; i < n; ++i) {
    const auto& ac = config.agents[i];
    nn::NetConfig pol{obs, ac.hidden, na, nn::HeadKind::kSoftmax,
                      config.r_max};
    nn::NetConfig inc{obs + (n - 1) * na, ac.hidden, n - 1,
                      nn::HeadKind::kBoundedIncentive, config.r_max};
    lio::AgentBundle b;
    b.theta = nn::init_params(pol, stream_seed(seed, 2 * i));
    b.eta = nn::init_params(inc, stream_seed(seed, 2 * i + 1));
    b.lr_policy = ac.lr_policy;
    b.lr_incentive = ac.lr_incentive;
    b.mode = ac.mode;
    team.agents.push_back(std::move(b));
  }
  return team;
}

RunRecord run_trial(const ExperimentConfig& config, std::uint64_t seed,
                    const CheckpointFn& on_checkpoint) {
  config.validate();
  RunRecord rec;
  rec.seed = seed;
  lio::Team team = build_team(config, seed);
  auto admo_states = lio::init_admo_states(team);
  lio::TrainSettings ts;
  ts.batch_size = config.batch_size;
  ts.alpha = config.alpha;
  ts.baseline = config.baseline;
  ts.entropy_coef = config.entropy_coef;
  std::mt19937_64 rng(stream_seed(seed, kSamplingStream));
  rec.episodes.reserve(config.episodes);
  const int iters = config.iterations();
  for (int it = 0; it < iters; ++it) {
    auto res = lio::train_iteration(team, admo_states, ts, rng);
    for (auto& m : res.episodes) {
      if (static_cast<int>(rec.episodes.size()) >= config.episodes) break;
      rec.episodes.push_back({m.success, m.steps, std::move(m.env_return),
                              std::move(m.total_return)});
    }
    rec.iterations.push_back({static_cast<int>(rec.episodes.size()),
                              std::move(res.policy_grad_norms)});
    for (const auto& a : res.audits) {
      rec.audits.push_back({it + 1, a.agent, a.row});
    }
    if (on_checkpoint && config.checkpoint_every > 0 &&
        (it + 1) % config.checkpoint_every == 0) {
      on_checkpoint(seed, it + 1, team);
    }
  }
  for (const auto& a : team.agents) {
    rec.final_theta.push_back(a.theta);
    rec.final_eta.push_back(a.eta);
  }
  return rec;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& config, int jobs,
                                      const CheckpointFn& on_checkpoint) {
  config.validate();
  const std::size_t n = config.seeds.size();
  std::vector<RunRecord> out(n);
  std::vector<std::exception_ptr> errors(n);
  const int workers =
      std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = run_trial(config, config.seeds[i], on_checkpoint);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::optional<int> convergence_episode(std::span<const double> series,
                                       int window, double threshold) {
  DF_REQUIRE(window >= 1, "convergence_episode: window must be >= 1");
  const std::size_t w = static_cast<std::size_t>(window);
  for (std::size_t end = w; end <= series.size(); ++end) {
    double sum = 0.0;
    for (std::size_t i = end - w; i < end; ++i) sum += series[i];
    if (sum / static_cast<double>(window) >= threshold) {
      return static_cast<int>(end);
    }
  }
  return std::nullopt;
}

std::optional<double> median_convergence(
    std::vector<std::optional<int>> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end(),
            [](const std::optional<int>& a, const std::optional<int>& b) {
              if (!a) return false;
              if (!b) return true;
              return *a < *b;
            });
  const std::size_t n = values.size();
  if (n % 2 == 1) {
    const auto& m = values[n / 2];
    return m ? std::optional<double>(*m) : std::nullopt;
  }
  const auto& lo = values[n / 2 - 1];
  const auto& hi = values[n / 2];
  if (!lo || !hi) return std::nullopt;
  return 0.5 * (static_cast<double>(*lo) + static_cast<double>(*hi));
}

int final_window_size(int n_episodes) {
  return std::max(1, (n_episodes + 9) / 10);
}

double final_window_mean(std::span<const double> series) {
  if (series.empty()) return 0.0;
  const int w = final_window_size(static_cast<int>(series.size()));
  double acc = 0.0;
  for (std::size_t i = series.size() - w; i < series.size(); ++i) {
    acc += series[i];
  }
  return acc / w;
}

namespace {

SeriesStats stats_over(std::span<const RunRecord> records, int n_episodes,
                       const std::function<double(const EpisodeRow&)>& get) {
  SeriesStats s;
  s.mean.assign(n_episodes, 0.0);
  s.std.assign(n_episodes, 0.0);
  const double r = static_cast<double>(records.size());
  for (int e = 0; e < n_episodes; ++e) {
    double sum = 0.0;
    for (const auto& rec : records) sum += get(rec.episodes[e]);
    const double mean = sum / r;
    double var = 0.0;
    for (const auto& rec : records) {
      const double d = get(rec.episodes[e]) - mean;
      var += d * d;
    }
    s.mean[e] = mean;
    s.std[e] = std::sqrt(var / r);
  }
  return s;
}

}  // namespace

Summary aggregate(std::span<const RunRecord> records, int window,
                  double threshold) {
  DF_REQUIRE(!records.empty(), "aggregate: no records");
  Summary s;
  s.n_episodes = static_cast<int>(records[0].episodes.size());
  DF_REQUIRE(s.n_episodes > 0, "aggregate: empty record");
  s.n_agents = static_cast<int>(records[0].episodes[0].env_return.size());
  for (const auto& r : records) {
    DF_REQUIRE(static_cast<int>(r.episodes.size()) == s.n_episodes,
               "aggregate: records differ in length");
  }
  s.final_window = final_window_size(s.n_episodes);
  s.success = stats_over(records, s.n_episodes,
                         [](const EpisodeRow& e) { return e.success; });
  s.steps = stats_over(records, s.n_episodes, [](const EpisodeRow& e) {
    return static_cast<double>(e.steps);
  });
  for (int j = 0; j < s.n_agents; ++j) {
    s.env_return.push_back(stats_over(
        records, s.n_episodes,
        [j](const EpisodeRow& e) { return e.env_return[j]; }));
    s.total_return.push_back(stats_over(
        records, s.n_episodes,
        [j](const EpisodeRow& e) { return e.total_return[j]; }));
  }
  s.final_env_return_mean.assign(s.n_agents, 0.0);
  s.final_total_return_mean.assign(s.n_agents, 0.0);
  for (const auto& r : records) {
    s.seeds.push_back(r.seed);
    const auto succ = r.success_series();
    s.convergence.push_back(convergence_episode(succ, window, threshold));
    s.final_success.push_back(final_window_mean(succ));
    std::vector<double> fe(s.n_agents), ft(s.n_agents);
    for (int j = 0; j < s.n_agents; ++j) {
      std::vector<double> env_j, tot_j;
      for (const auto& e : r.episodes) {
        env_j.push_back(e.env_return[j]);
        tot_j.push_back(e.total_return[j]);
      }
      fe[j] = final_window_mean(env_j);
      ft[j] = final_window_mean(tot_j);
      s.final_env_return_mean[j] += fe[j] / records.size();
      s.final_total_return_mean[j] += ft[j] / records.size();
    }
    s.final_env_return.push_back(std::move(fe));
    s.final_total_return.push_back(std::move(ft));
  }
  double acc = 0.0;
  for (double f : s.final_success) acc += f;
  s.final_success_mean = acc / static_cast<double>(records.size());
  s.median_convergence = median_convergence(s.convergence);
  return s;
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc()) throw std::runtime_error("bad number: " + s);
  return v;
}

}  // namespace

void write_run_csv(const RunRecord& record, const std::filesystem::path& path) {
  auto out = open_out(path);
  const int n = record.episodes.empty()
                    ? 0
                    : static_cast<int>(record.episodes[0].env_return.size());
  out << "seed,episode,success,steps";
  for (int j = 0; j < n; ++j) out << ",env_return_" << j;
  for (int j = 0; j < n; ++j) out << ",total_return_" << j;
  out << '\n';
  for (std::size_t e = 0; e < record.episodes.size(); ++e) {
    const auto& row = record.episodes[e];
    out << record.seed << ',' << (e + 1) << ',' << format_double(row.success)
        << ',' << row.steps;
    for (double v : row.env_return) out << ',' << format_double(v);
    for (double v : row.total_return) out << ',' << format_double(v);
    out << '\n';
  }
}

void write_iterations_csv(const RunRecord& record,
                          const std::filesystem::path& path) {
  auto out = open_out(path);
  const int n = record.iterations.empty()
                    ? 0
                    : static_cast<int>(
                          record.iterations[0].policy_grad_norms.size());
  out << "iteration,episodes_done";
  for (int j = 0; j < n; ++j) out << ",grad_norm_" << j;
  out << '\n';
  for (std::size_t i = 0; i < record.iterations.size(); ++i) {
    const auto& row = record.iterations[i];
    out << (i + 1) << ',' << row.episodes_done;
    for (double v : row.policy_grad_norms) out << ',' << format_double(v);
    out << '\n';
  }
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_audit_jsonl(const RunRecord& record,
                       const std::filesystem::path& path) {
  auto out = open_out(path);
  std::uint64_t prev = 0;
  for (const auto& a : record.audits) {
    json j;
    j["iteration"] = a.iteration;
    j["agent"] = a.agent;
    j["k"] = a.row.k;
    j["alpha"] = {a.row.alpha1, a.row.alpha2};
    j["floors"] = {a.row.c1, a.row.c2};
    j["loss_inc"] = a.row.loss_inc;
    j["loss_pol"] = a.row.loss_pol;
    j["g_norm"] = a.row.g_norm;
    j["step_norm"] = a.row.step_norm;
    j["budget_spent"] = a.row.budget_spent;
    j["lambda_d"] = a.row.lambda_d;
    j["d_proxy"] = a.row.d_proxy;
    j["refreshed"] = a.row.refreshed;
    j["degenerate"] = a.row.degenerate;
    j["skipped"] = a.row.skipped;
    char prev_hex[17];
    std::snprintf(prev_hex, sizeof(prev_hex), "%016llx",
                  static_cast<unsigned long long>(prev));
    j["prev_hash"] = prev_hex;
    const std::string body = j.dump();
    prev = fnv1a64(body, fnv1a64(prev_hex));
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(prev));
    j["hash"] = hex;
    out << j.dump() << '\n';
  }
}

RunRecord read_run_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty " + path.string());
  const auto header = split(line, ',');
  if (header.size() < 4 || (header.size() - 4) % 2 != 0) {
    throw std::runtime_error("malformed header in " + path.string());
  }
  const std::size_t n = (header.size() - 4) / 2;
  RunRecord rec;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != header.size()) {
      throw std::runtime_error("malformed row in " + path.string());
    }
    rec.seed = std::stoull(f[0]);
    EpisodeRow row;
    row.success = parse_double(f[2]);
    row.steps = std::stoi(f[3]);
    for (std::size_t j = 0; j < n; ++j) {
      row.env_return.push_back(parse_double(f[4 + j]));
      row.total_return.push_back(parse_double(f[4 + n + j]));
    }
    rec.episodes.push_back(std::move(row));
  }
  return rec;
}

namespace {

json stats_json(const SeriesStats& s) {
  return json{{"mean", s.mean}, {"std", s.std}};
}

SeriesStats stats_from(const json& j) {
  return {j.at("mean").get<std::vector<double>>(),
          j.at("std").get<std::vector<double>>()};
}

json opt_json(const std::optional<double>& v) {
  return v ? json(*v) : json("none");
}

std::optional<double> opt_from(const json& j) {
  if (j.is_string()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

void write_summary(const Summary& s, const ExperimentConfig& config,
                   const std::filesystem::path& dir) {
  {
    auto out = open_out(dir / "summary.csv");
    out << "episode,success_mean,success_std,steps_mean,steps_std";
    for (int j = 0; j < s.n_agents; ++j) {
      out << ",env_return_mean_" << j << ",env_return_std_" << j;
    }
    for (int j = 0; j < s.n_agents; ++j) {
      out << ",total_return_mean_" << j << ",total_return_std_" << j;
    }
    out << '\n';
    for (int e = 0; e < s.n_episodes; ++e) {
      out << (e + 1) << ',' << format_double(s.success.mean[e]) << ','
          << format_double(s.success.std[e]) << ','
          << format_double(s.steps.mean[e]) << ','
          << format_double(s.steps.std[e]);
      for (int j = 0; j < s.n_agents; ++j) {
        out << ',' << format_double(s.env_return[j].mean[e]) << ','
            << format_double(s.env_return[j].std[e]);
      }
      for (int j = 0; j < s.n_agents; ++j) {
        out << ',' << format_double(s.total_return[j].mean[e]) << ','
            << format_double(s.total_return[j].std[e]);
      }
      out << '\n';
    }
  }
  json j;
  j["name"] = config.name;
  j["game"] = {{"kind", env::to_string(config.game.kind)},
               {"n_agents", config.game.n_agents},
               {"er_threshold", config.game.er_threshold},
               {"horizon", config.game.horizon},
               {"discount", config.game.discount}};
  std::vector<std::string> modes;
  for (const auto& a : config.agents) modes.push_back(manip::mode_name(a.mode));
  j["modes"] = modes;
  j["n_agents"] = s.n_agents;
  j["n_episodes"] = s.n_episodes;
  j["final_window"] = s.final_window;
  j["seeds"] = s.seeds;
  json conv = json::array();
  for (const auto& c : s.convergence) {
    conv.push_back(c ? json(*c) : json("none"));
  }
  j["convergence"] = conv;
  j["median_convergence"] = opt_json(s.median_convergence);
  j["final_success"] = s.final_success;
  j["final_success_mean"] = s.final_success_mean;
  j["final_env_return"] = s.final_env_return;
  j["final_total_return"] = s.final_total_return;
  j["final_env_return_mean"] = s.final_env_return_mean;
  j["final_total_return_mean"] = s.final_total_return_mean;
  j["series"]["success"] = stats_json(s.success);
  j["series"]["steps"] = stats_json(s.steps);
  for (int a = 0; a < s.n_agents; ++a) {
    j["series"]["env_return"].push_back(stats_json(s.env_return[a]));
    j["series"]["total_return"].push_back(stats_json(s.total_return[a]));
  }
  auto out = open_out(dir / "summary.json");
  out << j.dump(1) << '\n';
}

StoredSummary read_summary(const std::filesystem::path& dir) {
  std::ifstream in(dir / "summary.json");
  if (!in) {
    throw std::runtime_error("no summary.json in " + dir.string());
  }
  const json j = json::parse(in);
  StoredSummary out;
  out.name = j.at("name").get<std::string>();
  const auto& g = j.at("game");
  out.game.kind = env::game_kind_from_string(g.at("kind").get<std::string>());
  out.game.n_agents = g.at("n_agents").get<int>();
  out.game.er_threshold = g.at("er_threshold").get<int>();
  out.game.horizon = g.at("horizon").get<int>();
  out.game.discount = g.at("discount").get<double>();
  Summary& s = out.summary;
  s.n_agents = j.at("n_agents").get<int>();
  s.n_episodes = j.at("n_episodes").get<int>();
  s.final_window = j.at("final_window").get<int>();
  s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  for (const auto& c : j.at("convergence")) {
    s.convergence.push_back(c.is_string() ? std::nullopt
                                          : std::optional<int>(c.get<int>()));
  }
  s.median_convergence = opt_from(j.at("median_convergence"));
  s.final_success = j.at("final_success").get<std::vector<double>>();
  s.final_success_mean = j.at("final_success_mean").get<double>();
  s.final_env_return =
      j.at("final_env_return").get<std::vector<std::vector<double>>>();
  s.final_total_return =
      j.at("final_total_return").get<std::vector<std::vector<double>>>();
  s.final_env_return_mean =
      j.at("final_env_return_mean").get<std::vector<double>>();
  s.final_total_return_mean =
      j.at("final_total_return_mean").get<std::vector<double>>();
  const auto& series = j.at("series");
  s.success = stats_from(series.at("success"));
  s.steps = stats_from(series.at("steps"));
  // Per-agent series are absent when the summary holds no agents.
  for (const auto& e : series.value("env_return", json::array())) {
    s.env_return.push_back(stats_from(e));
  }
  for (const auto& e : series.value("total_return", json::array())) {
    s.total_return.push_back(stats_from(e));
  }
  return out;
}

}  // namespace dilemma_forge::harness
