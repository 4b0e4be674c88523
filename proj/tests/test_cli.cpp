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

// Drives the built command-line tool as a subprocess.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "dilemma_forge/config.hpp"
#include "dilemma_forge/nn.hpp"
#include "fixtures.hpp"

namespace dilemma_forge {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::slurp;
using testing::spit;
using testing::TempDir;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the tool with `args` (already shell-quoted) inside `dir`.
Result cli(const fs::path& dir, const std::string& args,
           const std::string& env = "") {
  const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" +
                          std::string(DF_CLI_PATH) + "' " + args +
                          " > stdout.txt 2> stderr.txt";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(dir / "stdout.txt");
  r.err = slurp(dir / "stderr.txt");
  return r;
}

constexpr const char* kHonest = R"({
  "name": "er21",
  "game": {"kind": "er", "n_agents": 2, "er_threshold": 1},
  "agent_defaults": {"hidden": [8]},
  "episodes": 48,
  "batch_size": 8,
  "seeds": [1],
  "smoothing_window": 8
})";

bool has(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

TEST_CASE("run writes a self-describing directory") {
  TempDir dir("df_cli_run");
  spit(dir.path / "er21.json", kHonest);
  const auto r = cli(dir.path, "run --config er21.json --out out");
  INFO(r.err);
  REQUIRE(r.code == 0);
  for (const char* f : {"summary.csv", "summary.json", "manifest.json",
                        "config.json", "success_rate.svg", "steps.svg",
                        "env_return.svg", "total_return.svg",
                        "seeds/seed_1/episodes.csv",
                        "seeds/seed_1/iterations.csv",
                        "seeds/seed_1/final/agent_0_theta.bin"}) {
    CHECK_MESSAGE(fs::exists(dir.path / "out" / f), f);
  }
  const json m = json::parse(slurp(dir.path / "out" / "manifest.json"));
  const auto c = config::load(dir.path / "er21.json");
  CHECK(m.at("config_hash") == config::hash_hex(config::config_hash(c)));
  CHECK(m.at("status") == "complete");
  CHECK(m.at("version").is_string());
  CHECK(m.at("wall_time_seconds").get<double>() >= 0.0);
  // The stored canonical config reproduces the run's config.
  CHECK(config::load(dir.path / "out" / "config.json") == c);
  // Stored artifacts are enough to plot and compare without recomputing.
  CHECK(cli(dir.path, "plot out --metric steps --out replot").code == 0);
  CHECK(fs::exists(dir.path / "replot" / "steps.svg"));
}

TEST_CASE("seed override runs exactly that many trials") {
  TempDir dir("df_cli_seeds");
  spit(dir.path / "er21.json", kHonest);
  const auto r = cli(dir.path,
                     "run --config er21.json --out out --override "
                     "'seeds=[1,2]' --jobs 2");
  INFO(r.err);
  REQUIRE(r.code == 0);
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir.path / "out" / "seeds")) {
    (void)e;
    ++n;
  }
  CHECK(n == 2);
  const json s = json::parse(slurp(dir.path / "out" / "summary.json"));
  CHECK(s.at("seeds") == json::array({1, 2}));
}

TEST_CASE("config errors exit 2 naming the field") {
  TempDir dir("df_cli_bad");
  spit(dir.path / "bad.json", R"({
  "game": {"kind": "er", "n_agents": 2,
           "er_threshold": 2},
  "seeds": [1]
})");
  const auto r = cli(dir.path, "run --config bad.json --out out");
  CHECK(r.code == 2);
  CHECK(has(r.err, "bad.json:3: game.er_threshold"));
  CHECK_FALSE(fs::exists(dir.path / "out"));

  const auto v = cli(dir.path, "validate --config bad.json");
  CHECK(v.code == 2);
  spit(dir.path / "er21.json", kHonest);
  const auto o = cli(dir.path,
                     "validate --config er21.json --override game.n_agents=1");
  CHECK(o.code == 2);
  CHECK(has(o.err, "override 'game.n_agents=1': game.n_agents"));
  const auto ok = cli(dir.path, "validate --config er21.json");
  CHECK(ok.code == 0);
  CHECK(config::parse(ok.out) == config::load(dir.path / "er21.json"));
  CHECK(cli(dir.path, "run --config missing.json --out out").code == 2);
  CHECK(cli(dir.path, "frobnicate").code == 2);
}

TEST_CASE("an existing output directory needs --force") {
  TempDir dir("df_cli_force");
  spit(dir.path / "er21.json", kHonest);
  REQUIRE(cli(dir.path, "run --config er21.json --out out").code == 0);
  const std::string first = slurp(dir.path / "out/seeds/seed_1/episodes.csv");
  const auto again = cli(dir.path, "run --config er21.json --out out");
  CHECK(again.code == 2);
  CHECK(has(again.err, "--force"));
  spit(dir.path / "out" / "stale.txt", "x");
  REQUIRE(cli(dir.path, "run --config er21.json --out out --force").code == 0);
  CHECK_FALSE(fs::exists(dir.path / "out" / "stale.txt"));
  // Identical config and seed reproduce identical CSVs.
  CHECK(slurp(dir.path / "out/seeds/seed_1/episodes.csv") == first);
  // --force never deletes a directory this tool did not create.
  fs::create_directories(dir.path / "mine");
  spit(dir.path / "mine" / "notes.txt", "keep");
  CHECK(cli(dir.path, "run --config er21.json --out mine --force").code == 2);
  CHECK(slurp(dir.path / "mine" / "notes.txt") == "keep");
}

TEST_CASE("jobs come from the flag or the environment") {
  TempDir dir("df_cli_jobs");
  spit(dir.path / "er21.json", kHonest);
  const std::string two = "--override 'seeds=[4,5]'";
  REQUIRE(cli(dir.path, "run --config er21.json --out a " + two).code == 0);
  REQUIRE(cli(dir.path, "run --config er21.json --out b " + two,
              "DILEMMA_FORGE_JOBS=2")
              .code == 0);
  CHECK(json::parse(slurp(dir.path / "b/manifest.json")).at("jobs") == 2);
  CHECK(slurp(dir.path / "a/summary.csv") == slurp(dir.path / "b/summary.csv"));
  const auto bad = cli(dir.path, "run --config er21.json --out c",
                       "DILEMMA_FORGE_JOBS=many");
  CHECK(bad.code == 2);
  CHECK(has(bad.err, "DILEMMA_FORGE_JOBS"));
}

TEST_CASE("checkpoints are written and loadable") {
  TempDir dir("df_cli_ckpt");
  spit(dir.path / "er21.json", kHonest);
  REQUIRE(cli(dir.path,
              "run --config er21.json --out out --override checkpoint_every=3")
              .code == 0);
  const fs::path ck = dir.path / "out/checkpoints/seed_1";
  CHECK(fs::exists(ck / "iter_3"));
  CHECK(fs::exists(ck / "iter_6"));
  CHECK_FALSE(fs::exists(ck / "iter_4"));
  const auto p = nn::load_params(ck / "iter_6" / "agent_1_eta");
  const auto f = nn::load_params(dir.path / "out/seeds/seed_1/final/agent_1_eta");
  CHECK(p.values == f.values);  // 6 iterations is the whole run
}

TEST_CASE("compare and plot") {
  TempDir dir("df_cli_compare");
  spit(dir.path / "er21.json", kHonest);
  REQUIRE(cli(dir.path, "run --config er21.json --out base").code == 0);
  REQUIRE(cli(dir.path,
              "run --config er21.json --out attack --override "
              "agents='[{\"mode\":\"partial_comm\"},{\"mode\":\"honest\"}]'")
              .code == 0);
  const auto self = cli(dir.path, "compare base base --out self");
  CHECK(self.code == 0);
  CHECK(has(slurp(dir.path / "self/comparison.md"), "| final success |"));
  const auto c = cli(dir.path, "compare base attack");
  CHECK(c.code == 0);
  CHECK(fs::exists(dir.path / "attack/compare_base/comparison_success_rate.svg"));

  spit(dir.path / "er42.json", kHonest);
  REQUIRE(cli(dir.path,
              "run --config er42.json --out other --override game.n_agents=4 "
              "game.er_threshold=2")
              .code == 0);
  const auto mismatch = cli(dir.path, "compare base other");
  CHECK(mismatch.code == 3);
  CHECK(has(mismatch.err, "different games"));

  const auto bad_metric = cli(dir.path, "plot base --metric welfare");
  CHECK(bad_metric.code == 2);
  CHECK(has(bad_metric.err, "success, steps, env_return, total_return"));
  CHECK(cli(dir.path, "plot nowhere").code == 3);
  const auto all = cli(dir.path, "plot base --out figs");
  CHECK(all.code == 0);
  CHECK(fs::exists(dir.path / "figs/success_rate.svg"));
  CHECK(fs::exists(dir.path / "figs/total_return.svg"));
}

}  // namespace
}  // namespace dilemma_forge
