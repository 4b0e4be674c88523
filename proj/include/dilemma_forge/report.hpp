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

#ifndef DILEMMA_FORGE_REPORT_HPP_
#define DILEMMA_FORGE_REPORT_HPP_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dilemma_forge/harness.hpp"

namespace dilemma_forge::report {

enum class Metric { kSuccess, kSteps, kEnvReturn, kTotalReturn };

const std::vector<std::string>& metric_names();
// Throws ConfigError listing the valid names.
Metric metric_from_string(std::string_view name);
std::string metric_name(Metric metric);
// success -> success_rate.svg, otherwise <name>.svg.
std::string svg_file_name(Metric metric);

struct Curve {
  std::string label;
  std::vector<double> mean;
  std::vector<double> std;
};

struct Panel {
  std::string title;
  std::string y_label;
  std::vector<Curve> curves;
  // Fixed y range; derived from the curves when unset.
  std::optional<std::pair<double, double>> y_range;
};

// Trailing moving average over `window` entries (fewer at the start).
std::vector<double> smooth(std::span<const double> series, int window);

// One curve per series of the metric: the team curve for success and steps,
// one per agent for returns. Mean and std are smoothed alike.
Panel metric_panel(const harness::Summary& summary, Metric metric,
                   int window = 1);

// Panels stacked vertically over a shared episode axis; each curve is its
// mean line over a +-1 std band.
std::string render_svg(std::span<const Panel> panels);

// Writes `<out_dir>/<svg_file_name(metric)>` from the stored summary in
// `run_dir`. Throws std::runtime_error when the run holds no records.
std::filesystem::path plot(const std::filesystem::path& run_dir,
                           Metric metric, int window,
                           const std::filesystem::path& out_dir);

struct ComparisonRow {
  std::string quantity;
  std::optional<double> baseline;
  std::optional<double> attack;
  // Text forms; "none vs <e>" style when either side never converged.
  std::string delta;
  std::string relative;
};

struct Comparison {
  std::string baseline_name;
  std::string attack_name;
  std::vector<ComparisonRow> rows;
  // baseline median / attack median; > 1 means the attack run converged
  // sooner. Unset unless both converged.
  std::optional<double> speedup;

  std::string markdown() const;
  std::string csv() const;
};

// Throws std::runtime_error when the two runs were played on different
// games.
Comparison compare(const harness::StoredSummary& baseline,
                   const harness::StoredSummary& attack);

// comparison.md, comparison.csv and paired baseline-over-attack SVGs for
// success and total return.
void write_comparison(const Comparison& comparison,
                      const harness::StoredSummary& baseline,
                      const harness::StoredSummary& attack, int window,
                      const std::filesystem::path& out_dir);

}  // namespace dilemma_forge::report

#endif  // DILEMMA_FORGE_REPORT_HPP_
