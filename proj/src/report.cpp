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

#include "dilemma_forge/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dilemma_forge/error.hpp"

namespace dilemma_forge::report {

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::string opt_num(const std::optional<double>& x) {
  return x ? num(*x) : "none";
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Roughly `target` round ticks (1, 2 or 5 times a power of ten) in [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target) {
  const double span = hi - lo;
  const double raw = span / std::max(target, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span;
       t += step) {
    out.push_back(std::abs(t) < 1e-12 * span ? 0.0 : t);
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#ff7f0e", "#9467bd", "#8c564b"};

constexpr int kWidth = 760;
constexpr int kPanelHeight = 280;
constexpr int kLeft = 72;
constexpr int kRight = 24;
constexpr int kTop = 34;
constexpr int kBottom = 46;
// Polylines keep at most this many vertices; long runs are strided.
constexpr std::size_t kMaxPoints = 1200;

std::pair<double, double> data_range(const Panel& p) {
  double lo = INFINITY;
  double hi = -INFINITY;
  for (const auto& c : p.curves) {
    for (std::size_t i = 0; i < c.mean.size(); ++i) {
      const double s = i < c.std.size() ? c.std[i] : 0.0;
      lo = std::min(lo, c.mean[i] - s);
      hi = std::max(hi, c.mean[i] + s);
    }
  }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (hi - lo < 1e-9) return {lo - 1.0, hi + 1.0};  // flat series
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

void render_panel(std::ostringstream& out, const Panel& p, int y0) {
  std::size_t n = 0;
  for (const auto& c : p.curves) n = std::max(n, c.mean.size());
  const double x_lo = 1.0;
  const double x_hi = std::max<double>(2.0, static_cast<double>(n));
  const auto [y_lo, y_hi] = p.y_range ? *p.y_range : data_range(p);
  const double pw = kWidth - kLeft - kRight;
  const double ph = kPanelHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto sy = [&](double y) {
    return y0 + kTop + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph;
  };
  char buf[160];

  out << "<text x=\"" << kWidth / 2 << "\" y=\"" << y0 + 20
      << "\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(p.title)
      << "</text>\n";
  for (double t : nice_ticks(y_lo, y_hi, 5)) {
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%d\" y1=\"%.2f\" x2=\"%d\" y2=\"%.2f\" "
                  "stroke=\"#e0e0e0\"/>\n",
                  kLeft, sy(t), kWidth - kRight, sy(t));
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%d\" y=\"%.2f\" text-anchor=\"end\" "
                  "font-size=\"11\">",
                  kLeft - 6, sy(t) + 4);
    out << buf << num(t) << "</text>\n";
  }
  for (double t : nice_ticks(x_lo, x_hi, 6)) {
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                  "stroke=\"#444\"/>\n",
                  sx(t), sy(y_lo), sx(t), sy(y_lo) + 5);
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\" "
                  "font-size=\"11\">",
                  sx(t), sy(y_lo) + 18);
    out << buf << num(t) << "</text>\n";
  }
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%d\" y=\"%d\" width=\"%.0f\" height=\"%.0f\" "
                "fill=\"none\" stroke=\"#444\"/>\n",
                kLeft, y0 + kTop, pw, ph);
  out << buf;
  out << "<text x=\"" << kLeft + pw / 2 << "\" y=\""
      << y0 + kPanelHeight - 8
      << "\" text-anchor=\"middle\" font-size=\"12\">episode</text>\n";
  std::snprintf(buf, sizeof buf,
                "<text transform=\"translate(16 %.2f) rotate(-90)\" "
                "text-anchor=\"middle\" font-size=\"12\">",
                y0 + kTop + ph / 2);
  out << buf << xml_escape(p.y_label) << "</text>\n";

  for (std::size_t k = 0; k < p.curves.size(); ++k) {
    const auto& c = p.curves[k];
    const char* color = kPalette[k % std::size(kPalette)];
    const std::size_t m = c.mean.size();
    if (m == 0) continue;
    const std::size_t stride = std::max<std::size_t>(1, m / kMaxPoints);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < m; i += stride) idx.push_back(i);
    if (idx.back() != m - 1) idx.push_back(m - 1);
    auto clamp_y = [&](double y) { return std::clamp(y, y_lo, y_hi); };
    std::ostringstream band;
    for (auto i : idx) {
      const double s = i < c.std.size() ? c.std[i] : 0.0;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", sx(i + 1.0),
                    sy(clamp_y(c.mean[i] + s)));
      band << buf;
    }
    for (auto it = idx.rbegin(); it != idx.rend(); ++it) {
      const double s = *it < c.std.size() ? c.std[*it] : 0.0;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", sx(*it + 1.0),
                    sy(clamp_y(c.mean[*it] - s)));
      band << buf;
    }
    out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.18\" "
        << "stroke=\"none\" points=\"" << band.str() << "\"/>\n";
    std::ostringstream line;
    for (auto i : idx) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", sx(i + 1.0),
                    sy(clamp_y(c.mean[i])));
      line << buf;
    }
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"" << line.str() << "\"/>\n";
    const int ly = y0 + kTop + 16 + static_cast<int>(k) * 16;
    out << "<line x1=\"" << kWidth - kRight - 120 << "\" y1=\"" << ly - 4
        << "\" x2=\"" << kWidth - kRight - 100 << "\" y2=\"" << ly - 4
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kWidth - kRight - 94 << "\" y=\"" << ly
        << "\" font-size=\"11\">" << xml_escape(c.label) << "</text>\n";
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void require_records(const harness::Summary& s, const std::string& where) {
  if (s.n_episodes == 0 || s.seeds.empty()) {
    throw std::runtime_error(where + ": no records to report on");
  }
}

}  // namespace

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"success", "steps",
                                                 "env_return", "total_return"};
  return names;
}

Metric metric_from_string(std::string_view name) {
  if (name == "success") return Metric::kSuccess;
  if (name == "steps") return Metric::kSteps;
  if (name == "env_return") return Metric::kEnvReturn;
  if (name == "total_return") return Metric::kTotalReturn;
  std::string list;
  for (const auto& n : metric_names()) list += (list.empty() ? "" : ", ") + n;
  throw ConfigError("unknown metric '" + std::string(name) +
                    "' (valid metrics: " + list + ")");
}

std::string metric_name(Metric metric) {
  return metric_names()[static_cast<std::size_t>(metric)];
}

std::string svg_file_name(Metric metric) {
  return metric == Metric::kSuccess ? "success_rate.svg"
                                    : metric_name(metric) + ".svg";
}

std::vector<double> smooth(std::span<const double> series, int window) {
  const std::size_t w = static_cast<std::size_t>(std::max(window, 1));
  std::vector<double> out(series.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    acc += series[i];
    if (i >= w) acc -= series[i - w];
    out[i] = acc / static_cast<double>(std::min(i + 1, w));
  }
  return out;
}

Panel metric_panel(const harness::Summary& summary, Metric metric,
                   int window) {
  auto curve = [&](std::string label, const harness::SeriesStats& s) {
    return Curve{std::move(label), smooth(s.mean, window),
                 smooth(s.std, window)};
  };
  Panel p;
  switch (metric) {
    case Metric::kSuccess:
      p.y_label = "success rate";
      p.y_range = std::make_pair(0.0, 1.0);
      p.curves.push_back(curve("team", summary.success));
      break;
    case Metric::kSteps:
      p.y_label = "episode length";
      p.curves.push_back(curve("team", summary.steps));
      break;
    case Metric::kEnvReturn:
    case Metric::kTotalReturn: {
      p.y_label = metric == Metric::kEnvReturn ? "env return" : "total return";
      const auto& series = metric == Metric::kEnvReturn
                               ? summary.env_return
                               : summary.total_return;
      for (std::size_t a = 0; a < series.size(); ++a) {
        p.curves.push_back(curve("agent " + std::to_string(a), series[a]));
      }
      break;
    }
  }
  p.title = p.y_label + " (mean +- 1 std over " +
            std::to_string(summary.seeds.size()) + " seeds)";
  return p;
}

std::string render_svg(std::span<const Panel> panels) {
  const int height = kPanelHeight * static_cast<int>(panels.size());
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << kWidth << ' '
      << height << "\" font-family=\"sans-serif\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) {
    render_panel(out, panels[i], static_cast<int>(i) * kPanelHeight);
  }
  out << "</svg>\n";
  return out.str();
}

std::filesystem::path plot(const std::filesystem::path& run_dir,
                           Metric metric, int window,
                           const std::filesystem::path& out_dir) {
  const auto stored = harness::read_summary(run_dir);
  require_records(stored.summary, run_dir.string());
  Panel p = metric_panel(stored.summary, metric, window);
  p.title = stored.name + ": " + p.title;
  std::filesystem::create_directories(out_dir);
  const auto path = out_dir / svg_file_name(metric);
  write_text(path, render_svg(std::span<const Panel>(&p, 1)));
  return path;
}

Comparison compare(const harness::StoredSummary& baseline,
                   const harness::StoredSummary& attack) {
  if (!(baseline.game == attack.game)) {
    auto show = [](const env::GameSpec& g) {
      std::string s = env::to_string(g.kind) + " N=" +
                      std::to_string(g.n_agents);
      if (g.kind == env::GameKind::kEscapeRoom) {
        s += " M=" + std::to_string(g.er_threshold);
      }
      return s + " horizon=" + std::to_string(g.horizon) +
             " discount=" + num(g.discount);
    };
    throw std::runtime_error(
        "runs were played on different games (" + show(baseline.game) +
        " vs " + show(attack.game) + "); their curves are not comparable");
  }
  require_records(baseline.summary, baseline.name);
  require_records(attack.summary, attack.name);
  Comparison c;
  c.baseline_name = baseline.name;
  c.attack_name = attack.name;
  auto add = [&](std::string q, std::optional<double> b,
                 std::optional<double> a) {
    ComparisonRow r{std::move(q), b, a, "", ""};
    if (a && b) {
      const double d = *a - *b;
      r.delta = num(d);
      if (*b != 0.0) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%+.1f%%", 100.0 * d / std::abs(*b));
        r.relative = buf;
      } else {
        r.relative = d == 0.0 ? "+0.0%" : "n/a";
      }
    } else {
      r.delta = opt_num(a) + " vs " + opt_num(b);
      r.relative = "n/a";
    }
    c.rows.push_back(std::move(r));
  };
  const auto& bs = baseline.summary;
  const auto& as = attack.summary;
  add("median convergence episode", bs.median_convergence,
      as.median_convergence);
  add("final success", bs.final_success_mean, as.final_success_mean);
  for (int j = 0; j < bs.n_agents; ++j) {
    add("agent " + std::to_string(j) + " final total return",
        bs.final_total_return_mean[j], as.final_total_return_mean[j]);
  }
  for (int j = 0; j < bs.n_agents; ++j) {
    add("agent " + std::to_string(j) + " final env return",
        bs.final_env_return_mean[j], as.final_env_return_mean[j]);
  }
  if (bs.median_convergence && as.median_convergence &&
      *as.median_convergence > 0.0) {
    c.speedup = *bs.median_convergence / *as.median_convergence;
  }
  return c;
}

std::string Comparison::markdown() const {
  std::ostringstream out;
  out << "# " << attack_name << " vs " << baseline_name << "\n\n";
  out << "| quantity | baseline | attack | delta | relative |\n";
  out << "|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out << "| " << r.quantity << " | " << opt_num(r.baseline) << " | "
        << opt_num(r.attack) << " | " << r.delta << " | " << r.relative
        << " |\n";
  }
  out << "\nconvergence speedup (baseline / attack): "
      << (speedup ? num(*speedup) : std::string("n/a")) << "\n";
  return out.str();
}

std::string Comparison::csv() const {
  auto field = [](const std::optional<double>& x) {
    return x ? harness::format_double(*x) : std::string("none");
  };
  std::ostringstream out;
  out << "quantity,baseline,attack,delta,relative\n";
  for (const auto& r : rows) {
    out << r.quantity << ',' << field(r.baseline) << ',' << field(r.attack)
        << ',' << r.delta << ',' << r.relative << '\n';
  }
  out << "speedup,,," << (speedup ? harness::format_double(*speedup) : "none")
      << ",\n";
  return out.str();
}

void write_comparison(const Comparison& comparison,
                      const harness::StoredSummary& baseline,
                      const harness::StoredSummary& attack, int window,
                      const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "comparison.md", comparison.markdown());
  write_text(out_dir / "comparison.csv", comparison.csv());
  for (Metric m : {Metric::kSuccess, Metric::kTotalReturn}) {
    std::vector<Panel> panels = {metric_panel(baseline.summary, m, window),
                                 metric_panel(attack.summary, m, window)};
    panels[0].title = "baseline: " + baseline.name;
    panels[1].title = "attack: " + attack.name;
    if (m != Metric::kSuccess) {
      // Shared scale so the two panels read against each other.
      const auto r0 = data_range(panels[0]);
      const auto r1 = data_range(panels[1]);
      const auto shared = std::make_pair(std::min(r0.first, r1.first),
                                         std::max(r0.second, r1.second));
      panels[0].y_range = shared;
      panels[1].y_range = shared;
    }
    write_text(out_dir / ("comparison_" + svg_file_name(m)),
               render_svg(panels));
  }
}

}  // namespace dilemma_forge::report
