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

#include "dilemma_forge/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <variant>
#include <vector>

#include "dilemma_forge/error.hpp"
#include "json.hpp"

namespace dilemma_forge::config {

namespace {

using nlohmann::json;
using harness::AgentConfig;
using harness::ExperimentConfig;

// A bad value at a display path ("agents[1].mode"); located later.
struct FieldError {
  std::string path;
  std::string why;
};

std::string member_path(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

std::string element_path(const std::string& parent, std::size_t i) {
  return parent + "[" + std::to_string(i) + "]";
}

// Source line of every key and array element of a document nlohmann has
// already accepted, keyed by display path. Also the one place that sees
// duplicate keys, which nlohmann silently collapses.
class LineIndex {
 public:
  explicit LineIndex(std::string_view text) : text_(text) { value(""); }

  // First key that appears twice in one object, if any.
  const std::optional<std::string>& duplicate() const { return duplicate_; }

  std::optional<int> line_of(std::string path) const {
    // Fall back to the nearest enclosing value that exists in the text; the
    // document root says nothing about where a missing field belongs.
    while (!path.empty()) {
      if (auto it = lines_.find(path); it != lines_.end()) return it->second;
      const auto cut = path.find_last_of(".[");
      path = cut == std::string::npos ? "" : path.substr(0, cut);
    }
    return std::nullopt;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }

  std::string string_token() {
    std::string out;
    ++pos_;  // opening quote
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\') out += text_[pos_++];
      if (pos_ < text_.size()) out += text_[pos_++];
    }
    ++pos_;  // closing quote
    return out;
  }

  void value(const std::string& path) {
    skip_ws();
    lines_.try_emplace(path, line_);
    if (pos_ >= text_.size()) return;
    const char c = text_[pos_];
    if (c == '{') {
      ++pos_;
      skip_ws();
      if (text_[pos_] == '}') {
        ++pos_;
        return;
      }
      while (true) {
        skip_ws();
        const int key_line = line_;
        const std::string child = member_path(path, string_token());
        if (!lines_.try_emplace(child, key_line).second && !duplicate_) {
          duplicate_ = child;
          lines_[child] = key_line;  // point at the repeat
        }
        skip_ws();
        ++pos_;  // ':'
        value(child);
        skip_ws();
        if (text_[pos_++] != ',') return;
      }
    }
    if (c == '[') {
      ++pos_;
      skip_ws();
      if (text_[pos_] == ']') {
        ++pos_;
        return;
      }
      for (std::size_t i = 0;; ++i) {
        value(element_path(path, i));
        skip_ws();
        if (text_[pos_++] != ',') return;
      }
    }
    if (c == '"') {
      string_token();
      return;
    }
    while (pos_ < text_.size() &&
           std::string_view(",}] \t\r\n").find(text_[pos_]) ==
               std::string_view::npos) {
      ++pos_;
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
  std::optional<std::string> duplicate_;
};

double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) throw FieldError{path, "expected a number"};
  return v.get<double>();
}

int as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw FieldError{path, "expected an integer"};
  const auto x = v.get<std::int64_t>();
  if (v.is_number_unsigned() && v.get<std::uint64_t>() >
                                    static_cast<std::uint64_t>(
                                        std::numeric_limits<int>::max())) {
    throw FieldError{path, "integer out of range"};
  }
  if (x < std::numeric_limits<int>::min() ||
      x > std::numeric_limits<int>::max()) {
    throw FieldError{path, "integer out of range"};
  }
  return static_cast<int>(x);
}

std::uint64_t as_seed(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    throw FieldError{path, "seeds must be non-negative"};
  }
  throw FieldError{path, "expected an integer"};
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw FieldError{path, "expected true or false"};
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw FieldError{path, "expected a string"};
  return v.get<std::string>();
}

std::vector<int> as_int_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw FieldError{path, "expected an array of integers"};
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(as_int(v[i], element_path(path, i)));
  }
  return out;
}

// Walks one JSON object, refusing keys outside `allowed` up front.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path,
               std::initializer_list<std::string_view> allowed,
               std::initializer_list<std::string_view> extra = {})
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw FieldError{path_, "expected an object"};
    }
    std::set<std::string_view> ok(allowed);
    ok.insert(extra.begin(), extra.end());
    for (const auto& [key, _] : j_.items()) {
      if (ok.count(key)) continue;
      std::string list;
      for (auto k : ok) list += (list.empty() ? "" : ", ") + std::string(k);
      throw FieldError{member_path(path_, key),
                       "unknown key (expected one of: " + list + ")"};
    }
  }

  const json* find(const std::string& key) const {
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string at(const std::string& key) const {
    return member_path(path_, key);
  }

  void read(const std::string& key, double& out) const {
    if (const auto* v = find(key)) out = as_double(*v, at(key));
  }
  void read(const std::string& key, int& out) const {
    if (const auto* v = find(key)) out = as_int(*v, at(key));
  }
  void read(const std::string& key, bool& out) const {
    if (const auto* v = find(key)) out = as_bool(*v, at(key));
  }
  void read(const std::string& key, std::string& out) const {
    if (const auto* v = find(key)) out = as_string(*v, at(key));
  }
  void read(const std::string& key, std::vector<int>& out) const {
    if (const auto* v = find(key)) out = as_int_list(*v, at(key));
  }

 private:
  const json& j_;
  std::string path_;
};

admo::Settings read_admo(const json& j, const std::string& path) {
  admo::Settings s;
  const ObjectReader r(
      j, path,
      {"s", "beta_b", "lambda_d", "lambda_override", "drift_trigger", "c_init",
       "k_ref", "budget", "clip_norm", "ema_decay", "kappa", "floor_cap",
       "floor_sum_cap", "lr", "beta1", "beta2", "epsilon", "weight_decay"});
  r.read("s", s.s);
  r.read("beta_b", s.beta_b);
  r.read("lambda_d", s.lambda_d);
  r.read("lambda_override", s.lambda_override);
  r.read("drift_trigger", s.drift_trigger);
  if (const auto* v = r.find("c_init")) {
    const auto where = r.at("c_init");
    if (!v->is_array() || v->size() != 2) {
      throw FieldError{where, "expected [c1, c2]"};
    }
    s.c_init.c1 = as_double((*v)[0], element_path(where, 0));
    s.c_init.c2 = as_double((*v)[1], element_path(where, 1));
  }
  r.read("k_ref", s.k_ref);
  r.read("budget", s.budget);
  r.read("clip_norm", s.clip_norm);
  r.read("ema_decay", s.ema_decay);
  r.read("kappa", s.kappa);
  r.read("floor_cap", s.floor_cap);
  r.read("floor_sum_cap", s.floor_sum_cap);
  r.read("lr", s.lr);
  r.read("beta1", s.beta1);
  r.read("beta2", s.beta2);
  r.read("epsilon", s.epsilon);
  r.read("weight_decay", s.weight_decay);
  return s;
}

AgentConfig read_agent(const json& j, const std::string& path,
                       const AgentConfig& defaults) {
  if (!j.is_object()) throw FieldError{path, "expected an object"};
  std::string mode = "honest";
  if (const auto it = j.find("mode"); it != j.end()) {
    mode = as_string(*it, member_path(path, "mode"));
  }
  AgentConfig a = defaults;
  const std::initializer_list<std::string_view> common = {
      "mode", "hidden", "lr_policy", "lr_incentive"};
  std::optional<ObjectReader> r;
  if (mode == "honest") {
    r.emplace(j, path, common);
    a.mode = manip::Honest{};
  } else if (mode == "partial_comm") {
    r.emplace(j, path, common);
    a.mode = manip::PartialComm{};
  } else if (mode == "fake_incentive") {
    r.emplace(j, path, common, std::initializer_list<std::string_view>{"c"});
    manip::FakeIncentive f;
    r->read("c", f.c);
    a.mode = f;
  } else if (mode == "bypass") {
    r.emplace(j, path, common);
    a.mode = manip::Bypass{};
  } else if (mode == "reverse") {
    r.emplace(j, path, common);
    a.mode = manip::Reverse{};
  } else if (mode == "admo") {
    r.emplace(j, path, common,
              std::initializer_list<std::string_view>{"admo"});
    manip::Admo m;
    if (const auto* v = r->find("admo")) m.settings = read_admo(*v, r->at("admo"));
    a.mode = m;
  } else {
    throw FieldError{member_path(path, "mode"),
                     "unknown mode '" + mode +
                         "' (expected honest, partial_comm, fake_incentive, "
                         "bypass, reverse or admo)"};
  }
  r->read("hidden", a.hidden);
  r->read("lr_policy", a.lr_policy);
  r->read("lr_incentive", a.lr_incentive);
  return a;
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  const ObjectReader r(
      j, "",
      {"name", "game", "agents", "agent_defaults", "r_max", "episodes",
       "batch_size", "alpha", "entropy_coef", "baseline", "seeds",
       "smoothing_window", "convergence_threshold", "checkpoint_every",
       "allow_matrix_bypass"});
  r.read("name", c.name);
  if (const auto* g = r.find("game")) {
    const ObjectReader gr(*g, "game",
                          {"kind", "n_agents", "er_threshold", "horizon",
                           "discount"});
    if (const auto* k = gr.find("kind")) {
      try {
        c.game.kind = env::game_kind_from_string(as_string(*k, "game.kind"));
      } catch (const ConfigError& e) {
        std::string why = e.what();
        if (why.rfind("game.kind: ", 0) == 0) why = why.substr(11);
        throw FieldError{"game.kind", why};
      }
    }
    gr.read("n_agents", c.game.n_agents);
    gr.read("er_threshold", c.game.er_threshold);
    gr.read("horizon", c.game.horizon);
    gr.read("discount", c.game.discount);
  }
  AgentConfig defaults;
  if (const auto* d = r.find("agent_defaults")) {
    const ObjectReader dr(*d, "agent_defaults",
                          {"hidden", "lr_policy", "lr_incentive"});
    dr.read("hidden", defaults.hidden);
    dr.read("lr_policy", defaults.lr_policy);
    dr.read("lr_incentive", defaults.lr_incentive);
  }
  if (const auto* a = r.find("agents")) {
    if (!a->is_array()) throw FieldError{"agents", "expected an array"};
    for (std::size_t i = 0; i < a->size(); ++i) {
      c.agents.push_back(
          read_agent((*a)[i], element_path("agents", i), defaults));
    }
  } else {
    c.agents.assign(std::max(c.game.n_agents, 0), defaults);
  }
  r.read("r_max", c.r_max);
  r.read("episodes", c.episodes);
  r.read("batch_size", c.batch_size);
  r.read("alpha", c.alpha);
  r.read("entropy_coef", c.entropy_coef);
  if (const auto* b = r.find("baseline")) {
    const auto name = as_string(*b, "baseline");
    if (name == "leave_one_out") {
      c.baseline = lio::Baseline::kLeaveOneOut;
    } else if (name == "none") {
      c.baseline = lio::Baseline::kNone;
    } else {
      throw FieldError{"baseline", "expected leave_one_out or none, got '" +
                                       name + "'"};
    }
  }
  if (const auto* s = r.find("seeds")) {
    if (!s->is_array()) throw FieldError{"seeds", "expected an array"};
    for (std::size_t i = 0; i < s->size(); ++i) {
      c.seeds.push_back(as_seed((*s)[i], element_path("seeds", i)));
    }
  }
  r.read("smoothing_window", c.smoothing_window);
  r.read("convergence_threshold", c.convergence_threshold);
  r.read("checkpoint_every", c.checkpoint_every);
  r.read("allow_matrix_bypass", c.allow_matrix_bypass);
  return c;
}

struct OverrideSite {
  std::string path;  // display path it set
  std::string text;  // as given
};

// "agents[0].mode" or "agents.0.mode" -> keys and indices.
std::vector<std::variant<std::string, std::size_t>> split_path(
    const std::string& path, const std::string& text) {
  std::vector<std::variant<std::string, std::size_t>> out;
  auto bad = [&] {
    return ConfigError("override '" + text + "': malformed path '" + path +
                       "'");
  };
  auto is_index = [](const std::string& s) {
    return !s.empty() &&
           s.find_first_not_of("0123456789") == std::string::npos;
  };
  std::size_t i = 0;
  while (i <= path.size()) {
    const auto dot = path.find('.', i);
    std::string seg =
        path.substr(i, dot == std::string::npos ? std::string::npos : dot - i);
    const auto br = seg.find('[');
    std::string head = seg.substr(0, br);
    if (head.empty() && br != 0) throw bad();
    if (!head.empty()) {
      if (is_index(head)) {
        out.emplace_back(static_cast<std::size_t>(std::stoull(head)));
      } else {
        out.emplace_back(head);
      }
    }
    for (auto p = br; p != std::string::npos;) {
      const auto close = seg.find(']', p);
      if (close == std::string::npos) throw bad();
      const auto idx = seg.substr(p + 1, close - p - 1);
      if (!is_index(idx)) throw bad();
      out.emplace_back(static_cast<std::size_t>(std::stoull(idx)));
      p = close + 1 < seg.size() ? close + 1 : std::string::npos;
      if (p != std::string::npos && seg[p] != '[') throw bad();
    }
    if (dot == std::string::npos) break;
    i = dot + 1;
  }
  if (out.empty()) throw bad();
  return out;
}

OverrideSite apply_override(json& doc, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + text + "': expected path=value");
  }
  const std::string path = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;  // bare word, e.g. mode=reverse
  }
  const auto segs = split_path(path, text);
  json* cur = &doc;
  std::string shown;
  for (std::size_t k = 0; k < segs.size(); ++k) {
    if (const auto* key = std::get_if<std::string>(&segs[k])) {
      if (!cur->is_object()) {
        throw ConfigError("override '" + text + "': " +
                          (shown.empty() ? "document" : shown) +
                          " is not an object");
      }
      shown = member_path(shown, *key);
      cur = &(*cur)[*key];
    } else {
      const auto idx = std::get<std::size_t>(segs[k]);
      if (!cur->is_array() || idx >= cur->size()) {
        throw ConfigError("override '" + text + "': " + shown +
                          " has no element " + std::to_string(idx));
      }
      shown = element_path(shown, idx);
      cur = &(*cur)[idx];
    }
  }
  *cur = std::move(value);
  return {shown, text};
}

bool covers(const std::string& outer, const std::string& path) {
  if (path.rfind(outer, 0) != 0) return false;
  return path.size() == outer.size() || path[outer.size()] == '.' ||
         path[outer.size()] == '[';
}

// Leading dotted field of a validation message, e.g. "agents[0].hidden".
std::string leading_field(const std::string& msg) {
  std::size_t n = 0;
  while (n < msg.size() &&
         (std::isalnum(static_cast<unsigned char>(msg[n])) || msg[n] == '_' ||
          msg[n] == '.' || msg[n] == '[' || msg[n] == ']')) {
    ++n;
  }
  std::string f = msg.substr(0, n);
  while (!f.empty() && f.back() == '.') f.pop_back();
  return f;
}

json admo_json(const admo::Settings& s) {
  return json{{"s", s.s},
              {"beta_b", s.beta_b},
              {"lambda_d", s.lambda_d},
              {"lambda_override", s.lambda_override},
              {"drift_trigger", s.drift_trigger},
              {"c_init", {s.c_init.c1, s.c_init.c2}},
              {"k_ref", s.k_ref},
              {"budget", s.budget},
              {"clip_norm", s.clip_norm},
              {"ema_decay", s.ema_decay},
              {"kappa", s.kappa},
              {"floor_cap", s.floor_cap},
              {"floor_sum_cap", s.floor_sum_cap},
              {"lr", s.lr},
              {"beta1", s.beta1},
              {"beta2", s.beta2},
              {"epsilon", s.epsilon},
              {"weight_decay", s.weight_decay}};
}

json to_json(const ExperimentConfig& c) {
  json agents = json::array();
  for (const auto& a : c.agents) {
    json o{{"mode", manip::mode_name(a.mode)},
           {"hidden", a.hidden},
           {"lr_policy", a.lr_policy},
           {"lr_incentive", a.lr_incentive}};
    if (const auto* f = std::get_if<manip::FakeIncentive>(&a.mode)) {
      o["c"] = f->c;
    }
    if (const auto* m = std::get_if<manip::Admo>(&a.mode)) {
      o["admo"] = admo_json(m->settings);
    }
    agents.push_back(std::move(o));
  }
  return json{
      {"name", c.name},
      {"game",
       {{"kind", env::to_string(c.game.kind)},
        {"n_agents", c.game.n_agents},
        {"er_threshold", c.game.er_threshold},
        {"horizon", c.game.horizon},
        {"discount", c.game.discount}}},
      {"agents", agents},
      {"r_max", c.r_max},
      {"episodes", c.episodes},
      {"batch_size", c.batch_size},
      {"alpha", c.alpha},
      {"entropy_coef", c.entropy_coef},
      {"baseline",
       c.baseline == lio::Baseline::kNone ? "none" : "leave_one_out"},
      {"seeds", c.seeds},
      {"smoothing_window", c.smoothing_window},
      {"convergence_threshold", c.convergence_threshold},
      {"checkpoint_every", c.checkpoint_every},
      {"allow_matrix_bypass", c.allow_matrix_bypass}};
}

}  // namespace

ExperimentConfig parse(std::string_view text, std::string_view source,
                       std::span<const std::string> overrides) {
  const std::string src(source);
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0,
                                            text.size());
    const int line =
        1 + static_cast<int>(std::count(text.begin(), text.begin() + upto, '\n'));
    std::string why = e.what();
    if (const auto p = why.find("] "); p != std::string::npos) {
      why = why.substr(p + 2);
    }
    throw ConfigError(src + ":" + std::to_string(line) + ": invalid JSON: " +
                      why);
  }
  std::optional<LineIndex> index;
  std::vector<OverrideSite> sites;
  auto locate = [&](const std::string& path) {
    for (auto it = sites.rbegin(); it != sites.rend(); ++it) {
      if (covers(it->path, path)) return "override '" + it->text + "'";
    }
    if (index) {
      if (const auto line = index->line_of(path)) {
        return src + ":" + std::to_string(*line);
      }
    }
    return src;
  };
  try {
    index.emplace(text);
    if (const auto& dup = index->duplicate()) {
      throw FieldError{*dup, "duplicate key"};
    }
    if (!doc.is_object()) throw FieldError{"", "expected a JSON object"};
    for (const auto& o : overrides) sites.push_back(apply_override(doc, o));
    ExperimentConfig c = from_json(doc);
    try {
      c.validate();
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      throw ConfigError(locate(leading_field(msg)) + ": " + msg);
    }
    return c;
  } catch (const FieldError& e) {
    const std::string field = e.path.empty() ? "" : e.path + ": ";
    throw ConfigError(locate(e.path) + ": " + field + e.why);
  }
}

ExperimentConfig load(const std::filesystem::path& path,
                      std::span<const std::string> overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot read config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string(), overrides);
}

std::string canonical_json(const ExperimentConfig& config) {
  return to_json(config).dump(2) + "\n";
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  json j = to_json(config);
  j.erase("name");
  return harness::fnv1a64(j.dump());
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dilemma_forge::config
