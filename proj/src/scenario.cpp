#include "sc2ba/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <random>
#include <sstream>

#include "sc2ba/error.hpp"
#include "sc2ba/rng.hpp"

namespace sc2ba {

namespace config {

[[noreturn]] void bad_value(const ConfigDocument::Entry& e, std::string_view what) {
  throw Error(ErrorCode::ConfigSyntax, "line " + std::to_string(e.line) + ": key '" +
                                           e.key + "' expects " + std::string(what) +
                                           ", got '" + e.value + "'");
}

double parse_double(const ConfigDocument::Entry& e) {
  double v = 0;
  const char* begin = e.value.data();
  const char* end = begin + e.value.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) bad_value(e, "a number");
  return v;
}

long long parse_int(const ConfigDocument::Entry& e) {
  long long v = 0;
  const char* begin = e.value.data();
  const char* end = begin + e.value.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) bad_value(e, "an integer");
  return v;
}

bool parse_bool(const ConfigDocument::Entry& e) {
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  bad_value(e, "true or false");
}

[[noreturn]] void unknown_key(std::string_view section, const ConfigDocument::Entry& e) {
  throw Error(ErrorCode::UnknownConfigKey, "line " + std::to_string(e.line) + ": [" +
                                               std::string(section) + "] " + e.key);
}

}  // namespace config

using namespace config;

namespace {

constexpr double kFormationSpacing = 2.0;
constexpr int kRowsPerColumn = 8;
constexpr double kJitterGrid = 1024.0;

ScenarioSpec make_builtin(std::string name, std::vector<UnitGroup> red,
                          std::vector<UnitGroup> blue, int limit) {
  ScenarioSpec s;
  s.name = name;
  s.base = std::move(name);
  s.red = std::move(red);
  s.blue = std::move(blue);
  s.episode_step_limit = limit;
  return s;
}

std::vector<ScenarioSpec> build_registry() {
  const auto m = [](int n) { return std::vector<UnitGroup>{{kMarine, n}}; };
  const std::vector<UnitGroup> mmm = {{kMedivac, 1}, {kMarauder, 2}, {kMarine, 7}};
  const std::vector<UnitGroup> s2z3 = {{kStalker, 2}, {kZealot, 3}};
  const std::vector<UnitGroup> s3z5 = {{kStalker, 3}, {kZealot, 5}};
  const std::vector<UnitGroup> c1s3z5 = {{kColossus, 1}, {kStalker, 3}, {kZealot, 5}};
  const std::vector<UnitGroup> mmm2_blue = {{kMedivac, 1}, {kMarauder, 3}, {kMarine, 8}};
  return {
      make_builtin("3m", m(3), m(3), 120),
      make_builtin("8m", m(8), m(8), 120),
      make_builtin("25m", m(25), m(25), 200),
      make_builtin("MMM", mmm, mmm, 150),
      make_builtin("2s3z", s2z3, s2z3, 120),
      make_builtin("3s5z", s3z5, s3z5, 150),
      make_builtin("1c3s5z", c1s3z5, c1s3z5, 150),
      make_builtin("5m_vs_6m", m(5), m(6), 150),
      make_builtin("10m_vs_11m", m(10), m(11), 180),
      make_builtin("MMM2", mmm, mmm2_blue, 180),
  };
}

std::map<int, int> as_multiset(const std::vector<UnitGroup>& groups) {
  std::map<int, int> out;
  for (const auto& g : groups) out[g.spec_id] += g.count;
  return out;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

void apply_team_overrides(std::vector<UnitGroup>& groups, std::string_view section,
                          const std::vector<ConfigDocument::Entry>& entries) {
  for (const auto& e : entries) {
    const auto id = find_spec_id(e.key);
    if (!id) {
      throw Error(ErrorCode::UnknownUnitName, "line " + std::to_string(e.line) + ": [" +
                                                  std::string(section) + "] " + e.key);
    }
    const long long n = parse_int(e);
    if (n <= 0) {
      throw Error(ErrorCode::NonPositiveCount,
                  "line " + std::to_string(e.line) + ": " + e.key + " = " + e.value);
    }
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const UnitGroup& g) { return g.spec_id == *id; });
    if (it != groups.end()) {
      it->count = static_cast<int>(n);
    } else {
      groups.push_back({*id, static_cast<int>(n)});
    }
  }
}

}  // namespace

bool ScenarioSpec::symmetric() const { return as_multiset(red) == as_multiset(blue); }

int ScenarioSpec::unit_count(Team t) const {
  int n = 0;
  for (const auto& g : composition(t)) n += g.count;
  return n;
}

std::vector<int> ScenarioSpec::unit_specs(Team t) const {
  std::vector<int> out;
  for (const auto& g : composition(t)) out.insert(out.end(), g.count, g.spec_id);
  return out;
}

std::vector<int> ScenarioSpec::unit_types() const {
  std::vector<int> ids;
  for (const auto* groups : {&red, &blue}) {
    for (const auto& g : *groups) ids.push_back(g.spec_id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

const std::vector<ScenarioSpec>& builtin_scenarios() {
  static const std::vector<ScenarioSpec> registry = build_registry();
  return registry;
}

const ScenarioSpec& builtin_scenario(std::string_view name) {
  for (const auto& s : builtin_scenarios()) {
    if (s.name == name) return s;
  }
  throw Error(ErrorCode::UnknownBaseScenario, std::string(name));
}

Layout spawn_layout(const ScenarioSpec& spec, std::uint64_t seed) {
  const int slots = std::max(spec.unit_count(Team::Red), spec.unit_count(Team::Blue));
  const Vec2 center{spec.engine.arena_width / 2, spec.engine.arena_height / 2};

  Rng rng(seed);
  const auto grid_steps = static_cast<long long>(spec.spawn_spread * kJitterGrid);
  std::uniform_int_distribution<long long> jitter(-grid_steps, grid_steps);

  // Center-relative slot offsets for the west (red) side.
  std::vector<Vec2> offsets;
  offsets.reserve(slots);
  const int columns = (slots + kRowsPerColumn - 1) / kRowsPerColumn;
  for (int c = 0; c < columns; ++c) {
    const int in_column = std::min(kRowsPerColumn, slots - c * kRowsPerColumn);
    for (int j = 0; j < in_column; ++j) {
      Vec2 p{-spec.spawn_offset - kFormationSpacing * c,
             (j - (in_column - 1) / 2.0) * kFormationSpacing};
      if (grid_steps > 0) {
        p.x += static_cast<double>(jitter(rng)) / kJitterGrid;
        p.y += static_cast<double>(jitter(rng)) / kJitterGrid;
      }
      offsets.push_back(p);
    }
  }

  const double half_w = spec.engine.arena_width / 2;
  const double half_h = spec.engine.arena_height / 2;
  for (const Vec2& p : offsets) {
    if (std::abs(p.x) > half_w || std::abs(p.y) > half_h) {
      throw Error(ErrorCode::ArenaTooSmall,
                  spec.name + " formation does not fit a " + format_double(spec.engine.arena_width) +
                      "x" + format_double(spec.engine.arena_height) + " arena");
    }
  }

  Layout layout;
  layout.center = center;
  for (int i = 0; i < spec.unit_count(Team::Red); ++i) {
    layout.red_positions.push_back(center + offsets[i]);
  }
  for (int i = 0; i < spec.unit_count(Team::Blue); ++i) {
    layout.blue_positions.push_back(center - offsets[i]);
  }
  return layout;
}

WorldState make_world(const ScenarioSpec& spec, const Layout& layout) {
  WorldState w = make_world(spec.engine);
  for (Team t : {Team::Red, Team::Blue}) {
    const auto specs = spec.unit_specs(t);
    const auto& positions = t == Team::Red ? layout.red_positions : layout.blue_positions;
    if (positions.size() != specs.size()) {
      throw Error(ErrorCode::ShapeMismatch, "layout does not match composition");
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
      w.team(t).push_back(make_unit(w, t, static_cast<int>(i), specs[i], positions[i]));
    }
  }
  return w;
}

const std::vector<ConfigDocument::Entry>* ConfigDocument::section(std::string_view name) const {
  for (const auto& [n, entries] : sections) {
    if (n == name) return &entries;
  }
  return nullptr;
}

ConfigDocument parse_config_document(std::string_view text) {
  ConfigDocument doc;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw Error(ErrorCode::ConfigSyntax, "line " + std::to_string(line_no) +
                                                 ": unterminated section header");
      }
      std::string name = trim(std::string_view(line).substr(1, line.size() - 2));
      auto it = std::find_if(doc.sections.begin(), doc.sections.end(),
                             [&](const auto& s) { return s.first == name; });
      if (it == doc.sections.end()) doc.sections.push_back({name, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigSyntax,
                  "line " + std::to_string(line_no) + ": expected key = value");
    }
    if (doc.sections.empty()) {
      throw Error(ErrorCode::ConfigSyntax,
                  "line " + std::to_string(line_no) + ": key outside of a section");
    }
    ConfigDocument::Entry e{trim(std::string_view(line).substr(0, eq)),
                            trim(std::string_view(line).substr(eq + 1)), line_no};
    if (e.key.empty()) {
      throw Error(ErrorCode::ConfigSyntax, "line " + std::to_string(line_no) + ": empty key");
    }
    doc.sections.back().second.push_back(std::move(e));
  }
  return doc;
}

ScenarioSpec scenario_from_document(const ConfigDocument& doc,
                                    const std::vector<std::string>& foreign_sections) {
  for (const auto& [name, entries] : doc.sections) {
    const bool known = name == "scenario" || name == "red" || name == "blue" || name == "engine";
    const bool foreign = std::find(foreign_sections.begin(), foreign_sections.end(), name) !=
                         foreign_sections.end();
    if (!known && !foreign) {
      throw Error(ErrorCode::UnknownConfigKey, "unknown section [" + name + "]");
    }
  }

  std::string base = "3m";
  std::string name;
  if (const auto* sc = doc.section("scenario")) {
    for (const auto& e : *sc) {
      if (e.key == "base") base = e.value;
    }
  }
  ScenarioSpec spec = builtin_scenario(base);
  bool composition_changed = false;

  if (const auto* sc = doc.section("scenario")) {
    for (const auto& e : *sc) {
      if (e.key == "base") continue;
      if (e.key == "name") {
        name = e.value;
      } else if (e.key == "arena_width") {
        spec.engine.arena_width = parse_double(e);
      } else if (e.key == "arena_height") {
        spec.engine.arena_height = parse_double(e);
      } else if (e.key == "step_limit") {
        const long long v = parse_int(e);
        if (v <= 0) bad_value(e, "a positive integer");
        spec.episode_step_limit = static_cast<int>(v);
      } else if (e.key == "spawn_spread") {
        spec.spawn_spread = parse_double(e);
        if (spec.spawn_spread < 0) bad_value(e, "a non-negative number");
      } else if (e.key == "spawn_offset") {
        spec.spawn_offset = parse_double(e);
      } else {
        unknown_key("scenario", e);
      }
    }
  }
  if (const auto* red = doc.section("red")) {
    apply_team_overrides(spec.red, "red", *red);
    composition_changed = composition_changed || !red->empty();
  }
  if (const auto* blue = doc.section("blue")) {
    apply_team_overrides(spec.blue, "blue", *blue);
    composition_changed = composition_changed || !blue->empty();
  }
  if (const auto* eng = doc.section("engine")) {
    for (const auto& e : *eng) {
      if (e.key == "step_dt") {
        spec.engine.step_dt = parse_double(e);
      } else if (e.key == "shield_regen_delay") {
        spec.engine.shield_regen_delay = parse_double(e);
      } else if (e.key == "shield_regen_rate") {
        spec.engine.shield_regen_rate = parse_double(e);
      } else if (e.key == "allow_overlap") {
        spec.engine.allow_overlap = parse_bool(e);
      } else if (e.key == "splash_radius") {
        spec.engine.splash_radius = parse_double(e);
      } else if (e.key == "heal_per_action") {
        spec.engine.heal_per_action = parse_double(e);
      } else {
        unknown_key("engine", e);
      }
    }
  }
  spec.engine.validate();
  if (!name.empty()) {
    spec.name = name;
  } else if (composition_changed) {
    spec.name = base + "_custom";
  }
  return spec;
}

ScenarioSpec parse_scenario_config(std::string_view text) {
  return scenario_from_document(parse_config_document(text));
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string serialize_scenario_config(const ScenarioSpec& spec) {
  std::ostringstream out;
  out << "[scenario]\n"
      << "base = " << spec.base << "\n"
      << "name = " << spec.name << "\n"
      << "arena_width = " << format_double(spec.engine.arena_width) << "\n"
      << "arena_height = " << format_double(spec.engine.arena_height) << "\n"
      << "step_limit = " << spec.episode_step_limit << "\n"
      << "spawn_spread = " << format_double(spec.spawn_spread) << "\n"
      << "spawn_offset = " << format_double(spec.spawn_offset) << "\n";
  for (Team t : {Team::Red, Team::Blue}) {
    out << "\n[" << to_string(t) << "]\n";
    for (const auto& g : spec.composition(t)) {
      out << spec_config_key(g.spec_id) << " = " << g.count << "\n";
    }
  }
  out << "\n[engine]\n"
      << "step_dt = " << format_double(spec.engine.step_dt) << "\n"
      << "shield_regen_delay = " << format_double(spec.engine.shield_regen_delay) << "\n"
      << "shield_regen_rate = " << format_double(spec.engine.shield_regen_rate) << "\n"
      << "allow_overlap = " << (spec.engine.allow_overlap ? "true" : "false") << "\n"
      << "splash_radius = " << format_double(spec.engine.splash_radius) << "\n"
      << "heal_per_action = " << format_double(spec.engine.heal_per_action) << "\n";
  return out.str();
}

}  // namespace sc2ba
