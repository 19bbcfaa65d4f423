#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sc2ba/engine.hpp"

namespace sc2ba {

struct UnitGroup {
  int spec_id = kMarine;
  int count = 0;
  friend bool operator==(const UnitGroup&, const UnitGroup&) = default;
};

struct ScenarioSpec {
  std::string name;
  // Built-in scenario this spec was derived from (equal to name for builtins).
  std::string base;
  std::vector<UnitGroup> red;
  std::vector<UnitGroup> blue;
  EngineConfig engine;  // arena size lives here
  int episode_step_limit = 120;
  double spawn_spread = 0.5;
  // Distance from the arena center to each team's front column.
  double spawn_offset = 6;

  const std::vector<UnitGroup>& composition(Team t) const {
    return t == Team::Red ? red : blue;
  }
  // True iff both compositions are the same multiset of unit types.
  bool symmetric() const;
  int unit_count(Team t) const;
  // Spec id of every unit of a team, in unit_id order.
  std::vector<int> unit_specs(Team t) const;
  // Distinct spec ids in play (both teams), ascending; defines the one-hot.
  std::vector<int> unit_types() const;

  friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

// The ten built-in scenarios, in registry order.
const std::vector<ScenarioSpec>& builtin_scenarios();
// Throws UnknownBaseScenario.
const ScenarioSpec& builtin_scenario(std::string_view name);

struct Layout {
  std::vector<Vec2> red_positions;
  std::vector<Vec2> blue_positions;
  Vec2 center;
};

// Column formation west of center, seeded jitter, blue = point reflection of
// red. Jitter is drawn on a 1/1024 grid so the reflection is exact.
Layout spawn_layout(const ScenarioSpec& spec, std::uint64_t seed);

// Full world at the given layout.
WorldState make_world(const ScenarioSpec& spec, const Layout& layout);

// Sectioned `key = value` document; sections keep their keys in file order.
struct ConfigDocument {
  struct Entry {
    std::string key;
    std::string value;
    int line = 0;
  };
  std::vector<std::pair<std::string, std::vector<Entry>>> sections;

  const std::vector<Entry>* section(std::string_view name) const;
};

ConfigDocument parse_config_document(std::string_view text);

// Typed values of config entries; failures name the key and line
// (ConfigSyntax, UnknownConfigKey).
namespace config {
[[noreturn]] void bad_value(const ConfigDocument::Entry& e, std::string_view what);
double parse_double(const ConfigDocument::Entry& e);
long long parse_int(const ConfigDocument::Entry& e);
bool parse_bool(const ConfigDocument::Entry& e);
[[noreturn]] void unknown_key(std::string_view section, const ConfigDocument::Entry& e);
}  // namespace config

// Parses the [scenario] / [red] / [blue] / [engine] sections. Unknown keys or
// sections are errors unless the section name is in `foreign_sections`.
ScenarioSpec parse_scenario_config(std::string_view text);
ScenarioSpec scenario_from_document(const ConfigDocument& doc,
                                    const std::vector<std::string>& foreign_sections = {});

std::string serialize_scenario_config(const ScenarioSpec& spec);

// Shortest round-trip decimal text of a double.
std::string format_double(double v);

}  // namespace sc2ba
