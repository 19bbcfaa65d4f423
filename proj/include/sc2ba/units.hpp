#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sc2ba {

enum class ArmorClass { Light, Armored };
enum class Race { Terran, Protoss };

struct BonusDamage {
  ArmorClass vs;
  double damage;
};

// Static combat parameters of one unit type.
struct UnitSpec {
  int spec_id = 0;
  std::string name;
  Race race = Race::Terran;
  double max_health = 1;
  double max_shield = 0;
  double attack_range = 6;
  double sight_range = 9;
  std::optional<double> base_damage;
  std::optional<BonusDamage> bonus_vs;
  // Time units between shots. Absent for units that never attack.
  std::optional<double> attack_period;
  double move_speed = 0;
  ArmorClass armor_class = ArmorClass::Light;
  bool is_healer = false;
  double heal_per_action = 0;
  double splash_radius = 0;

  bool can_attack() const { return base_damage.has_value(); }
};

enum SpecId : int {
  kMarine = 0,
  kMarauder = 1,
  kMedivac = 2,
  kZealot = 3,
  kStalker = 4,
  kColossus = 5,
  kNumBuiltinSpecs = 6,
};

// The six built-in unit types, indexed by SpecId.
const std::vector<UnitSpec>& builtin_unit_specs();
const UnitSpec& builtin_spec(int spec_id);

// Accepts "Marine", "marine", "marines"; "colossi" for Colossus.
std::optional<int> find_spec_id(std::string_view name);
// Lower-case plural used as the config key for a unit type.
std::string spec_config_key(int spec_id);

// Damage one attack of `attacker` deals to a unit of type `target`.
// Throws Error(NotAnAttacker) for healers.
double compute_damage(const UnitSpec& attacker, const UnitSpec& target);

std::string_view to_string(ArmorClass a);
std::string_view to_string(Race r);

}  // namespace sc2ba
