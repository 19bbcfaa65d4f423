#include "sc2ba/units.hpp"

#include <algorithm>
#include <cctype>

#include "sc2ba/error.hpp"

namespace sc2ba {

namespace {

UnitSpec make_spec(int id, std::string name, Race race, double health,
                   double shield, std::optional<double> damage,
                   std::optional<BonusDamage> bonus,
                   std::optional<double> period, double speed,
                   ArmorClass armor) {
  UnitSpec s;
  s.spec_id = id;
  s.name = std::move(name);
  s.race = race;
  s.max_health = health;
  s.max_shield = shield;
  s.base_damage = damage;
  s.bonus_vs = bonus;
  s.attack_period = period;
  s.move_speed = speed;
  s.armor_class = armor;
  return s;
}

std::vector<UnitSpec> build_specs() {
  using A = ArmorClass;
  std::vector<UnitSpec> v;
  v.push_back(make_spec(kMarine, "Marine", Race::Terran, 45, 0, 6, std::nullopt,
                        0.86, 2.25, A::Light));
  v.push_back(make_spec(kMarauder, "Marauder", Race::Terran, 125, 0, 10,
                        BonusDamage{A::Armored, 20}, 1.5, 2.25, A::Armored));
  // The roster lists no move speed for the Medivac; it moves with the
  // infantry so it can stay in heal range.
  UnitSpec medivac = make_spec(kMedivac, "Medivac", Race::Terran, 150, 0,
                               std::nullopt, std::nullopt, std::nullopt, 2.25,
                               A::Armored);
  medivac.is_healer = true;
  medivac.heal_per_action = 7;
  v.push_back(medivac);
  v.push_back(make_spec(kZealot, "Zealot", Race::Protoss, 100, 50, 16,
                        std::nullopt, 1.2, 2.25, A::Light));
  v.push_back(make_spec(kStalker, "Stalker", Race::Protoss, 80, 80, 13,
                        BonusDamage{A::Armored, 18}, 1.87, 2.25, A::Armored));
  UnitSpec colossus = make_spec(kColossus, "Colossus", Race::Protoss, 200, 150,
                                20, BonusDamage{A::Light, 30}, 1.5, 2.25,
                                A::Armored);
  colossus.splash_radius = 1.0;
  v.push_back(colossus);
  return v;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

const std::vector<UnitSpec>& builtin_unit_specs() {
  static const std::vector<UnitSpec> specs = build_specs();
  return specs;
}

const UnitSpec& builtin_spec(int spec_id) {
  return builtin_unit_specs().at(static_cast<std::size_t>(spec_id));
}

std::string spec_config_key(int spec_id) {
  if (spec_id == kColossus) return "colossi";
  return lower(builtin_spec(spec_id).name) + "s";
}

std::optional<int> find_spec_id(std::string_view name) {
  const std::string key = lower(name);
  for (const auto& s : builtin_unit_specs()) {
    const std::string singular = lower(s.name);
    if (key == singular || key == spec_config_key(s.spec_id)) return s.spec_id;
  }
  return std::nullopt;
}

double compute_damage(const UnitSpec& attacker, const UnitSpec& target) {
  if (!attacker.can_attack()) {
    throw Error(ErrorCode::NotAnAttacker, attacker.name + " has no weapon");
  }
  if (attacker.bonus_vs && attacker.bonus_vs->vs == target.armor_class) {
    return attacker.bonus_vs->damage;
  }
  return *attacker.base_damage;
}

std::string_view to_string(ArmorClass a) {
  return a == ArmorClass::Light ? "Light" : "Armored";
}

std::string_view to_string(Race r) {
  return r == Race::Terran ? "Terran" : "Protoss";
}

}  // namespace sc2ba
