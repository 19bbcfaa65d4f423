#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "sc2ba/units.hpp"

namespace sc2ba {

enum class Team { Red = 0, Blue = 1 };

inline Team opponent(Team t) { return t == Team::Red ? Team::Blue : Team::Red; }
std::string_view to_string(Team t);

struct Vec2 {
  double x = 0;
  double y = 0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct EngineConfig {
  double step_dt = 0.5;
  double shield_regen_delay = 10;
  double shield_regen_rate = 2;
  double arena_width = 32;
  double arena_height = 32;
  bool allow_overlap = true;
  // Applied to every unit type that splashes (Colossus).
  double splash_radius = 1.0;
  // Applied to every healer (Medivac).
  double heal_per_action = 7;

  void validate() const;
  friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

// Unit types in play, with the engine-level overrides folded in.
using UnitCatalog = std::vector<UnitSpec>;
std::shared_ptr<const UnitCatalog> make_catalog(const EngineConfig& config);

struct Unit {
  int unit_id = 0;
  Team team = Team::Red;
  int spec_id = 0;
  // Arena coordinates with the origin at the arena center; world coordinates
  // are `center + pos`. Point reflection is then exact negation.
  Vec2 pos;
  double health = 0;
  double shield = 0;
  double weapon_cooldown = 0;
  bool alive = true;
  double last_damaged_at = -1e300;

  friend bool operator==(const Unit&, const Unit&) = default;
};

struct WorldState {
  std::shared_ptr<const UnitCatalog> catalog;
  std::vector<Unit> red;
  std::vector<Unit> blue;
  double width = 32;
  double height = 32;
  double time = 0;
  int step = 0;

  const UnitSpec& spec(const Unit& u) const { return (*catalog)[u.spec_id]; }
  std::vector<Unit>& team(Team t) { return t == Team::Red ? red : blue; }
  const std::vector<Unit>& team(Team t) const { return t == Team::Red ? red : blue; }
  Vec2 center() const { return {width / 2, height / 2}; }
  Vec2 world_position(const Unit& u) const { return center() + u.pos; }
  Vec2 half_extent() const { return {width / 2, height / 2}; }
  bool in_bounds(Vec2 p) const;
  Vec2 clamp(Vec2 p) const;
  int alive_count(Team t) const;

  // Equality of unit state, clock and arena (catalog compared by content).
  friend bool operator==(const WorldState& a, const WorldState& b);
};

// Builds a unit at a world position (not center-relative) at full health.
Unit make_unit(const WorldState& world, Team team, int unit_id, int spec_id,
               Vec2 world_pos);

WorldState make_world(const EngineConfig& config);

enum class Direction { North = 0, South = 1, East = 2, West = 3 };
Vec2 direction_vector(Direction d);
Direction mirror(Direction d);

enum class CommandKind { NoOp, Stop, Move, Attack, Heal };

struct Command {
  CommandKind kind = CommandKind::NoOp;
  Direction dir = Direction::North;
  // Enemy index for Attack, ally index for Heal.
  int target = -1;

  static Command noop() { return {}; }
  static Command stop() { return {CommandKind::Stop}; }
  static Command move(Direction d) { return {CommandKind::Move, d}; }
  static Command attack(int enemy) { return {CommandKind::Attack, Direction::North, enemy}; }
  static Command heal(int ally) { return {CommandKind::Heal, Direction::North, ally}; }
  friend bool operator==(const Command&, const Command&) = default;
};

struct TeamEvents {
  double damage_dealt = 0;
  double damage_taken = 0;
  int kills = 0;
  int deaths = 0;
  double healed = 0;
  friend bool operator==(const TeamEvents&, const TeamEvents&) = default;
};

struct StepEvents {
  TeamEvents red;
  TeamEvents blue;

  TeamEvents& team(Team t) { return t == Team::Red ? red : blue; }
  const TeamEvents& team(Team t) const { return t == Team::Red ? red : blue; }
  double heals() const { return red.healed + blue.healed; }
  friend bool operator==(const StepEvents&, const StepEvents&) = default;
};

// Shield absorbs first, overflow reduces health, health clamps at zero.
Unit apply_damage(Unit unit, double amount, double now);

// Heals `target` by the healer's heal_per_action, clamped at max health.
// Throws InvalidHealTarget for enemies, dead units, healers or targets out
// of range.
Unit apply_heal(const WorldState& world, const Unit& healer, const Unit& target);

struct AttackMoveStep {
  bool in_range = false;  // true: fire/heal this step, no motion
  Vec2 pos;               // position after this step
};

// One step of the attack-move macro: stays put when in range, otherwise
// closes along the straight line by move_speed * step_dt.
AttackMoveStep resolve_attack_move(const WorldState& world, const Unit& unit,
                                   const Unit& target, const EngineConfig& config);

WorldState regen_shields(WorldState world, const EngineConfig& config);

struct StepResult {
  WorldState world;
  StepEvents events;
};

// Advances the world by one fixed step. `red` and `blue` carry one command
// per unit (NoOp for dead units). Phases: moves, attack-move approach,
// attack selection against the pre-attack state, simultaneous damage then
// heals, cooldowns, shield regeneration, clock.
StepResult step_world(const WorldState& world, std::span<const Command> red,
                      std::span<const Command> blue, const EngineConfig& config);

// In-place variant used on hot paths.
StepEvents step_world_inplace(WorldState& world, std::span<const Command> red,
                              std::span<const Command> blue,
                              const EngineConfig& config);

enum class Outcome { Ongoing, RedWin, BlueWin, Draw };
std::string_view to_string(Outcome o);
// Throws MalformedMessage.
Outcome outcome_from_string(std::string_view s);

Outcome terminal_status(const WorldState& world, int step_limit);

// Point reflection of the whole world about its center, with red and blue
// swapped. A symmetric world equals its own reflection.
WorldState reflect(const WorldState& world);

}  // namespace sc2ba
