#include "sc2ba/engine.hpp"

#include <algorithm>
#include <string>

#include "sc2ba/error.hpp"

namespace sc2ba {

namespace {

constexpr double kCooldownEpsilon = 1e-9;

bool cooldown_ready(const Unit& u) { return u.weapon_cooldown <= kCooldownEpsilon; }

double command_range(const UnitSpec& spec) { return spec.attack_range; }

void validate_commands(const WorldState& world, Team team,
                       std::span<const Command> cmds) {
  const auto& units = world.team(team);
  if (cmds.size() != units.size()) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(to_string(team)) + " expects " +
                    std::to_string(units.size()) + " commands, got " +
                    std::to_string(cmds.size()));
  }
  const auto& enemies = world.team(opponent(team));
  for (std::size_t i = 0; i < units.size(); ++i) {
    const Unit& u = units[i];
    const Command& c = cmds[i];
    if (!u.alive) {
      if (c.kind != CommandKind::NoOp) {
        throw Error(ErrorCode::CommandForDeadUnit,
                    std::string(to_string(team)) + " unit " + std::to_string(i));
      }
      continue;
    }
    const UnitSpec& spec = world.spec(u);
    if (c.kind == CommandKind::Attack) {
      if (!spec.can_attack()) {
        throw Error(ErrorCode::NotAnAttacker, spec.name + " cannot attack");
      }
      if (c.target < 0 || c.target >= static_cast<int>(enemies.size())) {
        throw Error(ErrorCode::MalformedTarget,
                    "enemy index " + std::to_string(c.target));
      }
    } else if (c.kind == CommandKind::Heal) {
      if (c.target < 0 || c.target >= static_cast<int>(units.size())) {
        throw Error(ErrorCode::MalformedTarget,
                    "ally index " + std::to_string(c.target));
      }
      const Unit& t = units[c.target];
      if (!spec.is_healer || !t.alive || world.spec(t).is_healer) {
        throw Error(ErrorCode::InvalidHealTarget,
                    "ally index " + std::to_string(c.target));
      }
    }
  }
}

}  // namespace

std::string_view to_string(Team t) { return t == Team::Red ? "red" : "blue"; }

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Ongoing: return "ongoing";
    case Outcome::RedWin: return "red_win";
    case Outcome::BlueWin: return "blue_win";
    case Outcome::Draw: return "draw";
  }
  return "ongoing";
}

Outcome outcome_from_string(std::string_view s) {
  for (Outcome o : {Outcome::Ongoing, Outcome::RedWin, Outcome::BlueWin, Outcome::Draw}) {
    if (to_string(o) == s) return o;
  }
  throw Error(ErrorCode::MalformedMessage, "unknown outcome '" + std::string(s) + "'");
}

void EngineConfig::validate() const {
  if (!(step_dt > 0)) throw Error(ErrorCode::ConfigSyntax, "step_dt must be > 0");
  if (shield_regen_delay < 0 || shield_regen_rate < 0 || splash_radius < 0 ||
      heal_per_action < 0) {
    throw Error(ErrorCode::ConfigSyntax, "engine rates must be >= 0");
  }
  if (!(arena_width > 0) || !(arena_height > 0)) {
    throw Error(ErrorCode::ConfigSyntax, "arena must have positive size");
  }
}

std::shared_ptr<const UnitCatalog> make_catalog(const EngineConfig& config) {
  auto catalog = std::make_shared<UnitCatalog>(builtin_unit_specs());
  for (auto& s : *catalog) {
    if (s.splash_radius > 0) s.splash_radius = config.splash_radius;
    if (s.is_healer) s.heal_per_action = config.heal_per_action;
  }
  return catalog;
}

bool WorldState::in_bounds(Vec2 p) const {
  const Vec2 h = half_extent();
  return p.x >= -h.x && p.x <= h.x && p.y >= -h.y && p.y <= h.y;
}

Vec2 WorldState::clamp(Vec2 p) const {
  const Vec2 h = half_extent();
  return {std::clamp(p.x, -h.x, h.x), std::clamp(p.y, -h.y, h.y)};
}

int WorldState::alive_count(Team t) const {
  const auto& units = team(t);
  return static_cast<int>(std::count_if(units.begin(), units.end(),
                                         [](const Unit& u) { return u.alive; }));
}

bool operator==(const WorldState& a, const WorldState& b) {
  const bool same_catalog =
      a.catalog == b.catalog ||
      (a.catalog && b.catalog && a.catalog->size() == b.catalog->size());
  return same_catalog && a.red == b.red && a.blue == b.blue &&
         a.width == b.width && a.height == b.height && a.time == b.time &&
         a.step == b.step;
}

WorldState make_world(const EngineConfig& config) {
  config.validate();
  WorldState w;
  w.catalog = make_catalog(config);
  w.width = config.arena_width;
  w.height = config.arena_height;
  return w;
}

Unit make_unit(const WorldState& world, Team team, int unit_id, int spec_id,
               Vec2 world_pos) {
  const UnitSpec& spec = (*world.catalog).at(spec_id);
  Unit u;
  u.unit_id = unit_id;
  u.team = team;
  u.spec_id = spec_id;
  u.pos = world_pos - world.center();
  u.health = spec.max_health;
  u.shield = spec.max_shield;
  return u;
}

Vec2 direction_vector(Direction d) {
  switch (d) {
    case Direction::North: return {0, 1};
    case Direction::South: return {0, -1};
    case Direction::East: return {1, 0};
    case Direction::West: return {-1, 0};
  }
  return {};
}

Direction mirror(Direction d) {
  switch (d) {
    case Direction::North: return Direction::South;
    case Direction::South: return Direction::North;
    case Direction::East: return Direction::West;
    case Direction::West: return Direction::East;
  }
  return d;
}

Unit apply_damage(Unit unit, double amount, double now) {
  if (!unit.alive || amount <= 0) return unit;
  const double absorbed = std::min(unit.shield, amount);
  unit.shield -= absorbed;
  unit.health = std::max(0.0, unit.health - (amount - absorbed));
  unit.alive = unit.health > 0;
  unit.last_damaged_at = now;
  return unit;
}

Unit apply_heal(const WorldState& world, const Unit& healer, const Unit& target) {
  const UnitSpec& hs = world.spec(healer);
  const UnitSpec& ts = world.spec(target);
  if (!hs.is_healer) {
    throw Error(ErrorCode::InvalidHealTarget, hs.name + " is not a healer");
  }
  if (target.team != healer.team || !target.alive || ts.is_healer) {
    throw Error(ErrorCode::InvalidHealTarget,
                "target must be a living non-healer ally");
  }
  if (distance(healer.pos, target.pos) > command_range(hs)) {
    throw Error(ErrorCode::InvalidHealTarget, "target out of range");
  }
  Unit out = target;
  out.health = std::min(ts.max_health, out.health + hs.heal_per_action);
  return out;
}

AttackMoveStep resolve_attack_move(const WorldState& world, const Unit& unit,
                                   const Unit& target, const EngineConfig& config) {
  if (!target.alive) throw Error(ErrorCode::TargetDead, "attack-move target is dead");
  const UnitSpec& spec = world.spec(unit);
  const Vec2 delta = target.pos - unit.pos;
  const double d = std::hypot(delta.x, delta.y);
  if (d <= command_range(spec)) return {true, unit.pos};
  const double stride = std::min(spec.move_speed * config.step_dt, d);
  return {false, world.clamp(unit.pos + delta * (stride / d))};
}

WorldState regen_shields(WorldState world, const EngineConfig& config) {
  for (auto* units : {&world.red, &world.blue}) {
    for (Unit& u : *units) {
      const double cap = world.spec(u).max_shield;
      if (!u.alive || cap <= 0) continue;
      if (world.time - u.last_damaged_at >= config.shield_regen_delay) {
        u.shield = std::min(cap, u.shield + config.shield_regen_rate * config.step_dt);
      }
    }
  }
  return world;
}

StepEvents step_world_inplace(WorldState& world, std::span<const Command> red,
                              std::span<const Command> blue,
                              const EngineConfig& config) {
  validate_commands(world, Team::Red, red);
  validate_commands(world, Team::Blue, blue);

  const std::span<const Command> cmds[2] = {red, blue};
  std::vector<Unit>* teams[2] = {&world.red, &world.blue};

  // Attack orders on already-dead targets dissolve to Stop.
  std::vector<Command> effective[2];
  for (int t = 0; t < 2; ++t) {
    effective[t].assign(cmds[t].begin(), cmds[t].end());
    const auto& enemies = *teams[1 - t];
    for (Command& c : effective[t]) {
      if (c.kind == CommandKind::Attack && !enemies[c.target].alive) c = Command::stop();
    }
  }

  // (1) plain movement
  for (int t = 0; t < 2; ++t) {
    auto& units = *teams[t];
    for (std::size_t i = 0; i < units.size(); ++i) {
      const Command& c = effective[t][i];
      if (c.kind != CommandKind::Move || !units[i].alive) continue;
      const double stride = world.spec(units[i]).move_speed * config.step_dt;
      units[i].pos = world.clamp(units[i].pos + direction_vector(c.dir) * stride);
    }
  }

  // (2) attack-move approach, decided against the post-move snapshot
  const WorldState moved = world;
  std::vector<char> engaging[2];
  for (int t = 0; t < 2; ++t) {
    auto& units = *teams[t];
    engaging[t].assign(units.size(), 0);
    for (std::size_t i = 0; i < units.size(); ++i) {
      const Command& c = effective[t][i];
      if (!units[i].alive) continue;
      if (c.kind != CommandKind::Attack && c.kind != CommandKind::Heal) continue;
      const Unit& self = moved.team(static_cast<Team>(t))[i];
      const Unit& target = c.kind == CommandKind::Attack
                               ? moved.team(static_cast<Team>(1 - t))[c.target]
                               : moved.team(static_cast<Team>(t))[c.target];
      const AttackMoveStep s = resolve_attack_move(moved, self, target, config);
      if (s.in_range) {
        engaging[t][i] = 1;
      } else {
        units[i].pos = s.pos;
      }
    }
  }

  // (3) attacks and heals, all computed against the pre-attack state
  std::vector<double> pending_damage[2];
  std::vector<double> pending_heal[2];
  std::vector<char> fired[2];
  for (int t = 0; t < 2; ++t) {
    pending_damage[t].assign(teams[t]->size(), 0.0);
    pending_heal[t].assign(teams[t]->size(), 0.0);
    fired[t].assign(teams[t]->size(), 0);
  }
  for (int t = 0; t < 2; ++t) {
    const auto& units = *teams[t];
    const auto& enemies = *teams[1 - t];
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (!engaging[t][i]) continue;
      const Command& c = effective[t][i];
      const UnitSpec& spec = world.spec(units[i]);
      if (c.kind == CommandKind::Heal) {
        pending_heal[t][c.target] += spec.heal_per_action;
        continue;
      }
      if (!cooldown_ready(units[i])) continue;
      fired[t][i] = 1;
      const Unit& target = enemies[c.target];
      pending_damage[1 - t][c.target] += compute_damage(spec, world.spec(target));
      if (spec.splash_radius > 0) {
        for (std::size_t k = 0; k < enemies.size(); ++k) {
          if (static_cast<int>(k) == c.target || !enemies[k].alive) continue;
          if (distance(enemies[k].pos, target.pos) <= spec.splash_radius) {
            pending_damage[1 - t][k] += compute_damage(spec, world.spec(enemies[k]));
          }
        }
      }
    }
  }

  // (4) simultaneous application: damage first, then heals on survivors
  StepEvents events;
  for (int t = 0; t < 2; ++t) {
    auto& units = *teams[t];
    TeamEvents& victim = events.team(static_cast<Team>(t));
    TeamEvents& shooter = events.team(static_cast<Team>(1 - t));
    for (std::size_t i = 0; i < units.size(); ++i) {
      const double dmg = pending_damage[t][i];
      if (dmg <= 0 || !units[i].alive) continue;
      const double before = units[i].health + units[i].shield;
      units[i] = apply_damage(units[i], dmg, world.time);
      const double dealt = before - (units[i].health + units[i].shield);
      victim.damage_taken += dealt;
      shooter.damage_dealt += dealt;
      if (!units[i].alive) {
        ++victim.deaths;
        ++shooter.kills;
      }
    }
  }
  for (int t = 0; t < 2; ++t) {
    auto& units = *teams[t];
    for (std::size_t i = 0; i < units.size(); ++i) {
      const double heal = pending_heal[t][i];
      if (heal <= 0 || !units[i].alive) continue;
      const double cap = world.spec(units[i]).max_health;
      const double gained = std::min(heal, cap - units[i].health);
      units[i].health += gained;
      events.team(static_cast<Team>(t)).healed += gained;
    }
  }

  // (5) cooldowns
  for (int t = 0; t < 2; ++t) {
    auto& units = *teams[t];
    for (std::size_t i = 0; i < units.size(); ++i) {
      Unit& u = units[i];
      if (fired[t][i]) {
        u.weapon_cooldown = *world.spec(u).attack_period;
      } else {
        u.weapon_cooldown = std::max(0.0, u.weapon_cooldown - config.step_dt);
      }
      if (!u.alive) u.weapon_cooldown = 0;
    }
  }

  // (6) shields, (7) clock
  world = regen_shields(std::move(world), config);
  ++world.step;
  world.time = world.step * config.step_dt;
  return events;
}

StepResult step_world(const WorldState& world, std::span<const Command> red,
                      std::span<const Command> blue, const EngineConfig& config) {
  StepResult r{world, {}};
  r.events = step_world_inplace(r.world, red, blue, config);
  return r;
}

Outcome terminal_status(const WorldState& world, int step_limit) {
  const bool red_alive = world.alive_count(Team::Red) > 0;
  const bool blue_alive = world.alive_count(Team::Blue) > 0;
  if (red_alive && !blue_alive) return Outcome::RedWin;
  if (blue_alive && !red_alive) return Outcome::BlueWin;
  if (!red_alive && !blue_alive) return Outcome::Draw;
  if (world.step >= step_limit) return Outcome::Draw;
  return Outcome::Ongoing;
}

WorldState reflect(const WorldState& world) {
  WorldState out = world;
  out.red = world.blue;
  out.blue = world.red;
  for (auto* units : {&out.red, &out.blue}) {
    for (Unit& u : *units) {
      u.pos = -u.pos;
      u.team = opponent(u.team);
    }
  }
  return out;
}

}  // namespace sc2ba
