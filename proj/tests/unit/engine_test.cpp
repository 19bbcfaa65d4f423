#include <doctest.h>

#include <random>

#include "reference_sim.hpp"
#include "sc2ba/engine.hpp"
#include "sc2ba/error.hpp"

using namespace sc2ba;

namespace {

const UnitSpec& S(int id) { return builtin_spec(id); }

struct Fixture {
  EngineConfig cfg;
  WorldState world = make_world(cfg);

  Unit& add(Team t, int spec, Vec2 world_pos) {
    auto& units = world.team(t);
    units.push_back(make_unit(world, t, static_cast<int>(units.size()), spec, world_pos));
    return units.back();
  }
  std::vector<Command> all(Team t, Command c) const {
    return std::vector<Command>(world.team(t).size(), c);
  }
};

}  // namespace

TEST_CASE("compute_damage follows the unit roster") {
  CHECK(compute_damage(S(kMarauder), S(kStalker)) == 20);
  CHECK(compute_damage(S(kMarine), S(kMarine)) == 6);
  CHECK(compute_damage(S(kColossus), S(kMarine)) == 30);
  CHECK(compute_damage(S(kStalker), S(kColossus)) == 18);
  CHECK(compute_damage(S(kMarauder), S(kMarine)) == 10);
  CHECK(compute_damage(S(kStalker), S(kZealot)) == 13);
  CHECK(compute_damage(S(kZealot), S(kColossus)) == 16);
  CHECK(compute_damage(S(kColossus), S(kStalker)) == 20);
  try {
    compute_damage(S(kMedivac), S(kMarine));
    FAIL("expected NotAnAttacker");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotAnAttacker);
  }
}

TEST_CASE("roster invariants") {
  for (const auto& s : builtin_unit_specs()) {
    CHECK(s.attack_range == 6);
    CHECK(s.sight_range == 9);
    if (s.is_healer) CHECK_FALSE(s.base_damage.has_value());
    if (s.bonus_vs) {
      CHECK((s.spec_id == kMarauder || s.spec_id == kStalker || s.spec_id == kColossus));
    }
  }
  CHECK(find_spec_id("marines") == kMarine);
  CHECK(find_spec_id("Colossi") == kColossus);
  CHECK_FALSE(find_spec_id("hydralisk").has_value());
}

TEST_CASE("apply_damage: shield first, overflow, clamp") {
  Unit z;
  z.health = 100;
  z.shield = 50;
  z = apply_damage(z, 6, 3.0);
  CHECK(z.health == 100);
  CHECK(z.shield == 44);
  CHECK(z.last_damaged_at == 3.0);

  Unit s;
  s.health = 80;
  s.shield = 10;
  s = apply_damage(s, 18, 0);
  CHECK(s.health == 72);
  CHECK(s.shield == 0);

  Unit m;
  m.health = 5;
  m = apply_damage(m, 6, 0);
  CHECK(m.health == 0);
  CHECK_FALSE(m.alive);
}

TEST_CASE("step_world examples") {
  SUBCASE("move east") {
    Fixture f;
    f.add(Team::Red, kMarine, {10, 10});
    f.add(Team::Blue, kMarine, {30, 30});
    auto r = step_world(f.world, f.all(Team::Red, Command::move(Direction::East)),
                        f.all(Team::Blue, Command::stop()), f.cfg);
    CHECK(r.world.world_position(r.world.red[0]) == Vec2{11.125, 10});
    CHECK(r.world.time == 0.5);
    CHECK(r.world.step == 1);
  }
  SUBCASE("simultaneous mutual kill") {
    Fixture f;
    f.add(Team::Red, kMarine, {10, 16}).health = 6;
    f.add(Team::Blue, kMarine, {14, 16}).health = 6;
    auto r = step_world(f.world, f.all(Team::Red, Command::attack(0)),
                        f.all(Team::Blue, Command::attack(0)), f.cfg);
    CHECK_FALSE(r.world.red[0].alive);
    CHECK_FALSE(r.world.blue[0].alive);
    CHECK(r.events.red.kills == 1);
    CHECK(r.events.blue.kills == 1);
    CHECK(terminal_status(r.world, 100) == Outcome::Draw);
  }
  SUBCASE("firing sets the cooldown to the attack period") {
    Fixture f;
    f.add(Team::Red, kMarine, {10, 16});
    f.add(Team::Blue, kMarine, {14, 16});
    auto r = step_world(f.world, f.all(Team::Red, Command::attack(0)),
                        f.all(Team::Blue, Command::stop()), f.cfg);
    CHECK(r.world.red[0].weapon_cooldown == 0.86);
    CHECK(r.world.blue[0].health == 39);
    CHECK(r.events.red.damage_dealt == 6);
    CHECK(r.events.blue.damage_taken == 6);
  }
  SUBCASE("errors") {
    Fixture f;
    f.add(Team::Red, kMarine, {10, 16}).alive = false;
    f.add(Team::Blue, kMarine, {14, 16});
    CHECK_THROWS_AS(step_world(f.world, f.all(Team::Red, Command::stop()),
                               f.all(Team::Blue, Command::stop()), f.cfg),
                    Error);
    f.world.red[0].alive = true;
    try {
      step_world(f.world, f.all(Team::Red, Command::attack(3)),
                 f.all(Team::Blue, Command::stop()), f.cfg);
      FAIL("expected MalformedTarget");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MalformedTarget);
    }
  }
}

TEST_CASE("attack-move macro") {
  SUBCASE("approach when out of range") {
    Fixture f;
    f.add(Team::Red, kMarine, {8, 16});
    f.add(Team::Blue, kMarine, {16, 16});
    auto r = step_world(f.world, f.all(Team::Red, Command::attack(0)),
                        f.all(Team::Blue, Command::stop()), f.cfg);
    CHECK(r.world.world_position(r.world.red[0]) == Vec2{9.125, 16});
    CHECK(r.events.red.damage_dealt == 0);
  }
  SUBCASE("fires immediately in range") {
    Fixture f;
    f.add(Team::Red, kMarine, {8, 16});
    f.add(Team::Blue, kMarine, {13, 16});
    const auto s = resolve_attack_move(f.world, f.world.red[0], f.world.blue[0], f.cfg);
    CHECK(s.in_range);
    auto r = step_world(f.world, f.all(Team::Red, Command::attack(0)),
                        f.all(Team::Blue, Command::stop()), f.cfg);
    CHECK(r.world.world_position(r.world.red[0]) == Vec2{8, 16});
    CHECK(r.events.red.damage_dealt == 6);
  }
  SUBCASE("two-step trace from 6.5") {
    // Hand trace: 6.5 > 6 so the first step closes 2.25 * 0.5 = 1.125 to a
    // distance of 5.375; the second step is in range and fires.
    Fixture f;
    f.add(Team::Red, kMarine, {8, 16});
    f.add(Team::Blue, kMarine, {14.5, 16});
    auto r1 = step_world(f.world, f.all(Team::Red, Command::attack(0)),
                         f.all(Team::Blue, Command::stop()), f.cfg);
    CHECK(distance(r1.world.red[0].pos, r1.world.blue[0].pos) == 5.375);
    CHECK(r1.events.red.damage_dealt == 0);
    auto r2 = step_world(r1.world, f.all(Team::Red, Command::attack(0)),
                         f.all(Team::Blue, Command::stop()), f.cfg);
    CHECK(r2.events.red.damage_dealt == 6);
  }
  SUBCASE("dead target") {
    Fixture f;
    f.add(Team::Red, kMarine, {8, 16});
    f.add(Team::Blue, kMarine, {14.5, 16}).alive = false;
    CHECK_THROWS_AS(resolve_attack_move(f.world, f.world.red[0], f.world.blue[0], f.cfg), Error);
  }
}

TEST_CASE("regen_shields") {
  Fixture f;
  Unit& z = f.add(Team::Red, kZealot, {10, 10});
  z.shield = 44;
  z.last_damaged_at = 0;
  f.add(Team::Red, kZealot, {10, 12});
  f.add(Team::Red, kMarine, {10, 14}).health = 20;
  f.world.time = 10;
  const WorldState w = regen_shields(f.world, f.cfg);
  CHECK(w.red[0].shield == 45);
  CHECK(w.red[1].shield == 50);
  CHECK(w.red[2].shield == 0);
  CHECK(w.red[2].health == 20);

  f.world.time = 9.5;
  CHECK(regen_shields(f.world, f.cfg).red[0].shield == 44);
}

TEST_CASE("apply_heal") {
  Fixture f;
  Unit& medivac = f.add(Team::Red, kMedivac, {10, 10});
  Unit& marine = f.add(Team::Red, kMarine, {11, 10});
  marine.health = 30;
  Unit enemy = f.add(Team::Blue, kMarine, {12, 10});
  CHECK(apply_heal(f.world, f.world.red[0], f.world.red[1]).health == 37);
  f.world.red[1].health = 45;
  CHECK(apply_heal(f.world, f.world.red[0], f.world.red[1]).health == 45);
  f.world.red[1].health = 42;
  CHECK(apply_heal(f.world, f.world.red[0], f.world.red[1]).health == 45);
  try {
    apply_heal(f.world, f.world.red[0], enemy);
    FAIL("expected InvalidHealTarget");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidHealTarget);
  }
  (void)medivac;
}

TEST_CASE("heal inside step_world is applied after damage") {
  Fixture f;
  f.add(Team::Red, kMedivac, {10, 16});
  f.add(Team::Red, kMarine, {11, 16}).health = 30;
  f.add(Team::Blue, kMarine, {15, 16});
  std::vector<Command> red = {Command::heal(1), Command::stop()};
  auto r = step_world(f.world, red, f.all(Team::Blue, Command::attack(1)), f.cfg);
  CHECK(r.world.red[1].health == 31);
  CHECK(r.events.red.healed == 7);
}

TEST_CASE("colossus splash hits every enemy within the radius") {
  Fixture f;
  f.add(Team::Red, kColossus, {10, 16});
  f.add(Team::Blue, kMarine, {14, 16});
  f.add(Team::Blue, kMarine, {14, 16.75});
  f.add(Team::Blue, kStalker, {14, 15.5});
  f.add(Team::Blue, kMarine, {14, 18});
  std::vector<Command> red = {Command::attack(0)};
  auto r = step_world(f.world, red, f.all(Team::Blue, Command::stop()), f.cfg);
  CHECK(r.world.blue[0].health == 15);
  CHECK(r.world.blue[1].health == 15);
  CHECK(r.world.blue[2].shield == 60);
  CHECK(r.world.blue[3].health == 45);
}

TEST_CASE("terminal_status") {
  Fixture f;
  f.add(Team::Red, kMarine, {10, 10});
  f.add(Team::Red, kMarine, {10, 12});
  f.add(Team::Blue, kMarine, {20, 10});
  CHECK(terminal_status(f.world, 10) == Outcome::Ongoing);
  f.world.step = 10;
  CHECK(terminal_status(f.world, 10) == Outcome::Draw);
  f.world.blue[0].alive = false;
  CHECK(terminal_status(f.world, 10) == Outcome::RedWin);
  f.world.red[0].alive = f.world.red[1].alive = false;
  CHECK(terminal_status(f.world, 10) == Outcome::Draw);
}

namespace {

// Random small worlds plus random valid commands for the property checks.
struct RandomCase {
  WorldState world;
  std::vector<Command> red, blue;
};

WorldState random_world(std::mt19937_64& rng, const EngineConfig& cfg, int max_per_team) {
  WorldState w = make_world(cfg);
  std::uniform_int_distribution<int> count(1, max_per_team);
  std::uniform_int_distribution<int> type(0, kNumBuiltinSpecs - 1);
  std::uniform_real_distribution<double> coord(-6, 6);
  std::uniform_real_distribution<double> frac(0.2, 1.0);
  for (Team t : {Team::Red, Team::Blue}) {
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      Unit u = make_unit(w, t, i, type(rng), w.center() + Vec2{coord(rng), coord(rng)});
      u.health = std::round(u.health * frac(rng));
      u.shield = std::round(u.shield * frac(rng));
      w.team(t).push_back(u);
    }
  }
  return w;
}

std::vector<Command> random_commands(std::mt19937_64& rng, const WorldState& w, Team t) {
  std::vector<Command> out;
  const auto& units = w.team(t);
  const auto& enemies = w.team(opponent(t));
  for (std::size_t i = 0; i < units.size(); ++i) {
    const Unit& u = units[i];
    if (!u.alive) {
      out.push_back(Command::noop());
      continue;
    }
    std::vector<Command> options = {Command::stop()};
    for (int d = 0; d < 4; ++d) options.push_back(Command::move(static_cast<Direction>(d)));
    const UnitSpec& s = w.spec(u);
    if (s.is_healer) {
      for (std::size_t k = 0; k < units.size(); ++k) {
        if (units[k].alive && !w.spec(units[k]).is_healer) options.push_back(Command::heal(k));
      }
    } else {
      for (std::size_t k = 0; k < enemies.size(); ++k) {
        if (enemies[k].alive) {
          options.push_back(Command::attack(k));
          options.push_back(Command::attack(k));
        }
      }
    }
    out.push_back(options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)]);
  }
  return out;
}

refsim::World to_ref(const WorldState& w) {
  refsim::World r{{}, w.width, w.height, w.time};
  for (Team t : {Team::Red, Team::Blue}) {
    for (const Unit& u : w.team(t)) {
      r.units.push_back({static_cast<int>(t), u.spec_id, u.pos.x, u.pos.y, u.health, u.shield,
                         u.weapon_cooldown, u.alive, u.last_damaged_at});
    }
  }
  return r;
}

std::vector<refsim::Cmd> to_ref(const WorldState& w, const std::vector<Command>& red,
                                const std::vector<Command>& blue) {
  std::vector<refsim::Cmd> out;
  const int n_red = static_cast<int>(w.red.size());
  auto conv = [&](const Command& c, bool is_red) {
    refsim::Cmd r{0, 0, 0, -1};
    switch (c.kind) {
      case CommandKind::NoOp: r.kind = 0; break;
      case CommandKind::Stop: r.kind = 1; break;
      case CommandKind::Move: {
        r.kind = 2;
        const Vec2 v = direction_vector(c.dir);
        r.dx = v.x;
        r.dy = v.y;
        break;
      }
      case CommandKind::Attack:
        r.kind = 3;
        r.target = is_red ? n_red + c.target : c.target;
        break;
      case CommandKind::Heal:
        r.kind = 4;
        r.target = is_red ? c.target : n_red + c.target;
        break;
    }
    return r;
  };
  for (const auto& c : red) out.push_back(conv(c, true));
  for (const auto& c : blue) out.push_back(conv(c, false));
  return out;
}

}  // namespace

TEST_CASE("property: brute-force re-simulation matches step_world on small worlds") {
  std::mt19937_64 rng(7);
  EngineConfig cfg;
  for (int trial = 0; trial < 400; ++trial) {
    WorldState w = random_world(rng, cfg, 2);
    refsim::World ref = to_ref(w);
    for (int s = 0; s < 5; ++s) {
      const auto red = random_commands(rng, w, Team::Red);
      const auto blue = random_commands(rng, w, Team::Blue);
      const auto rc = to_ref(w, red, blue);
      step_world_inplace(w, red, blue, cfg);
      refsim::step(ref, rc, cfg.step_dt, cfg.shield_regen_delay, cfg.shield_regen_rate,
                   cfg.splash_radius, cfg.heal_per_action);
      std::size_t k = 0;
      for (Team t : {Team::Red, Team::Blue}) {
        for (const Unit& u : w.team(t)) {
          const refsim::U& r = ref.units[k++];
          REQUIRE(u.pos.x == r.x);
          REQUIRE(u.pos.y == r.y);
          REQUIRE(u.health == r.hp);
          REQUIRE(u.shield == r.sh);
          REQUIRE(u.weapon_cooldown == r.cd);
          REQUIRE(u.alive == r.alive);
        }
      }
      REQUIRE(w.time == ref.t);
    }
  }
}

TEST_CASE("property: conservation, bounds, determinism, mirror symmetry") {
  std::mt19937_64 rng(11);
  EngineConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    WorldState w = random_world(rng, cfg, 4);
    WorldState mirrored = reflect(w);
    double red_dealt = 0, blue_taken = 0;
    int red_kills = 0, blue_deaths = 0;
    std::vector<double> last_fire(w.red.size(), -1e9);
    for (int s = 0; s < 30 && terminal_status(w, 1000) == Outcome::Ongoing; ++s) {
      const auto red = random_commands(rng, w, Team::Red);
      const auto blue = random_commands(rng, w, Team::Blue);
      const auto again = step_world(w, red, blue, cfg);

      // Mirrored command set for the reflected world (teams swapped).
      auto mirror_cmds = [](std::vector<Command> cs) {
        for (auto& c : cs) {
          if (c.kind == CommandKind::Move) c.dir = mirror(c.dir);
        }
        return cs;
      };
      const auto mirror_step = step_world(mirrored, mirror_cmds(blue), mirror_cmds(red), cfg);

      const double t0 = w.time;
      const auto ev = step_world_inplace(w, red, blue, cfg);
      REQUIRE(again.world == w);
      REQUIRE(again.events == ev);
      REQUIRE(mirror_step.world == reflect(w));
      mirrored = mirror_step.world;

      red_dealt += ev.red.damage_dealt;
      blue_taken += ev.blue.damage_taken;
      red_kills += ev.red.kills;
      blue_deaths += ev.blue.deaths;
      for (Team t : {Team::Red, Team::Blue}) {
        for (const Unit& u : w.team(t)) {
          const UnitSpec& sp = w.spec(u);
          REQUIRE(u.health >= 0);
          REQUIRE(u.health <= sp.max_health);
          REQUIRE(u.shield >= 0);
          REQUIRE(u.shield <= sp.max_shield);
          REQUIRE(u.alive == (u.health > 0));
          REQUIRE(w.in_bounds(u.pos));
        }
      }
      for (std::size_t i = 0; i < w.red.size(); ++i) {
        if (w.red[i].weapon_cooldown > 0 && w.spec(w.red[i]).attack_period &&
            w.red[i].weapon_cooldown == *w.spec(w.red[i]).attack_period) {
          REQUIRE(t0 - last_fire[i] >= *w.spec(w.red[i]).attack_period);
          last_fire[i] = t0;
        }
      }
    }
    REQUIRE(red_dealt == blue_taken);
    REQUIRE(red_kills == blue_deaths);
  }
}
