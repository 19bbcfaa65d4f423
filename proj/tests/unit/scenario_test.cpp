#include <doctest.h>

#include <random>

#include "sc2ba/error.hpp"
#include "sc2ba/scenario.hpp"

using namespace sc2ba;

TEST_CASE("builtin registry matches the scenario table") {
  const auto& reg = builtin_scenarios();
  REQUIRE(reg.size() == 10);
  const std::vector<std::string> names = {"3m",   "8m",     "25m",      "MMM",        "2s3z",
                                          "3s5z", "1c3s5z", "5m_vs_6m", "10m_vs_11m", "MMM2"};
  for (std::size_t i = 0; i < names.size(); ++i) CHECK(reg[i].name == names[i]);

  const auto& mmm2 = builtin_scenario("MMM2");
  CHECK(mmm2.red == std::vector<UnitGroup>{{kMedivac, 1}, {kMarauder, 2}, {kMarine, 7}});
  CHECK(mmm2.blue == std::vector<UnitGroup>{{kMedivac, 1}, {kMarauder, 3}, {kMarine, 8}});
  CHECK_FALSE(mmm2.symmetric());

  const auto& m3 = builtin_scenario("3m");
  CHECK(m3.unit_count(Team::Red) == 3);
  CHECK(m3.symmetric());
  CHECK_FALSE(builtin_scenario("5m_vs_6m").symmetric());
  CHECK(builtin_scenario("5m_vs_6m").unit_count(Team::Blue) == 6);
  CHECK(builtin_scenario("MMM").unit_count(Team::Red) == 10);
  CHECK(builtin_scenario("1c3s5z").unit_count(Team::Blue) == 9);
  CHECK(builtin_scenario("25m").episode_step_limit == 200);

  int symmetric = 0;
  for (const auto& s : reg) symmetric += s.symmetric();
  CHECK(symmetric == 7);
  CHECK_THROWS_AS(builtin_scenario("6h_vs_8z"), Error);
}

TEST_CASE("spawn_layout") {
  SUBCASE("3m zero jitter, front column four units from center") {
    ScenarioSpec s = builtin_scenario("3m");
    s.spawn_spread = 0;
    s.spawn_offset = 4;
    const Layout l = spawn_layout(s, 123);
    CHECK(l.center == Vec2{16, 16});
    CHECK(l.red_positions == std::vector<Vec2>{{12, 14}, {12, 16}, {12, 18}});
    CHECK(l.blue_positions == std::vector<Vec2>{{20, 18}, {20, 16}, {20, 14}});
  }
  SUBCASE("reflection identity and determinism for every scenario and seed") {
    for (const auto& s : builtin_scenarios()) {
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Layout a = spawn_layout(s, seed);
        const Layout b = spawn_layout(s, seed);
        REQUIRE(a.red_positions == b.red_positions);
        REQUIRE(a.blue_positions == b.blue_positions);
        REQUIRE(static_cast<int>(a.red_positions.size()) == s.unit_count(Team::Red));
        REQUIRE(static_cast<int>(a.blue_positions.size()) == s.unit_count(Team::Blue));
        const std::size_t n = std::min(a.red_positions.size(), a.blue_positions.size());
        for (std::size_t i = 0; i < n; ++i) {
          REQUIRE(a.blue_positions[i] == a.center * 2.0 - a.red_positions[i]);
          REQUIRE((a.red_positions[i] + a.blue_positions[i]) * 0.5 == a.center);
        }
      }
    }
  }
  SUBCASE("jitter stays inside the spread") {
    const ScenarioSpec s = builtin_scenario("8m");
    ScenarioSpec flat = s;
    flat.spawn_spread = 0;
    const Layout base = spawn_layout(flat, 0);
    const Layout j = spawn_layout(s, 99);
    for (std::size_t i = 0; i < base.red_positions.size(); ++i) {
      CHECK(std::abs(j.red_positions[i].x - base.red_positions[i].x) <= 0.5);
      CHECK(std::abs(j.red_positions[i].y - base.red_positions[i].y) <= 0.5);
    }
  }
  SUBCASE("arena too small") {
    ScenarioSpec s = builtin_scenario("25m");
    s.engine.arena_width = 12;
    CHECK_THROWS_AS(spawn_layout(s, 0), Error);
  }
}

TEST_CASE("parse_scenario_config") {
  SUBCASE("override red marines") {
    const auto s = parse_scenario_config("[scenario]\nbase = 8m\n\n[red]\nmarines = 9\n");
    CHECK(s.unit_count(Team::Red) == 9);
    CHECK(s.unit_count(Team::Blue) == 8);
    CHECK_FALSE(s.symmetric());
  }
  SUBCASE("identity") {
    CHECK(parse_scenario_config("[scenario]\nbase = 3m\n") == builtin_scenario("3m"));
  }
  SUBCASE("errors") {
    auto code_of = [](std::string_view text) {
      try {
        parse_scenario_config(text);
      } catch (const Error& e) {
        return e.code();
      }
      return ErrorCode::Io;
    };
    CHECK(code_of("[scenario]\nbase=3m\n[red]\nmarines = 0\n") == ErrorCode::NonPositiveCount);
    CHECK(code_of("[red]\nhydralisks = 2\n") == ErrorCode::UnknownUnitName);
    CHECK(code_of("[scenario]\nbase = 4m\n") == ErrorCode::UnknownBaseScenario);
    CHECK(code_of("[scenario]\nbase = 3m\ncolour = red\n") == ErrorCode::UnknownConfigKey);
    CHECK(code_of("[weather]\nrain = 1\n") == ErrorCode::UnknownConfigKey);
    CHECK(code_of("[engine]\nstep_dt = fast\n") == ErrorCode::ConfigSyntax);
    CHECK(code_of("marines = 3\n") == ErrorCode::ConfigSyntax);
  }
  SUBCASE("engine and scenario keys") {
    const auto s = parse_scenario_config(
        "# comment\n[scenario]\nbase = MMM\nname = wide\narena_width = 48\nstep_limit = 90\n"
        "[engine]\nheal_per_action = 9\nsplash_radius = 1.5\n[blue]\nzealots = 2\n");
    CHECK(s.name == "wide");
    CHECK(s.engine.arena_width == 48);
    CHECK(s.episode_step_limit == 90);
    CHECK(s.engine.heal_per_action == 9);
    CHECK(s.blue.back() == UnitGroup{kZealot, 2});
  }
}

TEST_CASE("property: serialize then parse yields an equal spec") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> count(1, 12);
  std::uniform_int_distribution<int> pick(0, 9);
  std::uniform_int_distribution<int> type(0, kNumBuiltinSpecs - 1);
  std::uniform_real_distribution<double> real(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    ScenarioSpec s = builtin_scenario(builtin_scenarios()[pick(rng)].name);
    if (trial % 2) {
      std::string doc = "[scenario]\nbase = " + s.name + "\nspawn_spread = " +
                        format_double(real(rng)) + "\n[red]\n" +
                        spec_config_key(type(rng)) + " = " + std::to_string(count(rng)) +
                        "\n[engine]\nstep_dt = " + format_double(0.1 + real(rng)) + "\n";
      s = parse_scenario_config(doc);
    }
    REQUIRE(parse_scenario_config(serialize_scenario_config(s)) == s);
  }
}
