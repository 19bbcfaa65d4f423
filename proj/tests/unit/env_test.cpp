#include <doctest.h>

#include <cstring>
#include <random>
#include <sstream>

#include "sc2ba/env.hpp"
#include "sc2ba/error.hpp"

using namespace sc2ba;

namespace {

ScenarioSpec zero_jitter(std::string_view name) {
  ScenarioSpec s = builtin_scenario(name);
  s.spawn_spread = 0;
  return s;
}

std::vector<int> all_stop(const TeamStepResult& r) {
  std::vector<int> a;
  for (const auto& m : r.masks) a.push_back(m[action::kStop] ? action::kStop : action::kNoOp);
  return a;
}

int random_available(std::mt19937_64& rng, const ActionMask& m) {
  std::vector<int> codes;
  for (std::size_t c = 0; c < m.size(); ++c) {
    if (m[c]) codes.push_back(static_cast<int>(c));
  }
  return codes[std::uniform_int_distribution<std::size_t>(0, codes.size() - 1)(rng)];
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("reset") {
  Env env(builtin_scenario("3m"));
  const EnvStep a = env.reset(1);
  const EnvStep b = env.reset(1);
  CHECK(a.red == b.red);
  CHECK(a.blue == b.blue);
  CHECK(a.red.reward == 0);
  CHECK_FALSE(a.red.terminated);

  const ObsLayout& L = env.context(Team::Red).layout;
  for (const auto& obs : a.red.observations) {
    for (int i = L.enemies_offset(); i < L.allies_offset(); ++i) CHECK(obs[i] == 0.0);
  }
  CHECK(env.obs_size(Team::Red) == 40);
  CHECK(env.state_size(Team::Red) == 36);
  CHECK(env.n_actions(Team::Red) == 9);

  Env mmm2(builtin_scenario("MMM2"));
  const EnvStep r = mmm2.reset(0);
  CHECK(r.red.observations.size() == 10);
  CHECK(r.blue.observations.size() == 12);
  CHECK(mmm2.n_actions(Team::Blue) == 6 + 12);
  CHECK(mmm2.n_actions(Team::Red) == 6 + 12);
}

TEST_CASE("step lifecycle") {
  Env env(builtin_scenario("3m"));
  EnvStep s = env.reset(5);
  s = env.step(all_stop(s.red), all_stop(s.blue));
  CHECK(s.red.reward == 0);
  CHECK(s.blue.reward == 0);
  CHECK_FALSE(s.red.terminated);

  // Kill one red marine by hand, then command it to move.
  WorldState w = env.world();
  w.red[0].alive = false;
  w.red[0].health = 0;
  s = env.set_world(w);
  CHECK(s.red.masks[0] == ActionMask{1, 0, 0, 0, 0, 0, 0, 0, 0});
  std::vector<int> red = all_stop(s.red);
  red[0] = action::kEast;
  CHECK(code_of([&] { env.step(red, all_stop(s.blue)); }) == ErrorCode::UnavailableAction);

  w.red[1].alive = w.red[2].alive = false;
  s = env.set_world(w);
  CHECK(s.red.terminated);
  CHECK(code_of([&] { env.step(all_stop(s.red), all_stop(s.blue)); }) ==
        ErrorCode::EpisodeAlreadyTerminated);
}

TEST_CASE("observation encoding") {
  ScenarioSpec spec = zero_jitter("3m");
  Env env(spec);
  env.reset(0);
  WorldState w = env.world();
  // Pull the middle pair to three units either side of the center line.
  w.red[1].pos = {-1.5, 0};
  w.blue[1].pos = {1.5, 0};
  const EnvStep s = env.set_world(w);
  const ObsLayout& L = env.context(Team::Red).layout;
  const int enemy1 = L.enemies_offset() + 1 * L.enemy_width();
  for (const TeamStepResult* r : {&s.red, &s.blue}) {
    const Observation& o = r->observations[1];
    CHECK(o[enemy1 + 0] == doctest::Approx(2.0 / 3.0));
    CHECK(o[enemy1 + 1] == 3.0 / 9.0);
    CHECK(o[enemy1 + 2] == 3.0 / 9.0);
    CHECK(o[enemy1 + 3] == 0.0);
    CHECK(o[enemy1 + 4] == 1.0);
    CHECK(o[enemy1 + 5] == 0.0);
    CHECK(o[enemy1 + 6] == 1.0);
  }
  CHECK(s.red.observations == s.blue.observations);
  CHECK(s.red.state == s.blue.state);
}

TEST_CASE("state encoding carries enemy weapon cooldown") {
  Env env(zero_jitter("3m"));
  env.reset(0);
  WorldState w = env.world();
  w.blue[0].weapon_cooldown = 0.86;
  const EnvStep s = env.set_world(w);
  const ObsLayout& L = env.context(Team::Red).layout;
  CHECK(s.red.state[1] == 1.0);
  CHECK(s.red.state[0] == 1.0);
  CHECK(L.state_enemy_width() == 6 + 1);

  Env swapped(zero_jitter("3m"), {}, EnvOptions{true});
  swapped.reset(0);
  CHECK(swapped.state_size(Team::Red) == 36);
  const EnvStep t = swapped.set_world(w);
  // blue's own row 0 now carries the cooldown
  CHECK(t.blue.state[3 * 5 + 1] == 1.0);
}

TEST_CASE("available_actions") {
  Env env(zero_jitter("3m"));
  env.reset(0);
  WorldState w = env.world();
  w.red[0].pos = {-16, 0};
  w.red[1].pos = {-4, 10};
  w.blue[1].pos = {4, 10};  // distance 8: inside sight, outside attack range
  const EnvStep s = env.set_world(w);
  CHECK(s.red.masks[0][action::kWest] == 0);
  CHECK(s.red.masks[0][action::kEast] == 1);
  CHECK(s.red.masks[1][action::kFirstTarget + 1] == 1);
  CHECK(s.red.masks[1][action::kFirstTarget + 0] == 0);
  CHECK(s.red.masks[1][action::kNoOp] == 0);
  CHECK(s.red.masks[1][action::kStop] == 1);
  // blue's West in its mirrored frame is world east, which is open.
  CHECK(s.blue.masks[1][action::kFirstTarget + 1] == 1);
}

TEST_CASE("healer masks index allies") {
  Env env(zero_jitter("MMM"));
  const EnvStep s = env.reset(0);
  const ActionMask& m = s.red.masks[0];
  CHECK(m[action::kFirstTarget + 0] == 0);  // itself
  CHECK(m[action::kFirstTarget + 1] == 1);  // a marauder next to it
}

TEST_CASE("compute_reward") {
  const ScenarioSpec& spec = builtin_scenario("3m");
  RewardConfig cfg;
  const double scale = 20.0 / 365.0;
  CHECK(reward_scale(spec, Team::Red, cfg) == scale);

  StepEvents ev;
  ev.red.damage_dealt = 6;
  ev.blue.damage_taken = 6;
  CHECK(compute_reward(ev, Outcome::Ongoing, Team::Red, cfg, spec) == doctest::Approx(0.3288).epsilon(1e-4));
  CHECK(compute_reward(ev, Outcome::Ongoing, Team::Blue, cfg, spec) == doctest::Approx(-0.1644).epsilon(1e-4));
  CHECK(compute_reward(ev, Outcome::Ongoing, Team::Red, cfg, spec) == 6 * scale);

  const StepEvents none;
  CHECK(compute_reward(none, Outcome::Draw, Team::Red, cfg, spec) == -50 * scale);
  CHECK(compute_reward(none, Outcome::Draw, Team::Blue, cfg, spec) == -50 * scale);
  CHECK(compute_reward(none, Outcome::RedWin, Team::Red, cfg, spec) == 200 * scale);
  CHECK(compute_reward(none, Outcome::RedWin, Team::Blue, cfg, spec) == -50 * scale);

  RewardConfig zero_sum = cfg;
  zero_sum.self_damage_weight = 1;
  zero_sum.kill_bonus = 0;
  zero_sum.death_penalty = 0;
  CHECK(compute_reward(ev, Outcome::Ongoing, Team::Red, zero_sum, spec) ==
        -compute_reward(ev, Outcome::Ongoing, Team::Blue, zero_sum, spec));
}

TEST_CASE("draw at the step limit penalizes both teams") {
  ScenarioSpec spec = builtin_scenario("3m");
  spec.episode_step_limit = 2;
  Env env(spec);
  EnvStep s = env.reset(0);
  s = env.step(all_stop(s.red), all_stop(s.blue));
  s = env.step(all_stop(s.red), all_stop(s.blue));
  CHECK(s.red.terminated);
  CHECK(s.red.outcome == Outcome::Draw);
  CHECK(s.red.reward == -50 * reward_scale(spec, Team::Red, env.reward_config()));
  CHECK(s.blue.reward == s.red.reward);
}

TEST_CASE("property: mask soundness, observation bounds, mirror rollout") {
  std::mt19937_64 rng(17);
  for (const auto& base : builtin_scenarios()) {
    Env env(base);
    for (int episode = 0; episode < 3; ++episode) {
      EnvStep s = env.reset(rng());
      while (!s.red.terminated) {
        std::vector<int> acts[2];
        for (int t = 0; t < 2; ++t) {
          const TeamStepResult& r = t == 0 ? s.red : s.blue;
          for (const auto& o : r.observations) {
            for (double v : o) REQUIRE((v >= -1.0 && v <= 1.0));
          }
          for (std::size_t i = 0; i < r.masks.size(); ++i) {
            acts[t].push_back(random_available(rng, r.masks[i]));
          }
        }
        // One unavailable code per step must be rejected without mutation.
        const TeamStepResult& r = s.red;
        for (std::size_t c = 0; c < r.masks[0].size(); ++c) {
          if (!r.masks[0][c]) {
            auto bad = acts[0];
            bad[0] = static_cast<int>(c);
            const WorldState before = env.world();
            REQUIRE(code_of([&] { env.step(bad, acts[1]); }) == ErrorCode::UnavailableAction);
            REQUIRE(env.world() == before);
            break;
          }
        }
        s = env.step(acts[0], acts[1]);
        REQUIRE(std::isfinite(s.red.reward));
        REQUIRE(s.red.terminated == s.blue.terminated);
      }
    }
  }
}

TEST_CASE("identical deterministic policies in a mirrored start draw") {
  // Deterministic policy: hash the observation and pick among available codes.
  auto policy = [](const Observation& o, const ActionMask& m) {
    std::uint64_t h = 1469598103934665603ULL;
    for (double v : o) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = (h ^ bits) * 1099511628211ULL;
    }
    std::vector<int> codes;
    for (std::size_t c = 0; c < m.size(); ++c) {
      if (m[c]) codes.push_back(static_cast<int>(c));
    }
    return codes[h % codes.size()];
  };
  for (const char* name : {"3m", "2s3z", "MMM"}) {
    Env env(zero_jitter(name));
    EnvStep s = env.reset(0);
    while (!s.red.terminated) {
      REQUIRE(s.red.observations == s.blue.observations);
      std::vector<int> a, b;
      for (std::size_t i = 0; i < s.red.masks.size(); ++i) {
        a.push_back(policy(s.red.observations[i], s.red.masks[i]));
        b.push_back(policy(s.blue.observations[i], s.blue.masks[i]));
      }
      s = env.step(a, b);
      REQUIRE(env.world() == reflect(env.world()));
      REQUIRE(s.red.reward == s.blue.reward);
    }
    CHECK(s.red.outcome == Outcome::Draw);
  }
}

TEST_CASE("replay log round trip") {
  Env env(builtin_scenario("3m"));
  std::ostringstream out;
  ReplayWriter writer(out);
  EnvStep s = env.reset(42);
  int steps = 0;
  while (!s.red.terminated && steps < 5) {
    const auto a = all_stop(s.red), b = all_stop(s.blue);
    s = env.step(a, b);
    writer.write(3, env, a, b, s);
    ++steps;
  }
  std::istringstream in(out.str());
  const auto log = read_replay(in);
  REQUIRE(log.size() == 5);
  CHECK(log[0].episode == 3);
  CHECK(log[0].seed == 42);
  CHECK(log[4].step == 5);
  CHECK(log[4].red_actions == std::vector<int>{1, 1, 1});
  CHECK(log[4].world.red.size() == 3);
  CHECK(log[4].world.red[0].pos == env.world().world_position(env.world().red[0]));
}
