#include "sc2ba/env.hpp"

#include <cmath>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>

#include "sc2ba/error.hpp"

namespace sc2ba {

namespace {

double frame_sign(Team t) { return t == Team::Red ? 1.0 : -1.0; }

// Reflected coordinates; adding +0.0 turns -0.0 into +0.0 so mirrored
// encodings are bitwise identical, not just numerically equal.
Vec2 in_frame(Vec2 v, double sign) { return {v.x * sign + 0.0, v.y * sign + 0.0}; }

Direction frame_direction(Team t, int code) {
  const Direction d = static_cast<Direction>(code - action::kNorth);
  return t == Team::Red ? d : mirror(d);
}

double shield_fraction(const Unit& u, const UnitSpec& s) {
  return s.max_shield > 0 ? u.shield / s.max_shield : 0.0;
}

void put_one_hot(double* out, const EncodingContext& ctx, int spec_id) {
  const int slot = ctx.type_index[spec_id];
  if (slot >= 0) out[slot] = 1.0;
}

}  // namespace

void RewardConfig::validate() const {
  for (double v : {kill_bonus, win_bonus, self_damage_weight, death_penalty, draw_penalty,
                   loss_penalty, scale_target}) {
    if (!(v >= 0)) throw Error(ErrorCode::ConfigSyntax, "reward terms must be >= 0");
  }
}

EncodingContext EncodingContext::make(const ScenarioSpec& spec, Team team,
                                      const EnvOptions& options) {
  EncodingContext ctx;
  const auto types = spec.unit_types();
  ctx.type_index.assign(kNumBuiltinSpecs, -1);
  for (std::size_t i = 0; i < types.size(); ++i) ctx.type_index[types[i]] = static_cast<int>(i);
  ctx.layout.n_enemies = spec.unit_count(opponent(team));
  ctx.layout.n_allies = spec.unit_count(team);
  ctx.layout.type_width = static_cast<int>(types.size());
  ctx.layout.cooldown_on_allies = options.cooldown_on_allies;
  for (int id : spec.unit_specs(team)) ctx.has_healer = ctx.has_healer || builtin_spec(id).is_healer;
  const int targets = std::max(ctx.layout.n_enemies, ctx.has_healer ? ctx.layout.n_allies : 0);
  ctx.n_actions = action::kFirstTarget + targets;
  ctx.step_dt = spec.engine.step_dt;
  return ctx;
}

Observation encode_observation(const WorldState& world, int agent, Team team,
                               const EncodingContext& ctx) {
  const ObsLayout& L = ctx.layout;
  Observation obs(L.obs_size(), 0.0);
  const Unit& self = world.team(team).at(agent);
  if (!self.alive) return obs;
  const UnitSpec& self_spec = world.spec(self);
  const double sight = self_spec.sight_range;
  const double sign = frame_sign(team);

  for (int d = 0; d < 4; ++d) {
    const Direction dir = frame_direction(team, action::kNorth + d);
    const Vec2 next = self.pos + direction_vector(dir) * (self_spec.move_speed * ctx.step_dt);
    obs[d] = world.in_bounds(next) ? 1.0 : 0.0;
  }

  const auto& enemies = world.team(opponent(team));
  for (int k = 0; k < L.n_enemies; ++k) {
    const Unit& e = enemies[k];
    if (!e.alive) continue;
    const Vec2 rel = in_frame(e.pos - self.pos, sign);
    const double dist = std::hypot(rel.x, rel.y);
    if (dist >= sight) continue;
    const UnitSpec& es = world.spec(e);
    double* f = obs.data() + L.enemies_offset() + k * L.enemy_width();
    f[0] = static_cast<double>(k + 1) / L.n_enemies;
    f[1] = dist / sight;
    f[2] = rel.x / sight;
    f[3] = rel.y / sight;
    f[4] = e.health / es.max_health;
    f[5] = shield_fraction(e, es);
    put_one_hot(f + 6, ctx, e.spec_id);
  }

  const auto& allies = world.team(team);
  int slot = 0;
  for (int j = 0; j < L.n_allies; ++j) {
    if (j == agent) continue;
    const Unit& a = allies[j];
    double* f = obs.data() + L.allies_offset() + slot * L.ally_width();
    ++slot;
    if (!a.alive) continue;
    const Vec2 rel = in_frame(a.pos - self.pos, sign);
    const double dist = std::hypot(rel.x, rel.y);
    if (dist >= sight) continue;
    const UnitSpec& as = world.spec(a);
    f[0] = dist / sight;
    f[1] = rel.x / sight;
    f[2] = rel.y / sight;
    f[3] = a.health / as.max_health;
    f[4] = shield_fraction(a, as);
    put_one_hot(f + 5, ctx, a.spec_id);
  }

  double* own = obs.data() + L.own_offset();
  own[0] = self.health / self_spec.max_health;
  own[1] = shield_fraction(self, self_spec);
  put_one_hot(own + 2, ctx, self.spec_id);
  return obs;
}

GlobalState encode_state(const WorldState& world, Team team, const EncodingContext& ctx) {
  const ObsLayout& L = ctx.layout;
  GlobalState state(L.state_size(), 0.0);
  const double sign = frame_sign(team);
  const Vec2 half = world.half_extent();

  double* f = state.data();
  const auto& enemies = world.team(opponent(team));
  for (int k = 0; k < L.n_enemies; ++k, f += L.state_enemy_width()) {
    const Unit& u = enemies[k];
    if (!u.alive) continue;
    const UnitSpec& s = world.spec(u);
    int i = 0;
    f[i++] = u.health / s.max_health;
    if (!L.cooldown_on_allies) {
      f[i++] = s.attack_period ? u.weapon_cooldown / *s.attack_period : 0.0;
    }
    const Vec2 p = in_frame(u.pos, sign);
    f[i++] = p.x / half.x;
    f[i++] = p.y / half.y;
    f[i++] = shield_fraction(u, s);
    put_one_hot(f + i, ctx, u.spec_id);
  }
  const auto& allies = world.team(team);
  for (int j = 0; j < L.n_allies; ++j, f += L.state_ally_width()) {
    const Unit& u = allies[j];
    if (!u.alive) continue;
    const UnitSpec& s = world.spec(u);
    int i = 0;
    f[i++] = u.health / s.max_health;
    if (L.cooldown_on_allies) {
      f[i++] = s.attack_period ? u.weapon_cooldown / *s.attack_period : 0.0;
    }
    const Vec2 p = in_frame(u.pos, sign);
    f[i++] = p.x / half.x;
    f[i++] = p.y / half.y;
    f[i++] = shield_fraction(u, s);
    put_one_hot(f + i, ctx, u.spec_id);
  }
  return state;
}

ActionMask available_actions(const WorldState& world, int agent, Team team,
                             const EncodingContext& ctx) {
  ActionMask mask(ctx.n_actions, 0);
  const Unit& self = world.team(team).at(agent);
  if (!self.alive) {
    mask[action::kNoOp] = 1;
    return mask;
  }
  const UnitSpec& spec = world.spec(self);
  mask[action::kStop] = 1;
  for (int code = action::kNorth; code <= action::kWest; ++code) {
    const Vec2 next =
        self.pos + direction_vector(frame_direction(team, code)) * (spec.move_speed * ctx.step_dt);
    mask[code] = world.in_bounds(next) ? 1 : 0;
  }
  if (spec.is_healer) {
    const auto& allies = world.team(team);
    for (std::size_t k = 0; k < allies.size(); ++k) {
      const Unit& a = allies[k];
      if (!a.alive || world.spec(a).is_healer) continue;
      if (distance(a.pos, self.pos) < spec.sight_range) mask[action::kFirstTarget + k] = 1;
    }
  } else if (spec.can_attack()) {
    const auto& enemies = world.team(opponent(team));
    for (std::size_t k = 0; k < enemies.size(); ++k) {
      const Unit& e = enemies[k];
      if (e.alive && distance(e.pos, self.pos) < spec.sight_range) {
        mask[action::kFirstTarget + k] = 1;
      }
    }
  }
  return mask;
}

Command translate_action(const WorldState& world, int agent, Team team, int code) {
  if (code == action::kNoOp) return Command::noop();
  if (code == action::kStop) return Command::stop();
  if (code <= action::kWest) return Command::move(frame_direction(team, code));
  const Unit& self = world.team(team).at(agent);
  const int target = code - action::kFirstTarget;
  return world.spec(self).is_healer ? Command::heal(target) : Command::attack(target);
}

double reward_scale(const ScenarioSpec& spec, Team team, const RewardConfig& config) {
  double max_reward = 0;
  int enemies = 0;
  for (int id : spec.unit_specs(opponent(team))) {
    const UnitSpec& s = builtin_spec(id);
    max_reward += s.max_health + s.max_shield;
    ++enemies;
  }
  max_reward += config.kill_bonus * enemies + config.win_bonus;
  return config.scale_target / max_reward;
}

double compute_reward(const StepEvents& events, Outcome outcome, Team team,
                      const RewardConfig& config, const ScenarioSpec& spec) {
  const TeamEvents& e = events.team(team);
  double r = e.damage_dealt + config.kill_bonus * e.kills -
             config.self_damage_weight * (e.damage_taken + config.death_penalty * e.deaths);
  const Outcome win = team == Team::Red ? Outcome::RedWin : Outcome::BlueWin;
  const Outcome loss = team == Team::Red ? Outcome::BlueWin : Outcome::RedWin;
  if (outcome == win) r += config.win_bonus;
  if (outcome == Outcome::Draw) r -= config.draw_penalty;
  if (outcome == loss) r -= config.loss_penalty;
  return r * reward_scale(spec, team, config);
}

Env::Env(ScenarioSpec spec, RewardConfig reward, EnvOptions options)
    : spec_(std::move(spec)), reward_(reward), options_(options) {
  reward_.validate();
  spec_.engine.validate();
  ctx_[0] = EncodingContext::make(spec_, Team::Red, options_);
  ctx_[1] = EncodingContext::make(spec_, Team::Blue, options_);
  world_ = make_world(spec_, spawn_layout(spec_, 0));
}

TeamStepResult Env::encode(Team t) {
  const EncodingContext& ctx = context(t);
  TeamStepResult r;
  const int n = n_agents(t);
  r.observations.reserve(n);
  r.masks.reserve(n);
  for (int i = 0; i < n; ++i) {
    r.observations.push_back(encode_observation(world_, i, t, ctx));
    r.masks.push_back(available_actions(world_, i, t, ctx));
  }
  r.state = encode_state(world_, t, ctx);
  masks_[static_cast<int>(t)] = r.masks;
  r.terminated = terminated();
  r.outcome = outcome_;
  r.info = last_events_.team(t);
  return r;
}

EnvStep Env::reset(std::uint64_t seed) {
  seed_ = seed;
  return set_world(make_world(spec_, spawn_layout(spec_, seed)));
}

EnvStep Env::set_world(WorldState world) {
  world_ = std::move(world);
  outcome_ = terminal_status(world_, spec_.episode_step_limit);
  last_events_ = {};
  return {encode(Team::Red), encode(Team::Blue)};
}

void Env::check_actions(Team t, std::span<const int> actions) const {
  const auto& masks = masks_[static_cast<int>(t)];
  if (actions.size() != masks.size()) {
    throw Error(ErrorCode::ShapeMismatch, std::string(to_string(t)) + " expects " +
                                              std::to_string(masks.size()) + " actions");
  }
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const int code = actions[i];
    if (code < 0 || code >= static_cast<int>(masks[i].size()) || !masks[i][code]) {
      throw Error(ErrorCode::UnavailableAction, std::string(to_string(t)) + " agent " +
                                                    std::to_string(i) + " action " +
                                                    std::to_string(code));
    }
  }
}

EnvStep Env::step(std::span<const int> red_actions, std::span<const int> blue_actions) {
  if (terminated()) {
    throw Error(ErrorCode::EpisodeAlreadyTerminated, "reset before stepping again");
  }
  check_actions(Team::Red, red_actions);
  check_actions(Team::Blue, blue_actions);

  std::vector<Command> cmds[2];
  const std::span<const int> acts[2] = {red_actions, blue_actions};
  for (int t = 0; t < 2; ++t) {
    cmds[t].reserve(acts[t].size());
    for (std::size_t i = 0; i < acts[t].size(); ++i) {
      cmds[t].push_back(translate_action(world_, static_cast<int>(i), static_cast<Team>(t),
                                         acts[t][i]));
    }
  }
  last_events_ = step_world_inplace(world_, cmds[0], cmds[1], spec_.engine);
  outcome_ = terminal_status(world_, spec_.episode_step_limit);

  EnvStep out{encode(Team::Red), encode(Team::Blue)};
  out.red.reward = compute_reward(last_events_, outcome_, Team::Red, reward_, spec_);
  out.blue.reward = compute_reward(last_events_, outcome_, Team::Blue, reward_, spec_);
  return out;
}

namespace {

nlohmann::json units_json(const WorldState& w) {
  nlohmann::json arr = nlohmann::json::array();
  for (Team t : {Team::Red, Team::Blue}) {
    for (const Unit& u : w.team(t)) {
      const Vec2 p = w.world_position(u);
      arr.push_back({{"team", to_string(t)},
                     {"id", u.unit_id},
                     {"spec", u.spec_id},
                     {"x", p.x},
                     {"y", p.y},
                     {"health", u.health},
                     {"shield", u.shield},
                     {"cooldown", u.weapon_cooldown},
                     {"alive", u.alive}});
    }
  }
  return arr;
}

nlohmann::json events_json(const TeamEvents& e) {
  return {{"damage_dealt", e.damage_dealt},
          {"damage_taken", e.damage_taken},
          {"kills", e.kills},
          {"deaths", e.deaths},
          {"healed", e.healed}};
}


}  // namespace

void ReplayWriter::write(int episode, const Env& env, std::span<const int> red_actions,
                         std::span<const int> blue_actions, const EnvStep& result) {
  const WorldState& w = env.world();
  nlohmann::json j = {
      {"schema", kReplaySchemaVersion},
      {"episode", episode},
      {"seed", env.episode_seed()},
      {"scenario", env.scenario().name},
      {"step", w.step},
      {"time", w.time},
      {"units", units_json(w)},
      {"actions",
       {{"red", std::vector<int>(red_actions.begin(), red_actions.end())},
        {"blue", std::vector<int>(blue_actions.begin(), blue_actions.end())}}},
      {"rewards", {{"red", result.red.reward}, {"blue", result.blue.reward}}},
      {"events", {{"red", events_json(env.last_events().red)},
                  {"blue", events_json(env.last_events().blue)}}},
      {"outcome", to_string(env.outcome())},
  };
  out_ << j.dump() << '\n';
}

std::vector<ReplayStep> read_replay(std::istream& in) {
  std::vector<ReplayStep> steps;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.at("schema").get<int>() != kReplaySchemaVersion) {
        throw Error(ErrorCode::CheckpointFormat, "unsupported replay schema");
      }
      ReplayStep s;
      s.episode = j.at("episode").get<int>();
      s.seed = j.at("seed").get<std::uint64_t>();
      s.scenario = j.at("scenario").get<std::string>();
      s.step = j.at("step").get<int>();
      s.red_actions = j.at("actions").at("red").get<std::vector<int>>();
      s.blue_actions = j.at("actions").at("blue").get<std::vector<int>>();
      s.red_reward = j.at("rewards").at("red").get<double>();
      s.blue_reward = j.at("rewards").at("blue").get<double>();
      s.outcome = outcome_from_string(j.at("outcome").get<std::string>());
      s.world.time = j.at("time").get<double>();
      s.world.step = s.step;
      for (const auto& u : j.at("units")) {
        Unit unit;
        unit.team = u.at("team").get<std::string>() == "red" ? Team::Red : Team::Blue;
        unit.unit_id = u.at("id").get<int>();
        unit.spec_id = u.at("spec").get<int>();
        unit.pos = {u.at("x").get<double>(), u.at("y").get<double>()};
        unit.health = u.at("health").get<double>();
        unit.shield = u.at("shield").get<double>();
        unit.weapon_cooldown = u.at("cooldown").get<double>();
        unit.alive = u.at("alive").get<bool>();
        s.world.team(unit.team).push_back(unit);
      }
      steps.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedMessage,
                  "replay line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return steps;
}

}  // namespace sc2ba
