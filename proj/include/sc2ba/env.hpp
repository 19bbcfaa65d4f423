#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sc2ba/engine.hpp"
#include "sc2ba/scenario.hpp"

namespace sc2ba {

// Discrete action codes shared by every agent.
namespace action {
inline constexpr int kNoOp = 0;
inline constexpr int kStop = 1;
inline constexpr int kNorth = 2;
inline constexpr int kSouth = 3;
inline constexpr int kEast = 4;
inline constexpr int kWest = 5;
inline constexpr int kFirstTarget = 6;
}  // namespace action

struct RewardConfig {
  double kill_bonus = 10;
  double win_bonus = 200;
  double self_damage_weight = 0.5;
  double death_penalty = 10;
  double draw_penalty = 50;
  double loss_penalty = 50;
  double scale_target = 20;

  void validate() const;
  friend bool operator==(const RewardConfig&, const RewardConfig&) = default;
};

struct EnvOptions {
  // Put weapon cooldown on own-team state rows instead of enemy rows.
  bool cooldown_on_allies = false;
};

// Field layout of one team's observation and state vectors.
struct ObsLayout {
  int n_enemies = 0;
  int n_allies = 0;  // team size, self included
  int type_width = 0;
  bool cooldown_on_allies = false;

  int enemy_width() const { return 6 + type_width; }
  int ally_width() const { return 5 + type_width; }
  int own_width() const { return 2 + type_width; }
  int enemies_offset() const { return 4; }
  int allies_offset() const { return 4 + n_enemies * enemy_width(); }
  int own_offset() const { return allies_offset() + (n_allies - 1) * ally_width(); }
  int obs_size() const { return own_offset() + own_width(); }
  int state_enemy_width() const { return 5 + type_width + (cooldown_on_allies ? 0 : 1); }
  int state_ally_width() const { return 4 + type_width + (cooldown_on_allies ? 1 : 0); }
  int state_size() const {
    return n_enemies * state_enemy_width() + n_allies * state_ally_width();
  }
};

// Scenario-level information needed to encode a world for one team.
struct EncodingContext {
  ObsLayout layout;
  std::vector<int> type_index;  // spec_id -> one-hot slot, -1 if absent
  int n_actions = 0;
  double step_dt = 0.5;
  bool has_healer = false;

  static EncodingContext make(const ScenarioSpec& spec, Team team,
                              const EnvOptions& options = {});
};

using Observation = std::vector<double>;
using GlobalState = std::vector<double>;
using ActionMask = std::vector<std::uint8_t>;

// Blue encodings use the point-reflected frame, so both teams see
// themselves advancing east. Slots are ordered by mirror-paired unit_id.
Observation encode_observation(const WorldState& world, int agent, Team team,
                               const EncodingContext& ctx);
GlobalState encode_state(const WorldState& world, Team team, const EncodingContext& ctx);
ActionMask available_actions(const WorldState& world, int agent, Team team,
                             const EncodingContext& ctx);

// Engine command for an action code (directions are in the team's frame).
Command translate_action(const WorldState& world, int agent, Team team, int code);

double reward_scale(const ScenarioSpec& spec, Team team, const RewardConfig& config);
double compute_reward(const StepEvents& events, Outcome outcome, Team team,
                      const RewardConfig& config, const ScenarioSpec& spec);

struct TeamStepResult {
  std::vector<Observation> observations;
  GlobalState state;
  std::vector<ActionMask> masks;
  double reward = 0;
  bool terminated = false;
  Outcome outcome = Outcome::Ongoing;
  TeamEvents info;

  friend bool operator==(const TeamStepResult&, const TeamStepResult&) = default;
};

struct EnvStep {
  TeamStepResult red;
  TeamStepResult blue;
  const TeamStepResult& team(Team t) const { return t == Team::Red ? red : blue; }
};

class Env {
 public:
  explicit Env(ScenarioSpec spec, RewardConfig reward = {}, EnvOptions options = {});

  EnvStep reset(std::uint64_t seed);
  EnvStep step(std::span<const int> red_actions, std::span<const int> blue_actions);

  const ScenarioSpec& scenario() const { return spec_; }
  const RewardConfig& reward_config() const { return reward_; }
  const WorldState& world() const { return world_; }
  const EncodingContext& context(Team t) const { return ctx_[static_cast<int>(t)]; }
  const StepEvents& last_events() const { return last_events_; }

  int n_agents(Team t) const { return spec_.unit_count(t); }
  int n_actions(Team t) const { return context(t).n_actions; }
  int obs_size(Team t) const { return context(t).layout.obs_size(); }
  int state_size(Team t) const { return context(t).layout.state_size(); }
  bool terminated() const { return outcome_ != Outcome::Ongoing; }
  Outcome outcome() const { return outcome_; }
  std::uint64_t episode_seed() const { return seed_; }

  // Replaces the world, e.g. to set up hand-built situations in tests.
  EnvStep set_world(WorldState world);

 private:
  TeamStepResult encode(Team t);
  void check_actions(Team t, std::span<const int> actions) const;

  ScenarioSpec spec_;
  RewardConfig reward_;
  EnvOptions options_;
  EncodingContext ctx_[2];
  WorldState world_;
  Outcome outcome_ = Outcome::Ongoing;
  StepEvents last_events_;
  std::vector<ActionMask> masks_[2];
  std::uint64_t seed_ = 0;
};

// Newline-delimited JSON replay log, one object per env step.
inline constexpr int kReplaySchemaVersion = 1;

struct ReplayStep {
  int episode = 0;
  std::uint64_t seed = 0;
  std::string scenario;
  int step = 0;
  std::vector<int> red_actions;
  std::vector<int> blue_actions;
  double red_reward = 0;
  double blue_reward = 0;
  Outcome outcome = Outcome::Ongoing;
  // Unit positions here are world coordinates (not center-relative); the
  // catalog is unset.
  WorldState world;
};

class ReplayWriter {
 public:
  explicit ReplayWriter(std::ostream& out) : out_(out) {}
  void write(int episode, const Env& env, std::span<const int> red_actions,
             std::span<const int> blue_actions, const EnvStep& result);

 private:
  std::ostream& out_;
};

std::vector<ReplayStep> read_replay(std::istream& in);

}  // namespace sc2ba
