#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "sc2ba/env.hpp"
#include "sc2ba/learners.hpp"

namespace sc2ba {

enum class TrainMode { VsBot, Paired, Mixed };
std::string_view to_string(TrainMode m);
TrainMode train_mode_from_name(std::string_view name);  // "bot", "paired", "mixed"

struct TrainConfig {
  TrainMode mode = TrainMode::VsBot;
  // Environment steps (engine steps, not agent steps) collected for training.
  std::int64_t total_env_steps = 300000;
  // Optional episode budget on top of the step budget; 0 = none.
  std::int64_t max_episodes = 0;
  std::int64_t test_interval = 10000;
  int test_episodes = 32;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  QLearnerConfig learner;
  RewardConfig reward;
  double epsilon_start = 1.0;
  double epsilon_finish = 0.05;
  std::int64_t epsilon_anneal_steps = 50000;

  void validate() const;
  // Linear anneal by environment steps consumed so far.
  double epsilon_at(std::int64_t env_step) const;
};

// Counts are from the subject learner's point of view; "red" fields refer to
// the subject's side, "blue" to its opponent's.
struct EvalPoint {
  std::int64_t env_step = 0;
  int wins = 0;
  int draws = 0;
  int losses = 0;
  double mean_return_red = 0;
  double mean_return_blue = 0;

  int episodes() const { return wins + draws + losses; }
  double win_rate() const { return episodes() ? static_cast<double>(wins) / episodes() : 0.0; }
  friend bool operator==(const EvalPoint&, const EvalPoint&) = default;
};

struct RunMetrics {
  std::uint64_t seed = 0;
  std::string mode;
  std::string scenario;
  std::string algo_red;   // the subject
  std::string algo_blue;  // its opponent (or "pool")
  int test_episodes = 32;
  std::vector<EvalPoint> points;
  std::int64_t env_steps = 0;
  std::int64_t episodes = 0;
  // Mixed mode: how often each pool member was drawn.
  std::vector<std::string> opponent_names;
  std::vector<std::int64_t> opponent_draws;

  friend bool operator==(const RunMetrics&, const RunMetrics&) = default;
};

using ProgressFn = std::function<void(const EvalPoint&)>;

struct EpisodeOptions {
  double epsilon_red = 0;
  double epsilon_blue = 0;
  bool record = true;
  // Stop after this many steps (without terminating); negative = no cap.
  std::int64_t step_cap = -1;
  ReplayWriter* replay = nullptr;
  int episode_index = 0;
};

struct EpisodeResult {
  Outcome outcome = Outcome::Ongoing;  // Ongoing iff truncated by step_cap
  int length = 0;
  double return_red = 0;
  double return_blue = 0;
  TeamEpisode red;
  TeamEpisode blue;
};

// Lockstep loop: reset with `episode_seed`, then both teams act on their own
// view each step (red draws from `rng` first, then blue).
EpisodeResult run_episode(Env& env, const Learner& red, const Learner& blue,
                          std::uint64_t episode_seed, Rng& rng, const EpisodeOptions& options = {});

struct EvalResult {
  int wins = 0;  // red wins
  int draws = 0;
  int losses = 0;
  double mean_return_red = 0;
  double mean_return_blue = 0;
  double mean_length = 0;
  friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

// Greedy episodes. Episode k resets with derive_seed(seed, 2k) and draws
// actions from derive_seed(seed, 2k + 1), so results do not depend on order.
EvalResult evaluate(const ScenarioSpec& spec, const Learner& red, const Learner& blue,
                    int n_episodes, std::uint64_t seed, const RewardConfig& reward = {},
                    ReplayWriter* replay = nullptr);

// Learners by name: iql, vdn, qmix, bot, random.
std::unique_ptr<Learner> make_learner(const std::string& algorithm, const ScenarioSpec& spec,
                                      Team team, QLearnerConfig config);

// Built-in-bot mode: `learner` (on `side`) trains against the scripted bot.
RunMetrics train_vs_bot(Learner& learner, const ScenarioSpec& spec, const TrainConfig& config,
                        std::uint64_t seed, Team side = Team::Red,
                        const ProgressFn& progress = {});

struct PairedResult {
  RunMetrics a;  // red learner
  RunMetrics b;  // blue learner
  std::vector<std::string> warnings;
};

// Dual-algorithm adversary: `a` controls red and `b` blue; both collect from
// every episode and take one train step each per episode.
PairedResult train_paired(Learner& a, Learner& b, const ScenarioSpec& spec,
                          const TrainConfig& config, std::uint64_t seed,
                          const ProgressFn& progress = {});

struct CheckpointManifest {
  std::string algorithm;
  std::string scenario;
  std::string mode;
  std::string team = "red";
  std::uint64_t seed = 0;
  std::int64_t env_steps = 0;
  std::int64_t train_steps = 0;
  std::string checkpoint;  // file name, if saved

  friend bool operator==(const CheckpointManifest&, const CheckpointManifest&) = default;
};
std::string manifest_to_json(const CheckpointManifest& m);
CheckpointManifest manifest_from_json(const std::string& text);

struct PoolMember {
  std::string name;
  std::shared_ptr<const Learner> learner;
  CheckpointManifest manifest;
};

struct OpponentPool {
  std::vector<PoolMember> members;
  // Empty = uniform.
  std::vector<double> weights;

  // Throws MutablePoolMember if empty or any member is not frozen.
  void validate() const;
};

// Multi-algorithm adversary: each episode the blue controller is drawn from
// the pool with a dedicated RNG stream; `learner` controls red and trains.
RunMetrics train_mixed(Learner& learner, const OpponentPool& pool, const ScenarioSpec& spec,
                       const TrainConfig& config, std::uint64_t seed,
                       const ProgressFn& progress = {});

struct PoolRecipeEntry {
  std::string algorithm;
  std::int64_t env_steps = 150000;
  std::uint64_t seed = 0;
};

struct PoolRecipe {
  std::vector<PoolRecipeEntry> members;
  bool include_bot = true;
  static PoolRecipe defaults();  // iql, vdn, qmix at 150k steps, plus the bot
};

// Trains every recipe member against the bot on the blue side, freezes it
// and adds the bot itself. Throws EmptyRecipe.
OpponentPool build_opponent_pool(const ScenarioSpec& spec, const PoolRecipe& recipe,
                                 const TrainConfig& base,
                                 const std::function<void(const std::string&)>& log = {});

// Pool directory: pool.json plus one checkpoint per member. Loaded members
// are frozen and play blue.
void save_pool(const std::string& dir, const OpponentPool& pool, const ScenarioSpec& spec);
OpponentPool load_pool(const std::string& dir, const ScenarioSpec& spec);

struct AggregatePoint {
  std::int64_t env_step = 0;
  double median = 0;
  double mean = 0;
  double q1 = 0;
  double q3 = 0;
  int runs = 0;
};

// Per evaluation point across runs: median (midpoint of the two central
// values for even counts), mean and linearly interpolated quartiles.
// Throws MisalignedRuns when the runs' evaluation steps differ.
std::vector<AggregatePoint> median_win_rate(const std::vector<RunMetrics>& runs);

double quantile(std::vector<double> values, double q);

// Metrics CSV with columns env_step, wins, draws, losses, win_rate,
// mean_return_red, mean_return_blue, seed, mode, scenario, algo_red, algo_blue.
void write_metrics_csv(std::ostream& out, const std::vector<RunMetrics>& runs);
std::vector<RunMetrics> read_metrics_csv(std::istream& in);
std::string aggregate_json(const std::vector<AggregatePoint>& curve, const RunMetrics& like);

struct Throughput {
  std::int64_t env_steps = 0;
  std::int64_t episodes = 0;
  double seconds = 0;
  double steps_per_second() const { return seconds > 0 ? env_steps / seconds : 0.0; }
};

// Uniform-random policies on both teams for at least `env_steps` steps;
// wall-clock time covers reset, masks, sampling and step.
Throughput measure_throughput(const ScenarioSpec& spec, std::int64_t env_steps,
                              std::uint64_t seed);

struct ReplayCheck {
  int episodes = 0;
  int steps = 0;
  // Human-readable description of each disagreement.
  std::vector<std::string> mismatches;
};

// Re-simulates every episode of a replay from its seed and recorded actions
// and compares rewards, outcomes and unit states.
ReplayCheck verify_replay(const std::vector<ReplayStep>& steps, const ScenarioSpec& spec,
                          const RewardConfig& reward = {});

}  // namespace sc2ba
