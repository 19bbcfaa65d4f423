#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sc2ba/adversary.hpp"
#include "sc2ba/scenario.hpp"

namespace sc2ba {

// Everything a training run depends on. Built from defaults, then a config
// file, then command-line flags; the resolved value is written back out as a
// config file so a run can be repeated from its own output directory.
struct RunConfig {
  ScenarioSpec scenario = builtin_scenario("3m");
  std::string algo = "qmix";
  std::string algo_b = "iql";  // paired mode: the blue learner
  std::string pool;            // mixed mode: pool directory
  std::uint64_t seed_base = 0;
  int n_seeds = 5;
  TrainConfig train;

  // seed_base, seed_base + 1, ...
  std::vector<std::uint64_t> seeds() const;
  // Throws ConfigSyntax naming the offending key.
  void validate() const;
};

// Sections: [train], [learner], [reward] and the scenario sections
// ([scenario], [red], [blue], [engine]). Scenario sections, when present,
// replace the scenario. Unknown sections or keys throw UnknownConfigKey.
void apply_config(RunConfig& config, const ConfigDocument& doc);
void apply_config_text(RunConfig& config, std::string_view text);
void apply_config_file(RunConfig& config, const std::string& path);

// Full resolved configuration in the same format; apply_config on defaults
// reproduces `config` exactly.
std::string run_config_text(const RunConfig& config);

// Key = value text of a learner configuration ([learner] body) and reward
// configuration ([reward] body).
std::string learner_config_text(const QLearnerConfig& c);
std::string reward_config_text(const RewardConfig& c);

}  // namespace sc2ba
