#include "sc2ba/run_config.hpp"

#include <fstream>
#include <sstream>

#include "sc2ba/error.hpp"

namespace sc2ba {

namespace {

using Entry = ConfigDocument::Entry;
using namespace config;

std::vector<int> parse_int_list(const Entry& e) {
  std::vector<int> out;
  std::stringstream ss(e.value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    Entry sub = e;
    const auto first = item.find_first_not_of(' ');
    const auto last = item.find_last_not_of(' ');
    sub.value = first == std::string::npos ? "" : item.substr(first, last - first + 1);
    const long long v = parse_int(sub);
    if (v <= 0) bad_value(e, "a comma-separated list of positive integers");
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) bad_value(e, "a comma-separated list of positive integers");
  return out;
}

long long parse_nonneg(const Entry& e) {
  const long long v = parse_int(e);
  if (v < 0) bad_value(e, "a non-negative integer");
  return v;
}

long long parse_positive(const Entry& e) {
  const long long v = parse_int(e);
  if (v <= 0) bad_value(e, "a positive integer");
  return v;
}

void apply_train(RunConfig& c, const std::vector<Entry>& entries) {
  TrainConfig& t = c.train;
  for (const Entry& e : entries) {
    if (e.key == "mode") {
      try {
        t.mode = train_mode_from_name(e.value);
      } catch (const Error&) {
        bad_value(e, "bot, paired or mixed");
      }
    } else if (e.key == "algo") {
      c.algo = e.value;
    } else if (e.key == "algo_b") {
      c.algo_b = e.value;
    } else if (e.key == "pool") {
      c.pool = e.value;
    } else if (e.key == "steps") {
      t.total_env_steps = parse_positive(e);
    } else if (e.key == "max_episodes") {
      t.max_episodes = parse_nonneg(e);
    } else if (e.key == "test_interval") {
      t.test_interval = parse_positive(e);
    } else if (e.key == "test_episodes") {
      t.test_episodes = static_cast<int>(parse_positive(e));
    } else if (e.key == "seeds") {
      c.n_seeds = static_cast<int>(parse_positive(e));
    } else if (e.key == "seed_base") {
      c.seed_base = static_cast<std::uint64_t>(parse_nonneg(e));
    } else if (e.key == "epsilon_start") {
      t.epsilon_start = parse_double(e);
    } else if (e.key == "epsilon_finish") {
      t.epsilon_finish = parse_double(e);
    } else if (e.key == "epsilon_anneal_steps") {
      t.epsilon_anneal_steps = parse_nonneg(e);
    } else {
      unknown_key("train", e);
    }
  }
}

void apply_learner(QLearnerConfig& l, const std::vector<Entry>& entries) {
  for (const Entry& e : entries) {
    if (e.key == "hidden") {
      l.hidden = parse_int_list(e);
    } else if (e.key == "gamma") {
      l.gamma = parse_double(e);
    } else if (e.key == "learning_rate") {
      l.learning_rate = parse_double(e);
    } else if (e.key == "batch_size") {
      l.batch_size = static_cast<int>(parse_positive(e));
    } else if (e.key == "buffer_capacity") {
      l.buffer_capacity = static_cast<int>(parse_positive(e));
    } else if (e.key == "target_interval") {
      l.target_interval = static_cast<int>(parse_positive(e));
    } else if (e.key == "grad_clip") {
      l.grad_clip = parse_double(e);
    } else if (e.key == "double_q") {
      l.double_q = parse_bool(e);
    } else if (e.key == "mixer_embed") {
      l.mixer_embed = static_cast<int>(parse_positive(e));
    } else if (e.key == "mixer_layers") {
      const long long v = parse_int(e);
      if (v != 1 && v != 2) bad_value(e, "1 or 2");
      l.mixer_layers = static_cast<int>(v);
    } else if (e.key == "train_mixer") {
      l.train_mixer = parse_bool(e);
    } else {
      unknown_key("learner", e);
    }
  }
}

void apply_reward(RewardConfig& r, const std::vector<Entry>& entries) {
  for (const Entry& e : entries) {
    double* field = nullptr;
    if (e.key == "kill_bonus") field = &r.kill_bonus;
    if (e.key == "win_bonus") field = &r.win_bonus;
    if (e.key == "self_damage_weight") field = &r.self_damage_weight;
    if (e.key == "death_penalty") field = &r.death_penalty;
    if (e.key == "draw_penalty") field = &r.draw_penalty;
    if (e.key == "loss_penalty") field = &r.loss_penalty;
    if (e.key == "scale_target") field = &r.scale_target;
    if (!field) unknown_key("reward", e);
    *field = parse_double(e);
    if (*field < 0) bad_value(e, "a non-negative number");
  }
}

}  // namespace

std::vector<std::uint64_t> RunConfig::seeds() const {
  std::vector<std::uint64_t> out;
  for (int k = 0; k < n_seeds; ++k) out.push_back(seed_base + static_cast<std::uint64_t>(k));
  return out;
}

void RunConfig::validate() const {
  TrainConfig t = train;
  t.seeds = seeds();
  t.validate();
  if (n_seeds < 1) throw Error(ErrorCode::ConfigSyntax, "seeds must be at least 1");
  if (train.mode == TrainMode::Mixed && pool.empty()) {
    throw Error(ErrorCode::ConfigSyntax, "pool is required for mode mixed");
  }
  if (train.mode == TrainMode::Paired && algo_b.empty()) {
    throw Error(ErrorCode::ConfigSyntax, "algo_b is required for mode paired");
  }
}

void apply_config(RunConfig& config, const ConfigDocument& doc) {
  bool has_scenario = false;
  for (const auto& [name, entries] : doc.sections) {
    if (name == "train") {
      apply_train(config, entries);
    } else if (name == "learner") {
      apply_learner(config.train.learner, entries);
    } else if (name == "reward") {
      apply_reward(config.train.reward, entries);
    } else if (name == "scenario" || name == "red" || name == "blue" || name == "engine") {
      has_scenario = true;
    } else {
      throw Error(ErrorCode::UnknownConfigKey, "unknown section [" + name + "]");
    }
  }
  if (has_scenario) config.scenario = scenario_from_document(doc, {"train", "learner", "reward"});
}

void apply_config_text(RunConfig& config, std::string_view text) {
  apply_config(config, parse_config_document(text));
}

void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  apply_config_text(config, text.str());
}

std::string learner_config_text(const QLearnerConfig& c) {
  std::ostringstream out;
  out << "hidden = ";
  for (std::size_t i = 0; i < c.hidden.size(); ++i) out << (i ? "," : "") << c.hidden[i];
  out << "\ngamma = " << format_double(c.gamma) << "\n"
      << "learning_rate = " << format_double(c.learning_rate) << "\n"
      << "batch_size = " << c.batch_size << "\n"
      << "buffer_capacity = " << c.buffer_capacity << "\n"
      << "target_interval = " << c.target_interval << "\n"
      << "grad_clip = " << format_double(c.grad_clip) << "\n"
      << "double_q = " << (c.double_q ? "true" : "false") << "\n"
      << "mixer_embed = " << c.mixer_embed << "\n"
      << "mixer_layers = " << c.mixer_layers << "\n"
      << "train_mixer = " << (c.train_mixer ? "true" : "false") << "\n";
  return out.str();
}

std::string reward_config_text(const RewardConfig& c) {
  std::ostringstream out;
  out << "kill_bonus = " << format_double(c.kill_bonus) << "\n"
      << "win_bonus = " << format_double(c.win_bonus) << "\n"
      << "self_damage_weight = " << format_double(c.self_damage_weight) << "\n"
      << "death_penalty = " << format_double(c.death_penalty) << "\n"
      << "draw_penalty = " << format_double(c.draw_penalty) << "\n"
      << "loss_penalty = " << format_double(c.loss_penalty) << "\n"
      << "scale_target = " << format_double(c.scale_target) << "\n";
  return out.str();
}

std::string run_config_text(const RunConfig& config) {
  const TrainConfig& t = config.train;
  std::ostringstream out;
  out << "[train]\n"
      << "mode = " << to_string(t.mode) << "\n"
      << "algo = " << config.algo << "\n"
      << "algo_b = " << config.algo_b << "\n";
  if (!config.pool.empty()) out << "pool = " << config.pool << "\n";
  out << "steps = " << t.total_env_steps << "\n"
      << "max_episodes = " << t.max_episodes << "\n"
      << "test_interval = " << t.test_interval << "\n"
      << "test_episodes = " << t.test_episodes << "\n"
      << "seeds = " << config.n_seeds << "\n"
      << "seed_base = " << config.seed_base << "\n"
      << "epsilon_start = " << format_double(t.epsilon_start) << "\n"
      << "epsilon_finish = " << format_double(t.epsilon_finish) << "\n"
      << "epsilon_anneal_steps = " << t.epsilon_anneal_steps << "\n"
      << "\n[learner]\n"
      << learner_config_text(t.learner) << "\n[reward]\n"
      << reward_config_text(t.reward) << "\n"
      << serialize_scenario_config(config.scenario);
  return out.str();
}

}  // namespace sc2ba
