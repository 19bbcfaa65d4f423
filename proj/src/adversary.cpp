#include "sc2ba/adversary.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "sc2ba/error.hpp"

namespace sc2ba {

namespace {

using json = nlohmann::json;

void count_outcome(Outcome o, Team subject, int& wins, int& draws, int& losses) {
  if (o == Outcome::Draw) {
    ++draws;
  } else if ((o == Outcome::RedWin) == (subject == Team::Red)) {
    ++wins;
  } else {
    ++losses;
  }
}

}  // namespace

std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::VsBot: return "bot";
    case TrainMode::Paired: return "paired";
    case TrainMode::Mixed: return "mixed";
  }
  return "?";
}

TrainMode train_mode_from_name(std::string_view name) {
  if (name == "bot") return TrainMode::VsBot;
  if (name == "paired") return TrainMode::Paired;
  if (name == "mixed") return TrainMode::Mixed;
  throw Error(ErrorCode::UnknownConfigKey, "unknown mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::ConfigSyntax, what); };
  if (total_env_steps <= 0) bad("total_env_steps must be positive");
  if (max_episodes < 0) bad("max_episodes must be non-negative");
  if (test_interval <= 0) bad("test_interval must be positive");
  if (test_episodes < 1) bad("test_episodes must be at least 1");
  if (seeds.empty()) bad("at least one seed is required");
  if (!(epsilon_start >= 0 && epsilon_start <= 1 && epsilon_finish >= 0 && epsilon_finish <= 1)) {
    bad("epsilon must lie in [0, 1]");
  }
  if (epsilon_anneal_steps < 0) bad("epsilon_anneal_steps must be non-negative");
  if (learner.batch_size < 1 || learner.buffer_capacity < 1) bad("batch and buffer must be >= 1");
  if (!(learner.gamma >= 0 && learner.gamma <= 1)) bad("gamma must lie in [0, 1]");
  if (!(learner.learning_rate > 0)) bad("learning_rate must be positive");
  if (learner.mixer_layers != 1 && learner.mixer_layers != 2) bad("mixer_layers must be 1 or 2");
  for (int h : learner.hidden) {
    if (h < 1) bad("hidden widths must be positive");
  }
  reward.validate();
}

double TrainConfig::epsilon_at(std::int64_t env_step) const {
  if (epsilon_anneal_steps == 0 || env_step >= epsilon_anneal_steps) return epsilon_finish;
  const double f = static_cast<double>(env_step) / static_cast<double>(epsilon_anneal_steps);
  return epsilon_start + (epsilon_finish - epsilon_start) * f;
}

// ---------------------------------------------------------------------------
// Episodes and evaluation

EpisodeResult run_episode(Env& env, const Learner& red, const Learner& blue,
                          std::uint64_t episode_seed, Rng& rng, const EpisodeOptions& options) {
  EpisodeResult result;
  EnvStep step = env.reset(episode_seed);
  if (options.record) {
    result.red = TeamEpisode(env.n_agents(Team::Red), env.obs_size(Team::Red),
                             env.state_size(Team::Red), env.n_actions(Team::Red));
    result.blue = TeamEpisode(env.n_agents(Team::Blue), env.obs_size(Team::Blue),
                              env.state_size(Team::Blue), env.n_actions(Team::Blue));
    result.red.push_observation(step.red);
    result.blue.push_observation(step.blue);
  }
  std::vector<int> last_red(env.n_agents(Team::Red), -1);
  std::vector<int> last_blue(env.n_agents(Team::Blue), -1);
  while (!env.terminated()) {
    if (options.step_cap >= 0 && result.length >= options.step_cap) break;
    const std::vector<int> a_red = red.act(step.red, last_red, options.epsilon_red, rng);
    const std::vector<int> a_blue = blue.act(step.blue, last_blue, options.epsilon_blue, rng);
    step = env.step(a_red, a_blue);
    if (options.replay) options.replay->write(options.episode_index, env, a_red, a_blue, step);
    ++result.length;
    result.return_red += step.red.reward;
    result.return_blue += step.blue.reward;
    if (options.record) {
      result.red.push_transition(a_red, step.red.reward);
      result.blue.push_transition(a_blue, step.blue.reward);
      result.red.push_observation(step.red);
      result.blue.push_observation(step.blue);
    }
    last_red = a_red;
    last_blue = a_blue;
  }
  result.outcome = env.outcome();
  result.red.terminated = result.blue.terminated = env.terminated();
  return result;
}

namespace {

// Episode k plays red against blue_for(k).
EvalResult evaluate_with(const ScenarioSpec& spec, const Learner& red,
                         const std::function<const Learner&(int)>& blue_for, int n_episodes,
                         std::uint64_t seed, const RewardConfig& reward, ReplayWriter* replay) {
  if (n_episodes < 1) throw Error(ErrorCode::ConfigSyntax, "n_episodes must be at least 1");
  Env env(spec, reward);
  EvalResult r;
  double length = 0;
  for (int k = 0; k < n_episodes; ++k) {
    Rng rng(derive_seed(seed, 2 * static_cast<std::uint64_t>(k) + 1));
    EpisodeOptions opts;
    opts.record = false;
    opts.replay = replay;
    opts.episode_index = k;
    const EpisodeResult e = run_episode(env, red, blue_for(k),
                                        derive_seed(seed, 2 * static_cast<std::uint64_t>(k)), rng,
                                        opts);
    count_outcome(e.outcome, Team::Red, r.wins, r.draws, r.losses);
    r.mean_return_red += e.return_red;
    r.mean_return_blue += e.return_blue;
    length += e.length;
  }
  r.mean_return_red /= n_episodes;
  r.mean_return_blue /= n_episodes;
  r.mean_length = length / n_episodes;
  return r;
}

}  // namespace

EvalResult evaluate(const ScenarioSpec& spec, const Learner& red, const Learner& blue,
                    int n_episodes, std::uint64_t seed, const RewardConfig& reward,
                    ReplayWriter* replay) {
  return evaluate_with(
      spec, red, [&](int) -> const Learner& { return blue; }, n_episodes, seed, reward, replay);
}

std::unique_ptr<Learner> make_learner(const std::string& algorithm, const ScenarioSpec& spec,
                                      Team team, QLearnerConfig config) {
  if (algorithm == "bot") return std::make_unique<ScriptedBot>(spec, team);
  if (algorithm == "random") return std::make_unique<RandomLearner>();
  Mixing mixing;
  try {
    mixing = mixing_from_name(algorithm);
  } catch (const Error&) {
    throw Error(ErrorCode::UnknownConfigKey, "unknown algorithm '" + algorithm + "'");
  }
  const EncodingContext ctx = EncodingContext::make(spec, team);
  return std::make_unique<QLearner>(mixing, spec.name, spec.unit_count(team),
                                    ctx.layout.obs_size(), ctx.layout.state_size(),
                                    ctx.n_actions, std::move(config));
}

// ---------------------------------------------------------------------------
// Training driver shared by the three modes

namespace {

struct Subject {
  Learner* learner;
  Team side;
};

// Chooses the opponent for the next episode; returns the pool index drawn.
using OpponentPicker = std::function<const Learner&(Rng&, int&)>;
// Greedy evaluation at point `index`, from the subject's point of view.
using Evaluator = std::function<EvalPoint(std::uint64_t eval_seed)>;

EvalPoint to_point(const EvalResult& e, Team subject) {
  EvalPoint p;
  if (subject == Team::Red) {
    p.wins = e.wins;
    p.losses = e.losses;
    p.mean_return_red = e.mean_return_red;
    p.mean_return_blue = e.mean_return_blue;
  } else {
    p.wins = e.losses;
    p.losses = e.wins;
    p.mean_return_red = e.mean_return_blue;
    p.mean_return_blue = e.mean_return_red;
  }
  p.draws = e.draws;
  return p;
}

struct DriverOutput {
  std::vector<EvalPoint> points;
  std::int64_t env_steps = 0;
  std::int64_t episodes = 0;
  std::vector<std::int64_t> draws;
};

DriverOutput drive(const ScenarioSpec& spec, const TrainConfig& config, std::uint64_t seed,
                   Subject subject, Learner* co_learner, const OpponentPicker& pick,
                   std::size_t pool_size, const Evaluator& eval, const ProgressFn& progress) {
  config.validate();
  if (!subject.learner->trainable()) {
    throw Error(ErrorCode::MutablePoolMember, "the training subject is frozen");
  }
  Env env(spec, config.reward);
  Rng actions(stream_seed(seed, Stream::Actions));
  Rng opponents(stream_seed(seed, Stream::Opponents));
  Rng replay(stream_seed(seed, Stream::Replay));
  Rng co_replay(derive_seed(stream_seed(seed, Stream::Replay), 1));
  const std::uint64_t episode_base = stream_seed(seed, Stream::Episodes);
  const std::uint64_t eval_base = stream_seed(seed, Stream::Evaluation);

  DriverOutput out;
  out.draws.assign(pool_size, 0);
  std::int64_t next_eval = 0;
  // Points are stamped with the grid step they stand for so that runs with
  // different episode lengths line up.
  auto evaluate_now = [&](std::int64_t stamp) {
    EvalPoint p = eval(derive_seed(eval_base, out.points.size()));
    p.env_step = stamp;
    out.points.push_back(p);
    if (progress) progress(p);
  };

  while (out.env_steps < config.total_env_steps &&
         (config.max_episodes == 0 || out.episodes < config.max_episodes)) {
    while (next_eval <= out.env_steps) {
      evaluate_now(next_eval);
      next_eval += config.test_interval;
    }
    int member = 0;
    const Learner& opponent = pick(opponents, member);
    if (pool_size > 0) ++out.draws[member];
    const double eps = config.epsilon_at(out.env_steps);
    const bool red_subject = subject.side == Team::Red;
    EpisodeOptions opts;
    opts.epsilon_red = red_subject ? eps : (co_learner ? eps : 0.0);
    opts.epsilon_blue = red_subject ? (co_learner ? eps : 0.0) : eps;
    opts.step_cap = config.total_env_steps - out.env_steps;
    const Learner& red = red_subject ? *subject.learner : opponent;
    const Learner& blue = red_subject ? opponent : *subject.learner;
    EpisodeResult e = run_episode(env, red, blue,
                                  derive_seed(episode_base, static_cast<std::uint64_t>(out.episodes)),
                                  actions, opts);
    out.env_steps += e.length;
    ++out.episodes;

    TeamEpisode& mine = red_subject ? e.red : e.blue;
    TeamEpisode& theirs = red_subject ? e.blue : e.red;
    subject.learner->observe(mine);
    if (subject.learner->ready_to_train()) subject.learner->train_step(replay);
    if (co_learner) {
      co_learner->observe(theirs);
      if (co_learner->ready_to_train()) co_learner->train_step(co_replay);
    }
  }
  if (out.points.empty() || out.points.back().env_step != out.env_steps) {
    evaluate_now(out.env_steps);
  }
  return out;
}

RunMetrics make_metrics(const ScenarioSpec& spec, const TrainConfig& config, std::uint64_t seed,
                        std::string algo_red, std::string algo_blue, DriverOutput out) {
  RunMetrics m;
  m.seed = seed;
  m.mode = std::string(to_string(config.mode));
  m.scenario = spec.name;
  m.algo_red = std::move(algo_red);
  m.algo_blue = std::move(algo_blue);
  m.test_episodes = config.test_episodes;
  m.points = std::move(out.points);
  m.env_steps = out.env_steps;
  m.episodes = out.episodes;
  return m;
}

}  // namespace

RunMetrics train_vs_bot(Learner& learner, const ScenarioSpec& spec, const TrainConfig& config,
                        std::uint64_t seed, Team side, const ProgressFn& progress) {
  const ScriptedBot bot(spec, opponent(side));
  const OpponentPicker pick = [&](Rng&, int&) -> const Learner& { return bot; };
  const Evaluator eval = [&](std::uint64_t s) {
    const EvalResult r = side == Team::Red
                             ? evaluate(spec, learner, bot, config.test_episodes, s, config.reward)
                             : evaluate(spec, bot, learner, config.test_episodes, s, config.reward);
    return to_point(r, side);
  };
  TrainConfig c = config;
  c.mode = TrainMode::VsBot;
  DriverOutput out = drive(spec, c, seed, {&learner, side}, nullptr, pick, 0, eval, progress);
  return make_metrics(spec, c, seed, learner.algorithm(), "bot", std::move(out));
}

PairedResult train_paired(Learner& a, Learner& b, const ScenarioSpec& spec,
                          const TrainConfig& config, std::uint64_t seed,
                          const ProgressFn& progress) {
  PairedResult result;
  if (!spec.symmetric()) {
    result.warnings.push_back("AsymmetricScenarioWarning: '" + spec.name +
                              "' gives the two teams different units");
  }
  if (!b.trainable()) throw Error(ErrorCode::MutablePoolMember, "paired learner B is frozen");
  const OpponentPicker pick = [&](Rng&, int&) -> const Learner& { return b; };
  const Evaluator eval = [&](std::uint64_t s) {
    return to_point(evaluate(spec, a, b, config.test_episodes, s, config.reward), Team::Red);
  };
  TrainConfig c = config;
  c.mode = TrainMode::Paired;
  DriverOutput out = drive(spec, c, seed, {&a, Team::Red}, &b, pick, 0, eval, progress);

  result.b = make_metrics(spec, c, seed, b.algorithm(), a.algorithm(), out);
  for (EvalPoint& p : result.b.points) {
    std::swap(p.wins, p.losses);
    std::swap(p.mean_return_red, p.mean_return_blue);
  }
  result.a = make_metrics(spec, c, seed, a.algorithm(), b.algorithm(), std::move(out));
  return result;
}

void OpponentPool::validate() const {
  if (members.empty()) throw Error(ErrorCode::MutablePoolMember, "opponent pool is empty");
  for (const auto& m : members) {
    if (!m.learner || !m.learner->frozen()) {
      throw Error(ErrorCode::MutablePoolMember, "pool member '" + m.name + "' is not frozen");
    }
  }
  if (!weights.empty() && weights.size() != members.size()) {
    throw Error(ErrorCode::ShapeMismatch, "pool weights do not match the member count");
  }
}

RunMetrics train_mixed(Learner& learner, const OpponentPool& pool, const ScenarioSpec& spec,
                       const TrainConfig& config, std::uint64_t seed,
                       const ProgressFn& progress) {
  pool.validate();
  std::vector<std::uint64_t> hashes;
  for (const auto& m : pool.members) hashes.push_back(m.learner->checkpoint_hash());

  const std::size_t n = pool.members.size();
  const OpponentPicker pick = [&](Rng& rng, int& member) -> const Learner& {
    if (n == 1) {
      member = 0;
    } else if (pool.weights.empty()) {
      member = std::uniform_int_distribution<int>(0, static_cast<int>(n) - 1)(rng);
    } else {
      member = std::discrete_distribution<int>(pool.weights.begin(), pool.weights.end())(rng);
    }
    return *pool.members[member].learner;
  };
  // Test episodes cycle through the pool members.
  const Evaluator eval = [&](std::uint64_t s) {
    return to_point(evaluate_with(
                        spec, learner,
                        [&](int k) -> const Learner& { return *pool.members[k % n].learner; },
                        config.test_episodes, s, config.reward, nullptr),
                    Team::Red);
  };
  TrainConfig c = config;
  c.mode = TrainMode::Mixed;
  DriverOutput out = drive(spec, c, seed, {&learner, Team::Red}, nullptr, pick, n, eval, progress);

  for (std::size_t i = 0; i < n; ++i) {
    if (pool.members[i].learner->checkpoint_hash() != hashes[i]) {
      throw Error(ErrorCode::MutablePoolMember,
                  "pool member '" + pool.members[i].name + "' changed during the run");
    }
  }
  std::vector<std::int64_t> draws = out.draws;
  RunMetrics m = make_metrics(spec, c, seed, learner.algorithm(), "pool", std::move(out));
  m.opponent_draws = std::move(draws);
  for (const auto& member : pool.members) m.opponent_names.push_back(member.name);
  return m;
}

// ---------------------------------------------------------------------------
// Pools and manifests

std::string manifest_to_json(const CheckpointManifest& m) {
  const json j = {{"algorithm", m.algorithm}, {"scenario", m.scenario},
                  {"mode", m.mode},           {"team", m.team},
                  {"seed", m.seed},           {"env_steps", m.env_steps},
                  {"train_steps", m.train_steps}, {"checkpoint", m.checkpoint}};
  return j.dump(2);
}

CheckpointManifest manifest_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    CheckpointManifest m;
    m.algorithm = j.at("algorithm").get<std::string>();
    m.scenario = j.at("scenario").get<std::string>();
    m.mode = j.at("mode").get<std::string>();
    m.team = j.value("team", "red");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.env_steps = j.at("env_steps").get<std::int64_t>();
    m.train_steps = j.value("train_steps", std::int64_t{0});
    m.checkpoint = j.value("checkpoint", "");
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CheckpointFormat, std::string("manifest: ") + e.what());
  }
}

PoolRecipe PoolRecipe::defaults() {
  PoolRecipe r;
  std::uint64_t seed = 0;
  for (const char* algo : {"iql", "vdn", "qmix"}) r.members.push_back({algo, 150000, seed++});
  r.include_bot = true;
  return r;
}

OpponentPool build_opponent_pool(const ScenarioSpec& spec, const PoolRecipe& recipe,
                                 const TrainConfig& base,
                                 const std::function<void(const std::string&)>& log) {
  if (recipe.members.empty()) throw Error(ErrorCode::EmptyRecipe, "the pool recipe trains nothing");
  OpponentPool pool;
  for (const PoolRecipeEntry& entry : recipe.members) {
    TrainConfig c = base;
    c.total_env_steps = entry.env_steps;
    c.test_interval = std::max<std::int64_t>(1, entry.env_steps);
    QLearnerConfig lc = c.learner;
    lc.seed = stream_seed(entry.seed, Stream::Init);
    std::unique_ptr<Learner> learner = make_learner(entry.algorithm, spec, Team::Blue, lc);
    if (log) log("training pool member " + entry.algorithm + " seed " + std::to_string(entry.seed));
    const RunMetrics m = train_vs_bot(*learner, spec, c, entry.seed, Team::Blue);
    learner->freeze();
    PoolMember member;
    member.name = entry.algorithm + "-s" + std::to_string(entry.seed);
    member.manifest.algorithm = entry.algorithm;
    member.manifest.scenario = spec.name;
    member.manifest.mode = "bot";
    member.manifest.team = "blue";
    member.manifest.seed = entry.seed;
    member.manifest.env_steps = m.env_steps;
    if (const auto* q = dynamic_cast<const QLearner*>(learner.get())) {
      member.manifest.train_steps = q->train_steps();
    }
    member.learner = std::shared_ptr<const Learner>(std::move(learner));
    pool.members.push_back(std::move(member));
  }
  if (recipe.include_bot) {
    auto bot = std::make_unique<ScriptedBot>(spec, Team::Blue);
    bot->freeze();
    PoolMember member;
    member.name = "bot";
    member.manifest.algorithm = "bot";
    member.manifest.scenario = spec.name;
    member.manifest.mode = "builtin";
    member.manifest.team = "blue";
    member.learner = std::move(bot);
    pool.members.push_back(std::move(member));
  }
  return pool;
}

void save_pool(const std::string& dir, const OpponentPool& pool, const ScenarioSpec& spec) {
  pool.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json members = nlohmann::json::array();
  for (std::size_t i = 0; i < pool.members.size(); ++i) {
    const PoolMember& m = pool.members[i];
    CheckpointManifest manifest = m.manifest;
    manifest.checkpoint = m.name + ".ckpt";
    save_learner_file(*m.learner, (std::filesystem::path(dir) / manifest.checkpoint).string());
    nlohmann::json entry = {{"name", m.name},
                            {"manifest", nlohmann::json::parse(manifest_to_json(manifest))}};
    if (!pool.weights.empty()) entry["weight"] = pool.weights[i];
    members.push_back(std::move(entry));
  }
  const nlohmann::json doc = {{"scenario", spec.name}, {"members", members}};
  std::ofstream out(std::filesystem::path(dir) / "pool.json");
  if (!out) throw Error(ErrorCode::Io, "cannot write pool.json in '" + dir + "'");
  out << doc.dump(2) << '\n';
}

OpponentPool load_pool(const std::string& dir, const ScenarioSpec& spec) {
  const auto index = std::filesystem::path(dir) / "pool.json";
  std::ifstream in(index);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + index.string() + "'");
  OpponentPool pool;
  try {
    const nlohmann::json doc = nlohmann::json::parse(in);
    bool weighted = false;
    for (const auto& entry : doc.at("members")) weighted = weighted || entry.contains("weight");
    for (const auto& entry : doc.at("members")) {
      PoolMember m;
      m.name = entry.at("name").get<std::string>();
      m.manifest = manifest_from_json(entry.at("manifest").dump());
      auto learner = load_learner_file(
          (std::filesystem::path(dir) / m.manifest.checkpoint).string(), spec, Team::Blue);
      learner->freeze();
      m.learner = std::move(learner);
      pool.members.push_back(std::move(m));
      if (weighted) pool.weights.push_back(entry.value("weight", 1.0));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CheckpointFormat, "bad pool.json: " + std::string(e.what()));
  }
  pool.validate();
  return pool;
}

// ---------------------------------------------------------------------------
// Aggregation and files

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::MisalignedRuns, "no values to aggregate");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return values[lo] + (values[hi] - values[lo]) * (pos - static_cast<double>(lo));
}

std::vector<AggregatePoint> median_win_rate(const std::vector<RunMetrics>& runs) {
  if (runs.empty()) throw Error(ErrorCode::MisalignedRuns, "no runs to aggregate");
  const auto& grid = runs.front().points;
  for (const RunMetrics& r : runs) {
    bool same = r.points.size() == grid.size();
    for (std::size_t i = 0; same && i < grid.size(); ++i) {
      same = r.points[i].env_step == grid[i].env_step;
    }
    if (!same) {
      throw Error(ErrorCode::MisalignedRuns,
                  "seed " + std::to_string(r.seed) + " has a different evaluation grid");
    }
  }
  std::vector<AggregatePoint> curve;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::vector<double> rates;
    for (const RunMetrics& r : runs) rates.push_back(r.points[i].win_rate());
    AggregatePoint p;
    p.env_step = grid[i].env_step;
    p.runs = static_cast<int>(rates.size());
    p.median = quantile(rates, 0.5);
    p.q1 = quantile(rates, 0.25);
    p.q3 = quantile(rates, 0.75);
    double sum = 0;
    for (double v : rates) sum += v;
    p.mean = sum / static_cast<double>(rates.size());
    curve.push_back(p);
  }
  return curve;
}

namespace {

const char* const kCsvHeader =
    "env_step,wins,draws,losses,win_rate,mean_return_red,mean_return_blue,seed,mode,scenario,"
    "algo_red,algo_blue";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream s(line);
  while (std::getline(s, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <class T>
T parse_field(const std::string& text, const std::string& what, int line) {
  std::istringstream s(text);
  T v{};
  if (!(s >> v) || !(s >> std::ws).eof()) {
    throw Error(ErrorCode::ConfigSyntax,
                "metrics line " + std::to_string(line) + ": bad " + what + " '" + text + "'");
  }
  return v;
}

}  // namespace

void write_metrics_csv(std::ostream& out, const std::vector<RunMetrics>& runs) {
  out << kCsvHeader << '\n';
  for (const RunMetrics& r : runs) {
    for (const EvalPoint& p : r.points) {
      out << p.env_step << ',' << p.wins << ',' << p.draws << ',' << p.losses << ','
          << format_double(p.win_rate()) << ',' << format_double(p.mean_return_red) << ','
          << format_double(p.mean_return_blue) << ',' << r.seed << ',' << r.mode << ','
          << r.scenario << ',' << r.algo_red << ',' << r.algo_blue << '\n';
    }
  }
}

std::vector<RunMetrics> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw Error(ErrorCode::ConfigSyntax, "metrics file does not start with the expected header");
  }
  std::vector<RunMetrics> runs;
  std::map<std::string, std::size_t> index;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 12) {
      throw Error(ErrorCode::ConfigSyntax,
                  "metrics line " + std::to_string(number) + ": expected 12 columns");
    }
    EvalPoint p;
    p.env_step = parse_field<std::int64_t>(f[0], "env_step", number);
    p.wins = parse_field<int>(f[1], "wins", number);
    p.draws = parse_field<int>(f[2], "draws", number);
    p.losses = parse_field<int>(f[3], "losses", number);
    p.mean_return_red = parse_field<double>(f[5], "mean_return_red", number);
    p.mean_return_blue = parse_field<double>(f[6], "mean_return_blue", number);
    const std::string key = f[7] + '\x1f' + f[8] + '\x1f' + f[9] + '\x1f' + f[10] + '\x1f' + f[11];
    auto it = index.find(key);
    if (it == index.end()) {
      RunMetrics r;
      r.seed = parse_field<std::uint64_t>(f[7], "seed", number);
      r.mode = f[8];
      r.scenario = f[9];
      r.algo_red = f[10];
      r.algo_blue = f[11];
      r.test_episodes = p.episodes();
      it = index.emplace(key, runs.size()).first;
      runs.push_back(std::move(r));
    }
    RunMetrics& r = runs[it->second];
    r.points.push_back(p);
    r.env_steps = p.env_step;
  }
  return runs;
}

std::string aggregate_json(const std::vector<AggregatePoint>& curve, const RunMetrics& like) {
  json points = json::array();
  for (const AggregatePoint& p : curve) {
    points.push_back({{"env_step", p.env_step},
                      {"median", p.median},
                      {"mean", p.mean},
                      {"q1", p.q1},
                      {"q3", p.q3},
                      {"runs", p.runs}});
  }
  const json j = {{"scenario", like.scenario},   {"mode", like.mode},
                  {"algo_red", like.algo_red},   {"algo_blue", like.algo_blue},
                  {"test_episodes", like.test_episodes}, {"curve", points}};
  return j.dump(2);
}

Throughput measure_throughput(const ScenarioSpec& spec, std::int64_t env_steps,
                              std::uint64_t seed) {
  Env env(spec);
  RandomLearner random;
  Rng rng(stream_seed(seed, Stream::Actions));
  Throughput t;
  const auto start = std::chrono::steady_clock::now();
  while (t.env_steps < env_steps) {
    EnvStep s = env.reset(derive_seed(stream_seed(seed, Stream::Episodes),
                                      static_cast<std::uint64_t>(t.episodes)));
    while (!s.red.terminated) {
      const auto a = random.act(s.red, {}, 0, rng);
      const auto b = random.act(s.blue, {}, 0, rng);
      s = env.step(a, b);
      ++t.env_steps;
    }
    ++t.episodes;
  }
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return t;
}

ReplayCheck verify_replay(const std::vector<ReplayStep>& steps, const ScenarioSpec& spec,
                          const RewardConfig& reward) {
  ReplayCheck check;
  Env env(spec, reward);
  int current = -1;
  bool live = false;
  auto fail = [&](const ReplayStep& r, const std::string& what) {
    check.mismatches.push_back("episode " + std::to_string(r.episode) + " step " +
                               std::to_string(r.step) + ": " + what);
  };
  for (const ReplayStep& r : steps) {
    if (r.episode != current) {
      current = r.episode;
      ++check.episodes;
      if (r.step != 1) {
        fail(r, "episode does not start at step 1");
        live = false;
        continue;
      }
      env.reset(r.seed);
      live = true;
    }
    if (!live) continue;
    ++check.steps;
    EnvStep s;
    try {
      s = env.step(r.red_actions, r.blue_actions);
    } catch (const Error& e) {
      fail(r, e.what());
      live = false;
      continue;
    }
    if (env.world().step != r.step) fail(r, "step counter differs");
    if (s.red.reward != r.red_reward || s.blue.reward != r.blue_reward) fail(r, "rewards differ");
    if (env.outcome() != r.outcome) fail(r, "outcome differs");
    const WorldState& w = env.world();
    for (Team t : {Team::Red, Team::Blue}) {
      const auto& mine = w.team(t);
      const auto& theirs = r.world.team(t);
      if (mine.size() != theirs.size()) {
        fail(r, "unit count differs");
        continue;
      }
      for (std::size_t i = 0; i < mine.size(); ++i) {
        const Vec2 p = w.world_position(mine[i]);
        if (p.x != theirs[i].pos.x || p.y != theirs[i].pos.y ||
            mine[i].health != theirs[i].health || mine[i].shield != theirs[i].shield ||
            mine[i].alive != theirs[i].alive) {
          fail(r, std::string(to_string(t)) + " unit " + std::to_string(i) + " differs");
        }
      }
    }
  }
  return check;
}

}  // namespace sc2ba
