// sc2ba command-line tool: training, evaluation, pools, protocol sessions,
// analysis and scenario listing.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "sc2ba/adversary.hpp"
#include "sc2ba/error.hpp"
#include "sc2ba/metrics.hpp"
#include "sc2ba/proto.hpp"
#include "sc2ba/run_config.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sc2ba;

namespace {

constexpr const char* kVersion = SC2BA_VERSION;
constexpr const char* kDefaultEndpoint = "127.0.0.1:7070";

// Exit codes.
constexpr int kOk = 0;
constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownConfigKey:
    case ErrorCode::ConfigSyntax:
    case ErrorCode::UnknownBaseScenario:
    case ErrorCode::UnknownUnitName:
    case ErrorCode::NonPositiveCount:
    case ErrorCode::ArenaTooSmall:
      return kUsageError;
    default:
      return kRuntimeFailure;
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out << text;
}

// A built-in name or a scenario config file.
ScenarioSpec resolve_scenario(const std::string& what) {
  if (fs::is_regular_file(what)) return parse_scenario_config(read_file(what));
  return builtin_scenario(what);
}

Team parse_team(const std::string& s) { return s == "blue" ? Team::Blue : Team::Red; }

std::pair<std::string, int> parse_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos) {
    throw Error(ErrorCode::ConfigSyntax, "endpoint must be host:port, got '" + endpoint + "'");
  }
  try {
    return {endpoint.substr(0, colon), std::stoi(endpoint.substr(colon + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigSyntax, "bad port in endpoint '" + endpoint + "'");
  }
}

// "bot", "random" or a checkpoint path.
std::unique_ptr<Learner> policy_from(const std::string& what, const ScenarioSpec& spec,
                                     Team team) {
  if (what == "bot" || what == "random") return make_learner(what, spec, team, {});
  return load_learner_file(what, spec, team);
}

std::string hex_u64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

json manifest_json(const std::string& command, const std::vector<std::string>& argv) {
  return json{{"tool", "sc2ba"}, {"version", kVersion}, {"command", command}, {"argv", argv}};
}

// Runs `task(k)` for k in [0, n) on up to `jobs` threads; rethrows the first
// failure.
void parallel_for(int n, int jobs, const std::function<void(int)>& task) {
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const int k = next++;
      if (k >= n) return;
      try {
        task(k);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const int threads = std::max(1, std::min(jobs, n));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// train

struct TrainFlags {
  std::string scenario = "3m";
  std::string mode = "bot";
  std::string algo = "qmix";
  std::string algo_b = "iql";
  std::string pool;
  std::int64_t steps = 300000;
  std::int64_t max_episodes = 0;
  std::int64_t test_interval = 10000;
  int test_episodes = 32;
  int seeds = 5;
  std::uint64_t seed_base = 0;
  std::string out = "runs";
  std::string config;
  int jobs = 1;
  bool quiet = false;
};

void add_train(CLI::App& app, TrainFlags& f, CLI::App*& sub) {
  sub = app.add_subcommand("train", "Train learners and write metrics, checkpoints and a manifest");
  sub->add_option("--scenario", f.scenario, "Built-in scenario name or scenario config file")
      ->capture_default_str();
  sub->add_option("--mode", f.mode, "Training mode")
      ->check(CLI::IsMember({"bot", "paired", "mixed"}))
      ->capture_default_str();
  sub->add_option("--algo", f.algo, "Learner (red side): iql, vdn or qmix")->capture_default_str();
  sub->add_option("--algo-b", f.algo_b, "Paired mode: blue learner")->capture_default_str();
  sub->add_option("--pool", f.pool, "Mixed mode: opponent pool directory (from `sc2ba pool`)")
      ->default_str("none");
  sub->add_option("--steps", f.steps, "Environment steps per run")->capture_default_str();
  sub->add_option("--max-episodes", f.max_episodes, "Episode budget per run (0 = none)")
      ->capture_default_str();
  sub->add_option("--test-interval", f.test_interval, "Environment steps between evaluations")
      ->capture_default_str();
  sub->add_option("--test-episodes", f.test_episodes, "Greedy episodes per evaluation")
      ->capture_default_str();
  sub->add_option("--seeds", f.seeds, "Number of seeded runs")->capture_default_str();
  sub->add_option("--seed-base", f.seed_base, "First seed; runs use seed-base, seed-base+1, ...")
      ->capture_default_str();
  sub->add_option("--out", f.out, "Output directory")->envname("SC2BA_OUT")->capture_default_str();
  sub->add_option("--config", f.config,
                  "Config file ([train] [learner] [reward] [scenario] [red] [blue] [engine]); "
                  "flags override it")
      ->default_str("none");
  sub->add_option("--jobs", f.jobs, "Seeds trained in parallel")->capture_default_str();
  sub->add_flag("--quiet", f.quiet, "No progress output")
      ->default_str("false");
}

bool is_learning_algo(const std::string& a) { return a == "iql" || a == "vdn" || a == "qmix"; }

RunConfig resolve_train(const TrainFlags& f, const CLI::App& sub) {
  RunConfig rc;
  if (!f.config.empty()) apply_config_file(rc, f.config);
  auto given = [&](const char* name) { return sub.count(name) > 0; };
  if (given("--scenario") || f.config.empty()) {
    if (given("--scenario") || rc.scenario.name == "3m") rc.scenario = resolve_scenario(f.scenario);
  }
  if (given("--mode")) rc.train.mode = train_mode_from_name(f.mode);
  if (given("--algo")) rc.algo = f.algo;
  if (given("--algo-b")) rc.algo_b = f.algo_b;
  if (given("--pool")) rc.pool = f.pool;
  if (given("--steps")) rc.train.total_env_steps = f.steps;
  if (given("--max-episodes")) rc.train.max_episodes = f.max_episodes;
  if (given("--test-interval")) rc.train.test_interval = f.test_interval;
  if (given("--test-episodes")) rc.train.test_episodes = f.test_episodes;
  if (given("--seeds")) rc.n_seeds = f.seeds;
  if (given("--seed-base")) rc.seed_base = f.seed_base;
  rc.train.seeds = rc.seeds();
  rc.validate();
  if (!is_learning_algo(rc.algo)) {
    throw Error(ErrorCode::ConfigSyntax, "algo must be iql, vdn or qmix, got '" + rc.algo + "'");
  }
  if (rc.train.mode == TrainMode::Paired && !is_learning_algo(rc.algo_b)) {
    throw Error(ErrorCode::ConfigSyntax,
                "algo_b must be iql, vdn or qmix, got '" + rc.algo_b + "'");
  }
  return rc;
}

struct SeedOutput {
  std::vector<RunMetrics> runs;
  std::vector<std::string> artifacts;
  std::vector<std::string> warnings;
};

std::string save_checkpoint(const fs::path& dir, const Learner& learner, CheckpointManifest m) {
  const std::string stem = m.algorithm + "_" + m.team + "_seed" + std::to_string(m.seed);
  m.checkpoint = stem + ".ckpt";
  if (const auto* q = dynamic_cast<const QLearner*>(&learner)) m.train_steps = q->train_steps();
  save_learner_file(learner, (dir / m.checkpoint).string());
  write_file(dir / (stem + ".json"), manifest_to_json(m) + "\n");
  return m.checkpoint;
}

int cmd_train(const TrainFlags& f, const CLI::App& sub, const std::vector<std::string>& argv) {
  const RunConfig rc = resolve_train(f, sub);
  std::optional<OpponentPool> pool;
  if (rc.train.mode == TrainMode::Mixed) pool = load_pool(rc.pool, rc.scenario);

  const fs::path out(f.out);
  fs::create_directories(out);
  write_file(out / "config.ini", run_config_text(rc));

  const auto seeds = rc.seeds();
  std::vector<SeedOutput> outputs(seeds.size());
  std::mutex log_mu;
  parallel_for(static_cast<int>(seeds.size()), f.jobs, [&](int k) {
    const std::uint64_t seed = seeds[k];
    SeedOutput& o = outputs[k];
    auto progress = [&](const char* who) {
      return [&, who](const EvalPoint& p) {
        if (f.quiet) return;
        std::lock_guard lock(log_mu);
        std::cerr << "seed " << seed << " " << who << " step " << p.env_step << " win_rate "
                  << fixed(p.win_rate()) << "\n";
      };
    };
    QLearnerConfig lc = rc.train.learner;
    lc.seed = stream_seed(seed, Stream::Init);
    CheckpointManifest base;
    base.scenario = rc.scenario.name;
    base.mode = std::string(to_string(rc.train.mode));
    base.seed = seed;

    auto red = make_learner(rc.algo, rc.scenario, Team::Red, lc);
    switch (rc.train.mode) {
      case TrainMode::VsBot: {
        o.runs.push_back(train_vs_bot(*red, rc.scenario, rc.train, seed, Team::Red,
                                      progress(rc.algo.c_str())));
        break;
      }
      case TrainMode::Paired: {
        QLearnerConfig lb = rc.train.learner;
        lb.seed = derive_seed(lc.seed, 1);
        auto blue = make_learner(rc.algo_b, rc.scenario, Team::Blue, lb);
        PairedResult r = train_paired(*red, *blue, rc.scenario, rc.train, seed, progress("paired"));
        o.runs = {r.a, r.b};
        o.warnings = r.warnings;
        CheckpointManifest m = base;
        m.algorithm = rc.algo_b;
        m.team = "blue";
        m.env_steps = r.b.env_steps;
        o.artifacts.push_back(save_checkpoint(out, *blue, m));
        break;
      }
      case TrainMode::Mixed: {
        o.runs.push_back(
            train_mixed(*red, *pool, rc.scenario, rc.train, seed, progress(rc.algo.c_str())));
        break;
      }
    }
    CheckpointManifest m = base;
    m.algorithm = rc.algo;
    m.team = "red";
    m.env_steps = o.runs.front().env_steps;
    o.artifacts.insert(o.artifacts.begin(), save_checkpoint(out, *red, m));

    const std::string csv = "metrics_seed" + std::to_string(seed) + ".csv";
    std::ofstream file(out / csv);
    write_metrics_csv(file, o.runs);
    o.artifacts.insert(o.artifacts.begin(), csv);
  });

  // Aggregate each (subject, opponent) pairing across seeds.
  std::map<std::pair<std::string, std::string>, std::vector<RunMetrics>> groups;
  for (const auto& o : outputs) {
    for (const auto& r : o.runs) groups[{r.algo_red, r.algo_blue}].push_back(r);
  }
  json aggregate = json::array();
  for (const auto& [key, runs] : groups) {
    const auto curve = median_win_rate(runs);
    aggregate.push_back(json::parse(aggregate_json(curve, runs.front())));
    std::cout << key.first << " vs " << key.second << ": final median win rate "
              << fixed(curve.back().median) << " over " << runs.size() << " seeds\n";
  }
  write_file(out / "aggregate.json", aggregate.dump(2) + "\n");

  json manifest = manifest_json("train", argv);
  manifest["config"] = run_config_text(rc);
  manifest["seeds"] = seeds;
  manifest["jobs"] = f.jobs;
  json artifacts = json::array({"config.ini", "aggregate.json"});
  json warnings = json::array();
  for (const auto& o : outputs) {
    for (const auto& a : o.artifacts) artifacts.push_back(a);
    for (const auto& w : o.warnings) {
      if (std::find(warnings.begin(), warnings.end(), w) == warnings.end()) warnings.push_back(w);
    }
  }
  manifest["artifacts"] = artifacts;
  manifest["warnings"] = warnings;
  write_file(out / "manifest.json", manifest.dump(2) + "\n");
  for (const auto& w : warnings) std::cerr << "warning: " << w.get<std::string>() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// eval / pit

struct EvalFlags {
  std::string checkpoint;
  std::string scenario = "3m";
  std::string team = "red";
  int episodes = 32;
  std::uint64_t seed = 0;
};

void print_eval_row(const std::string& opponent, const EvalResult& r, bool as_red) {
  const int wins = as_red ? r.wins : r.losses;
  const int losses = as_red ? r.losses : r.wins;
  const int n = r.wins + r.draws + r.losses;
  std::cout << std::left << std::setw(10) << opponent << " wins " << wins << " draws " << r.draws
            << " losses " << losses << " win_rate " << fixed(static_cast<double>(wins) / n)
            << " mean_return " << fixed(as_red ? r.mean_return_red : r.mean_return_blue) << "\n";
}

int cmd_eval(const EvalFlags& f) {
  const ScenarioSpec spec = resolve_scenario(f.scenario);
  const Team team = parse_team(f.team);
  const Team other = team == Team::Red ? Team::Blue : Team::Red;
  const auto subject = policy_from(f.checkpoint, spec, team);
  std::cout << "checkpoint " << f.checkpoint << " (" << subject->algorithm() << ") as "
            << to_string(team) << " on " << spec.name << ", " << f.episodes << " episodes\n";
  for (const char* opponent : {"bot", "random"}) {
    const auto opp = policy_from(opponent, spec, other);
    const EvalResult r = team == Team::Red ? evaluate(spec, *subject, *opp, f.episodes, f.seed)
                                           : evaluate(spec, *opp, *subject, f.episodes, f.seed);
    print_eval_row(opponent, r, team == Team::Red);
  }
  return kOk;
}

struct PitFlags {
  std::string red;
  std::string blue;
  std::string scenario = "3m";
  int episodes = 32;
  std::uint64_t seed = 0;
  std::string replay_out;
  std::string config;
};

int cmd_pit(const PitFlags& f) {
  const ScenarioSpec spec = resolve_scenario(f.scenario);
  RunConfig rc;
  if (!f.config.empty()) apply_config_file(rc, f.config);
  const auto red = policy_from(f.red, spec, Team::Red);
  const auto blue = policy_from(f.blue, spec, Team::Blue);
  std::ofstream replay_file;
  std::optional<ReplayWriter> replay;
  if (!f.replay_out.empty()) {
    replay_file.open(f.replay_out);
    if (!replay_file) throw Error(ErrorCode::Io, "cannot write '" + f.replay_out + "'");
    replay.emplace(replay_file);
  }
  const EvalResult r = evaluate(spec, *red, *blue, f.episodes, f.seed, rc.train.reward,
                                replay ? &*replay : nullptr);
  std::cout << "scenario " << spec.name << " episodes " << f.episodes << " seed " << f.seed << "\n"
            << "red  " << f.red << " (" << red->algorithm() << ")\n"
            << "blue " << f.blue << " (" << blue->algorithm() << ")\n"
            << "red_wins " << r.wins << " draws " << r.draws << " blue_wins " << r.losses << "\n"
            << "mean_return_red " << fixed(r.mean_return_red) << " mean_return_blue "
            << fixed(r.mean_return_blue) << " mean_length " << fixed(r.mean_length, 2) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// pool

struct PoolFlags {
  std::string scenario = "3m";
  std::string out = "pool";
  std::vector<std::string> members;
  std::int64_t steps = 150000;
  bool no_bot = false;
  std::string config;
};

PoolRecipe parse_recipe(const PoolFlags& f) {
  PoolRecipe recipe;
  recipe.include_bot = !f.no_bot;
  if (f.members.empty()) {
    recipe = PoolRecipe::defaults();
    for (auto& m : recipe.members) m.env_steps = f.steps;
    recipe.include_bot = !f.no_bot;
    return recipe;
  }
  for (const std::string& item : f.members) {
    // algo[:seed]
    PoolRecipeEntry e;
    const auto colon = item.find(':');
    e.algorithm = item.substr(0, colon);
    if (!is_learning_algo(e.algorithm)) {
      throw Error(ErrorCode::ConfigSyntax, "pool member must be iql, vdn or qmix: '" + item + "'");
    }
    if (colon != std::string::npos) {
      try {
        e.seed = std::stoull(item.substr(colon + 1));
      } catch (const std::exception&) {
        throw Error(ErrorCode::ConfigSyntax, "bad seed in pool member '" + item + "'");
      }
    }
    e.env_steps = f.steps;
    recipe.members.push_back(e);
  }
  return recipe;
}

int cmd_pool(const PoolFlags& f, const std::vector<std::string>& argv) {
  const ScenarioSpec spec = resolve_scenario(f.scenario);
  RunConfig rc;
  if (!f.config.empty()) apply_config_file(rc, f.config);
  const PoolRecipe recipe = parse_recipe(f);
  const OpponentPool pool = build_opponent_pool(
      spec, recipe, rc.train, [](const std::string& line) { std::cerr << line << "\n"; });
  save_pool(f.out, pool, spec);
  json manifest = manifest_json("pool", argv);
  manifest["scenario"] = serialize_scenario_config(spec);
  manifest["config"] = run_config_text(rc);
  json members = json::array();
  for (const auto& m : pool.members) members.push_back(m.name);
  manifest["members"] = members;
  write_file(fs::path(f.out) / "manifest.json", manifest.dump(2) + "\n");
  for (const auto& m : pool.members) {
    std::cout << m.name << " " << hex_u64(m.learner->checkpoint_hash()) << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// serve / client

Server* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

struct ServeFlags {
  std::string scenario = "3m";
  std::string endpoint = kDefaultEndpoint;
  int episodes = 0;
  std::uint64_t seed = 0;
  int act_timeout_ms = 0;
  std::string bot = "none";
  std::string transcript;
  std::string replay_out;
  std::string config;
};

int cmd_serve(const ServeFlags& f) {
  const ScenarioSpec spec = resolve_scenario(f.scenario);
  RunConfig rc;
  if (!f.config.empty()) apply_config_file(rc, f.config);
  const auto [host, port] = parse_endpoint(f.endpoint);
  ServeOptions o;
  o.host = host;
  o.port = port;
  o.seed = f.seed;
  o.episodes = f.episodes;
  o.act_timeout_ms = f.act_timeout_ms;
  o.reward = rc.train.reward;
  if (f.bot != "none") o.internal_bot = parse_team(f.bot);
  std::ofstream transcript, replay_file;
  std::optional<ReplayWriter> replay;
  if (!f.transcript.empty()) {
    transcript.open(f.transcript);
    o.transcript = &transcript;
  }
  if (!f.replay_out.empty()) {
    replay_file.open(f.replay_out);
    replay.emplace(replay_file);
    o.replay = &*replay;
  }
  Server server(spec, o);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "listening on " << host << ":" << server.port() << std::endl;
  const SessionReport report = server.run();
  g_server = nullptr;
  int red = 0, blue = 0, draws = 0;
  for (const auto& e : report.episodes) {
    double rr = 0, rb = 0;
    for (double v : e.red_rewards) rr += v;
    for (double v : e.blue_rewards) rb += v;
    std::cout << "episode " << e.episode << " seed " << e.seed << " outcome " << to_string(e.outcome)
              << (e.forfeited ? " (forfeit)" : "") << " steps " << e.red_rewards.size()
              << " return_red " << fixed(rr) << " return_blue " << fixed(rb) << "\n";
    red += e.outcome == Outcome::RedWin;
    blue += e.outcome == Outcome::BlueWin;
    draws += e.outcome == Outcome::Draw;
  }
  std::cout << "episodes " << report.episodes.size() << " red_wins " << red << " draws " << draws
            << " blue_wins " << blue << " errors " << report.errors.size() << "\n";
  return kOk;
}

struct ClientFlags {
  std::string endpoint = kDefaultEndpoint;
  std::string team = "any";
  std::string policy = "bot";
  double epsilon = 0;
  std::uint64_t seed = 0;
  std::string name = "sc2ba-client";
};

int cmd_client(const ClientFlags& f) {
  const auto [host, port] = parse_endpoint(f.endpoint);
  ClientOptions o;
  o.host = host;
  o.port = port;
  if (f.team != "any") o.team = parse_team(f.team);
  o.name = f.name;
  o.epsilon = f.epsilon;
  o.seed = f.seed;
  Team assigned = Team::Red;
  const auto episodes = client_loop(
      [&](const Assignment& a) {
        assigned = a.team;
        return policy_from(f.policy, a.scenario, a.team);
      },
      o);
  const Outcome win = assigned == Team::Red ? Outcome::RedWin : Outcome::BlueWin;
  int wins = 0, draws = 0, losses = 0;
  for (const auto& e : episodes) {
    double ret = 0;
    for (double v : e.rewards) ret += v;
    const bool won = e.outcome == win;
    const bool drew = e.outcome == Outcome::Draw;
    wins += won;
    draws += drew;
    losses += !won && !drew;
    std::cout << "episode " << e.episode << " " << (won ? "win" : drew ? "draw" : "loss")
              << " return " << fixed(ret) << "\n";
  }
  std::cout << "team " << to_string(assigned) << " wins " << wins << " draws " << draws
            << " losses " << losses << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeFlags {
  std::string metrics_dir;
  std::vector<std::string> replays;
  double bandwidth = 0;
  std::string team = "red";
  std::string scenario;
  std::string out = "analysis";
};

bool is_metrics_csv(const fs::path& p) {
  if (p.extension() != ".csv") return false;
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  return header.rfind("env_step,", 0) == 0;
}

std::vector<fs::path> collect(const fs::path& root, const std::function<bool(const fs::path&)>& ok) {
  std::vector<fs::path> files;
  if (fs::is_regular_file(root)) {
    if (ok(root)) files.push_back(root);
  } else if (fs::is_directory(root)) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file() && ok(e.path())) files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

int cmd_analyze(const AnalyzeFlags& f) {
  std::vector<fs::path> metrics_files, replay_files;
  if (!f.metrics_dir.empty()) metrics_files = collect(f.metrics_dir, is_metrics_csv);
  for (const auto& r : f.replays) {
    for (auto& p : collect(r, [](const fs::path& p) { return p.extension() == ".jsonl"; })) {
      replay_files.push_back(p);
    }
  }
  if (metrics_files.empty() && replay_files.empty()) {
    throw Error(ErrorCode::NoInputFiles, "no metrics CSV or replay JSONL files found");
  }
  const fs::path out(f.out);
  fs::create_directories(out);

  if (!metrics_files.empty()) {
    std::vector<RunMetrics> runs;
    for (const auto& p : metrics_files) {
      std::ifstream in(p);
      for (auto& r : read_metrics_csv(in)) runs.push_back(std::move(r));
    }
    const RunSummary summary = aggregate_runs(runs);
    std::ofstream pairings(out / "pairings.csv"), scores(out / "scores.csv"),
        plot(out / "plot.csv");
    write_pairings_csv(pairings, summary);
    write_scores_csv(scores, summary);
    write_plot_data(plot, summary);
    write_file(out / "summary.json", summary_json(summary) + "\n");
    std::cout << "metrics files " << metrics_files.size() << " runs " << runs.size()
              << " pairings " << summary.pairings.size() << "\n";
    for (const auto& s : summary.scores) {
      std::cout << s.scenario << " " << s.algorithm << " average_median "
                << fixed(s.average_median) << " opponents " << s.opponents << "\n";
    }
  }

  const Team team = parse_team(f.team);
  for (const auto& p : replay_files) {
    std::ifstream in(p);
    const auto steps = read_replay(in);
    if (steps.empty()) throw Error(ErrorCode::NoInputFiles, "replay '" + p.string() + "' is empty");
    const ScenarioSpec spec =
        f.scenario.empty() ? builtin_scenario(steps.front().scenario) : resolve_scenario(f.scenario);
    const int n_actions = Env(spec).context(team).n_actions;
    const DiversityReport report =
        action_diversity(joint_actions_from_replay(steps, team, n_actions), f.bandwidth);
    std::ofstream file(out / ("diversity_" + p.stem().string() + ".json"));
    write_diversity_report(file, report);
    std::cout << p.string() << " steps " << steps.size() << " clusters " << report.cluster_count
              << " explained " << fixed(report.explained_ratio[0]) << " "
              << fixed(report.explained_ratio[1]) << " bandwidth " << fixed(report.bandwidth)
              << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// scenarios / replay / bench

std::string composition_text(const ScenarioSpec& spec, Team t) {
  std::ostringstream s;
  bool first = true;
  for (const auto& g : spec.composition(t)) {
    s << (first ? "" : "+") << g.count << " " << builtin_spec(g.spec_id).name;
    first = false;
  }
  return s.str();
}

int cmd_scenarios(const std::string& show) {
  if (!show.empty()) {
    std::cout << serialize_scenario_config(resolve_scenario(show));
    return kOk;
  }
  std::cout << std::left << std::setw(12) << "name" << std::setw(34) << "red" << std::setw(34)
            << "blue" << std::setw(6) << "limit" << std::setw(5) << "obs" << std::setw(6) << "state"
            << "actions\n";
  for (const ScenarioSpec& spec : builtin_scenarios()) {
    const Env env(spec);
    const EncodingContext& ctx = env.context(Team::Red);
    std::cout << std::left << std::setw(12) << spec.name << std::setw(34)
              << composition_text(spec, Team::Red) << std::setw(34)
              << composition_text(spec, Team::Blue) << std::setw(6) << spec.episode_step_limit
              << std::setw(5) << ctx.layout.obs_size() << std::setw(6) << ctx.layout.state_size()
              << ctx.n_actions << "\n";
  }
  return kOk;
}

struct ReplayFlags {
  std::string file;
  std::string scenario;
  bool verify = false;
};

int cmd_replay(const ReplayFlags& f) {
  std::ifstream in(f.file);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + f.file + "'");
  const auto steps = read_replay(in);
  if (steps.empty()) throw Error(ErrorCode::NoInputFiles, "replay '" + f.file + "' is empty");
  std::map<int, std::tuple<std::uint64_t, int, Outcome, double, double>> episodes;
  for (const auto& s : steps) {
    auto& [seed, n, outcome, rr, rb] = episodes[s.episode];
    seed = s.seed;
    ++n;
    outcome = s.outcome;
    rr += s.red_reward;
    rb += s.blue_reward;
  }
  for (const auto& [k, e] : episodes) {
    const auto& [seed, n, outcome, rr, rb] = e;
    std::cout << "episode " << k << " seed " << seed << " steps " << n << " outcome "
              << to_string(outcome) << " return_red " << fixed(rr) << " return_blue " << fixed(rb)
              << "\n";
  }
  if (!f.verify) return kOk;
  const ScenarioSpec spec =
      f.scenario.empty() ? builtin_scenario(steps.front().scenario) : resolve_scenario(f.scenario);
  const ReplayCheck check = verify_replay(steps, spec);
  for (const auto& m : check.mismatches) std::cout << "mismatch " << m << "\n";
  std::cout << "verified episodes " << check.episodes << " steps " << check.steps << " mismatches "
            << check.mismatches.size() << "\n";
  return check.mismatches.empty() ? kOk : kRuntimeFailure;
}

struct BenchFlags {
  std::string scenario = "3m";
  std::int64_t steps = 200000;
  std::uint64_t seed = 0;
  double min_rate = 0;
};

int cmd_bench(const BenchFlags& f) {
  const ScenarioSpec spec = resolve_scenario(f.scenario);
  const Throughput t = measure_throughput(spec, f.steps, f.seed);
  std::cout << "scenario " << spec.name << " env_steps " << t.env_steps << " episodes "
            << t.episodes << " seconds " << fixed(t.seconds) << " steps_per_second "
            << fixed(t.steps_per_second(), 0) << "\n";
  if (t.steps_per_second() < f.min_rate) {
    std::cerr << "error: throughput below " << f.min_rate << " steps/s\n";
    return kRuntimeFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-team micro-combat environment and self-play benchmark", "sc2ba"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.get_formatter()->column_width(34);

  TrainFlags train;
  CLI::App* train_cmd = nullptr;
  add_train(app, train, train_cmd);

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint against the bot and random");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint path, bot or random")
      ->required();
  eval_cmd->add_option("--scenario", eval.scenario, "Built-in scenario name or config file")
      ->capture_default_str();
  eval_cmd->add_option("--team", eval.team, "Side the checkpoint plays")
      ->check(CLI::IsMember({"red", "blue"}))
      ->capture_default_str();
  eval_cmd->add_option("--episodes", eval.episodes, "Greedy episodes per opponent")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  eval_cmd->add_option("--seed", eval.seed, "Evaluation seed")->capture_default_str();

  PitFlags pit;
  auto* pit_cmd = app.add_subcommand("pit", "Play two policies against each other");
  pit_cmd->add_option("--red", pit.red, "Red checkpoint path, bot or random")->required();
  pit_cmd->add_option("--blue", pit.blue, "Blue checkpoint path, bot or random")->required();
  pit_cmd->add_option("--scenario", pit.scenario, "Built-in scenario name or config file")
      ->capture_default_str();
  pit_cmd->add_option("--episodes", pit.episodes, "Greedy episodes")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  pit_cmd->add_option("--seed", pit.seed, "Evaluation seed")->capture_default_str();
  pit_cmd->add_option("--replay-out", pit.replay_out, "Write a JSONL replay of every step")
      ->default_str("none");
  pit_cmd->add_option("--config", pit.config, "Config file (reward section is used)")
      ->default_str("none");

  PoolFlags pool;
  auto* pool_cmd = app.add_subcommand("pool", "Train and freeze an opponent pool against the bot");
  pool_cmd->add_option("--scenario", pool.scenario, "Built-in scenario name or config file")
      ->capture_default_str();
  pool_cmd->add_option("--out", pool.out, "Pool directory")->capture_default_str();
  pool_cmd->add_option("--member", pool.members,
                       "Member as algo[:seed], repeatable (default: iql:0 vdn:1 qmix:2)")
      ->default_str("none");
  pool_cmd->add_option("--steps", pool.steps, "Environment steps per member")
      ->capture_default_str();
  pool_cmd->add_flag("--no-bot", pool.no_bot, "Leave the scripted bot out of the pool")
      ->default_str("false");
  pool_cmd->add_option("--config", pool.config, "Config file ([train] [learner] [reward])")
      ->default_str("none");

  ServeFlags serve;
  auto* serve_cmd = app.add_subcommand("serve", "Host a lockstep protocol session");
  serve_cmd->add_option("--scenario", serve.scenario, "Built-in scenario name or config file")
      ->capture_default_str();
  serve_cmd->add_option("--endpoint", serve.endpoint, "Listen address host:port (port 0 = any)")
      ->envname("SC2BA_ENDPOINT")
      ->capture_default_str();
  serve_cmd->add_option("--episodes", serve.episodes, "Episodes to play (0 = until a client leaves)")
      ->capture_default_str();
  serve_cmd->add_option("--seed", serve.seed, "Session seed")->capture_default_str();
  serve_cmd->add_option("--act-timeout-ms", serve.act_timeout_ms,
                        "Per-step act deadline; a late team forfeits (0 = none)")
      ->capture_default_str();
  serve_cmd->add_option("--bot", serve.bot, "Fill a slot with the scripted bot")
      ->check(CLI::IsMember({"none", "red", "blue"}))
      ->capture_default_str();
  serve_cmd->add_option("--transcript", serve.transcript, "Write every message to this file")
      ->default_str("none");
  serve_cmd->add_option("--replay-out", serve.replay_out, "Write a JSONL replay of every step")
      ->default_str("none");
  serve_cmd->add_option("--config", serve.config, "Config file (reward section is used)")
      ->default_str("none");

  ClientFlags client;
  auto* client_cmd = app.add_subcommand("client", "Connect to a session and play a policy");
  client_cmd->add_option("--endpoint", client.endpoint, "Server address host:port")
      ->envname("SC2BA_ENDPOINT")
      ->capture_default_str();
  client_cmd->add_option("--team", client.team, "Requested team")
      ->check(CLI::IsMember({"any", "red", "blue"}))
      ->capture_default_str();
  client_cmd->add_option("--policy", client.policy, "Checkpoint path, bot or random")
      ->capture_default_str();
  client_cmd->add_option("--epsilon", client.epsilon, "Exploration rate")->capture_default_str();
  client_cmd->add_option("--seed", client.seed, "Action seed")->capture_default_str();
  client_cmd->add_option("--name", client.name, "Client name sent in hello")->capture_default_str();

  AnalyzeFlags analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Summarize metrics and measure action diversity");
  analyze_cmd->add_option("--metrics-dir", analyze.metrics_dir, "Directory of metrics CSV files")
      ->default_str("none");
  analyze_cmd->add_option("--replays", analyze.replays, "Replay JSONL files or directories")
      ->default_str("none");
  analyze_cmd->add_option("--diversity-bandwidth", analyze.bandwidth,
                          "Mean-shift bandwidth (0 = automatic)")
      ->capture_default_str();
  analyze_cmd->add_option("--team", analyze.team, "Team whose joint actions are analysed")
      ->check(CLI::IsMember({"red", "blue"}))
      ->capture_default_str();
  analyze_cmd->add_option("--scenario", analyze.scenario,
                          "Scenario for replays (default: named in the replay)")
      ->default_str("none");
  analyze_cmd->add_option("--out", analyze.out, "Output directory")->capture_default_str();

  std::string show;
  auto* scenarios_cmd = app.add_subcommand("scenarios", "List built-in scenarios");
  scenarios_cmd->add_option("--show", show, "Print the full config of one scenario")
      ->default_str("none");

  ReplayFlags replay;
  auto* replay_cmd = app.add_subcommand("replay", "Summarize or verify a replay log");
  replay_cmd->add_option("file", replay.file, "Replay JSONL file")->required();
  replay_cmd->add_option("--scenario", replay.scenario,
                         "Scenario for verification (default: named in the replay)")
      ->default_str("none");
  replay_cmd->add_flag("--verify", replay.verify, "Re-simulate and compare every step")
      ->default_str("false");

  BenchFlags bench;
  auto* bench_cmd = app.add_subcommand("bench", "Measure env steps per second with random policies");
  bench_cmd->add_option("--scenario", bench.scenario, "Built-in scenario name or config file")
      ->capture_default_str();
  bench_cmd->add_option("--steps", bench.steps, "Environment steps to run")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed, "Seed")->capture_default_str();
  bench_cmd->add_option("--min-rate", bench.min_rate, "Exit 1 below this many steps per second")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  const std::vector<std::string> args(argv, argv + argc);
  try {
    if (*train_cmd) return cmd_train(train, *train_cmd, args);
    if (*eval_cmd) return cmd_eval(eval);
    if (*pit_cmd) return cmd_pit(pit);
    if (*pool_cmd) return cmd_pool(pool, args);
    if (*serve_cmd) return cmd_serve(serve);
    if (*client_cmd) return cmd_client(client);
    if (*analyze_cmd) return cmd_analyze(analyze);
    if (*scenarios_cmd) return cmd_scenarios(show);
    if (*replay_cmd) return cmd_replay(replay);
    if (*bench_cmd) return cmd_bench(bench);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kUsageError;
}
