// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero
// if any criterion fails.
//
//   acceptance [--cli PATH] [--report FILE] [N ...]    run criteria N (default: all)

#include <boost/math/special_functions/gamma.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sc2ba/adversary.hpp"
#include "sc2ba/error.hpp"
#include "sc2ba/metrics.hpp"
#include "sc2ba/proto.hpp"

using namespace sc2ba;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string cli_path;

std::string num(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// 1. Combat model

Verdict combat_model() {
  // Attack damage column of the unit table: base, and bonus against one
  // armor class.
  struct Weapon {
    int spec;
    double base;
    std::optional<ArmorClass> bonus_vs;
    double bonus_damage;
  };
  const Weapon weapons[] = {
      {kMarine, 6, std::nullopt, 0},         {kMarauder, 10, ArmorClass::Armored, 20},
      {kZealot, 16, std::nullopt, 0},        {kStalker, 13, ArmorClass::Armored, 18},
      {kColossus, 20, ArmorClass::Light, 30},
  };
  const std::map<int, ArmorClass> armor = {
      {kMarine, ArmorClass::Light},     {kMarauder, ArmorClass::Armored},
      {kMedivac, ArmorClass::Armored},  {kZealot, ArmorClass::Light},
      {kStalker, ArmorClass::Armored},  {kColossus, ArmorClass::Armored},
  };
  int checked = 0;
  for (const Weapon& w : weapons) {
    for (const auto& [target, cls] : armor) {
      const double expected = w.bonus_vs && *w.bonus_vs == cls ? w.bonus_damage : w.base;
      const double got = compute_damage(builtin_spec(w.spec), builtin_spec(target));
      if (got != expected) {
        return {false, builtin_spec(w.spec).name + " vs " + builtin_spec(target).name + " = " +
                           num(got) + ", expected " + num(expected)};
      }
      ++checked;
    }
  }

  struct Hit {
    double health, shield, damage, health_after, shield_after;
    bool alive_after;
  };
  const Hit hits[] = {
      {100, 50, 6, 100, 44, true},  // shield absorbs
      {80, 10, 18, 72, 0, true},    // overflow into health
      {80, 18, 18, 80, 0, true},    // exactly the shield
      {45, 0, 6, 39, 0, true},      // no shield
      {5, 0, 6, 0, 0, false},       // clamp at zero, dies
      {10, 5, 30, 0, 0, false},     // overkill through shield
  };
  for (const Hit& h : hits) {
    Unit u;
    u.health = h.health;
    u.shield = h.shield;
    const Unit after = apply_damage(u, h.damage, 1.0);
    if (after.health != h.health_after || after.shield != h.shield_after ||
        after.alive != h.alive_after) {
      return {false, "apply_damage(" + num(h.health) + "/" + num(h.shield) + ", " +
                         num(h.damage) + ") gave " + num(after.health) + "/" + num(after.shield)};
    }
    ++checked;
  }
  return {true, std::to_string(checked) + " damage and shield cases exact"};
}

// ---------------------------------------------------------------------------
// 2. Mirror symmetry

Verdict mirror_symmetry() {
  int runs = 0;
  long steps = 0;
  for (ScenarioSpec spec : builtin_scenarios()) {
    if (!spec.symmetric()) continue;
    spec.spawn_spread = 0;
    Env env(spec);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      // Deterministic policy: hash of (seed, observation) over available codes.
      auto policy = [seed](const Observation& o, const ActionMask& m) {
        std::uint64_t h = 1469598103934665603ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
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
      EnvStep s = env.reset(seed);
      while (!s.red.terminated) {
        if (s.red.observations != s.blue.observations || s.red.state != s.blue.state) {
          return {false, spec.name + " seed " + std::to_string(seed) + ": views differ at step " +
                             std::to_string(env.world().step)};
        }
        std::vector<int> a, b;
        for (std::size_t i = 0; i < s.red.masks.size(); ++i) {
          a.push_back(policy(s.red.observations[i], s.red.masks[i]));
          b.push_back(policy(s.blue.observations[i], s.blue.masks[i]));
        }
        s = env.step(a, b);
        ++steps;
        if (!(env.world() == reflect(env.world())) || s.red.reward != s.blue.reward) {
          return {false, spec.name + " seed " + std::to_string(seed) +
                             ": trajectory not mirrored at step " +
                             std::to_string(env.world().step)};
        }
      }
      if (s.red.outcome != Outcome::Draw) {
        return {false, spec.name + " seed " + std::to_string(seed) + " ended " +
                           std::string(to_string(s.red.outcome))};
      }
      ++runs;
    }
  }
  return {true, std::to_string(runs) + " mirrored rollouts (" + std::to_string(steps) +
                    " steps), all draws"};
}

// ---------------------------------------------------------------------------
// 3. Gradients

Verdict gradients() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> width(1, 16), depth(1, 3), io(1, 8);
  std::normal_distribution<double> n01;
  double worst = 0;
  for (int k = 0; k < 100; ++k) {
    std::vector<int> widths{io(rng)};
    const int hidden = depth(rng);
    for (int l = 0; l < hidden; ++l) widths.push_back(width(rng));
    widths.push_back(io(rng));
    const nn::Mlp net = nn::init_params(widths, rng());
    nn::Vector x(widths.front());
    for (auto& v : x) v = n01(rng);
    const nn::FiniteDiffReport r = nn::finite_diff_check(net, x, 1e-3);
    worst = std::max(worst, r.max_relative_error);
    if (!r.pass || r.max_relative_error >= 1e-3) {
      return {false, "net " + std::to_string(k) + " max relative error " + num(r.max_relative_error)};
    }
  }

  double lowest = 0;
  for (int k = 0; k < 1000; ++k) {
    const int agents = 2 + k % 4;
    const int state = 3 + k % 5;
    const QmixMixer m = QmixMixer::make(agents, state, 8, 1 + k % 2, rng());
    std::vector<double> q(agents), s(state);
    for (auto& v : q) v = 2 * n01(rng);
    for (auto& v : s) v = n01(rng);
    const double h = 1e-5;
    for (int i = 0; i < agents; ++i) {
      auto hi = q, lo = q;
      hi[i] += h;
      lo[i] -= h;
      lowest = std::min(lowest, (qmix_mix(hi, s, m) - qmix_mix(lo, s, m)) / (2 * h));
    }
  }
  if (lowest < -1e-9) return {false, "mixer partial " + num(lowest)};
  return {true, "100 nets, max relative error " + num(worst, 3) +
                    "; lowest mixer partial over 1000 samples " + num(lowest, 3)};
}

// ---------------------------------------------------------------------------
// 4. Reduction identities

std::vector<TeamEpisode> rollouts(const ScenarioSpec& spec, int n, std::uint64_t seed) {
  Env env(spec);
  RandomLearner random;
  Rng rng(seed);
  std::vector<TeamEpisode> out;
  for (int k = 0; k < n; ++k) {
    EpisodeResult e = run_episode(env, random, random, derive_seed(seed, k), rng);
    out.push_back(std::move(e.red));
  }
  return out;
}

Verdict reductions() {
  QLearnerConfig c;
  c.hidden = {32, 32};
  c.seed = 11;
  c.target_interval = 5;
  auto batch_of = [](const std::vector<TeamEpisode>& v, int k) {
    return EpisodeBatch{{&v[k % v.size()], &v[(k + 3) % v.size()], &v[(k + 5) % v.size()]}};
  };

  ScenarioSpec duel = builtin_scenario("3m");
  duel.name = "1m";
  duel.red = {{kMarine, 1}};
  duel.blue = {{kMarine, 1}};
  const std::vector<TeamEpisode> one = rollouts(duel, 8, 1);
  Env duel_env(duel);
  auto iql = QLearner::for_team(Mixing::Independent, duel_env, Team::Red, c);
  auto vdn1 = QLearner::for_team(Mixing::Sum, duel_env, Team::Red, c);
  for (int k = 0; k < 20; ++k) {
    const EpisodeBatch b = batch_of(one, k);
    const double li = iql->train_on(b), lv = vdn1->train_on(b);
    if (li != lv) return {false, "VDN(1 agent) loss " + num(lv, 17) + " != IQL " + num(li, 17)};
  }
  if (!(iql->agent_net() == vdn1->agent_net())) return {false, "VDN(1 agent) parameters diverged"};

  const ScenarioSpec& spec = builtin_scenario("3m");
  const std::vector<TeamEpisode> three = rollouts(spec, 8, 2);
  Env env(spec);
  QLearnerConfig cm = c;
  cm.train_mixer = false;
  auto vdn = QLearner::for_team(Mixing::Sum, env, Team::Red, cm);
  auto qmix = QLearner::for_team(Mixing::Monotonic, env, Team::Red, cm);
  qmix->set_mixer(QmixMixer::identity(3, env.state_size(Team::Red)));
  for (int k = 0; k < 20; ++k) {
    const EpisodeBatch b = batch_of(three, k);
    if (vdn->loss_on(b) != qmix->loss_on(b)) return {false, "identity-mixer loss differs"};
    const double lv = vdn->train_on(b), lq = qmix->train_on(b);
    if (lv != lq) return {false, "QMIX(identity) loss " + num(lq, 17) + " != VDN " + num(lv, 17)};
  }
  if (!(vdn->agent_net() == qmix->agent_net())) return {false, "QMIX(identity) parameters diverged"};
  return {true, "20 training steps each: losses and parameters bit-identical"};
}

// ---------------------------------------------------------------------------
// 5. Desk-scale learning

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[1];
}

Verdict learning() {
  const ScenarioSpec& spec = builtin_scenario("3m");
  TrainConfig cfg;
  cfg.total_env_steps = 300000;
  std::vector<double> vs_bot, vs_random;
  std::string per_seed;
  for (std::uint64_t seed : {0, 1, 2}) {
    QLearnerConfig lc = cfg.learner;
    lc.seed = stream_seed(seed, Stream::Init);
    auto learner = make_learner("iql", spec, Team::Red, lc);
    const auto start = std::chrono::steady_clock::now();
    const RunMetrics m = train_vs_bot(*learner, spec, cfg, seed);
    learner->freeze();
    RandomLearner random;
    const EvalResult r =
        evaluate(spec, *learner, random, 32, derive_seed(stream_seed(seed, Stream::Evaluation), 1u << 20));
    const double bot_rate = m.points.back().win_rate();
    const double random_rate = r.wins / 32.0;
    vs_bot.push_back(bot_rate);
    vs_random.push_back(random_rate);
    const double minutes =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60;
    per_seed += " seed" + std::to_string(seed) + "(bot " + num(bot_rate, 3) + ", random " +
                num(random_rate, 3) + ", " + num(minutes, 3) + " min)";
    std::cerr << "  learning:" << per_seed << "\n";
  }
  const double mb = median3(vs_bot), mr = median3(vs_random);
  return {mr >= 0.80 && mb >= 0.40,
          "median vs random " + num(mr, 3) + " (>= 0.80), vs bot " + num(mb, 3) + " (>= 0.40);" +
              per_seed};
}

// ---------------------------------------------------------------------------
// 6. Paired bookkeeping

Verdict paired_bookkeeping() {
  const ScenarioSpec& spec = builtin_scenario("3m");
  struct Pairing {
    const char* a;
    const char* b;
    std::uint64_t seed;
  };
  int points = 0;
  for (const Pairing p : {Pairing{"qmix", "iql", 0}, Pairing{"vdn", "vdn", 1}}) {
    TrainConfig cfg;
    cfg.mode = TrainMode::Paired;
    cfg.total_env_steps = 50000;
    cfg.test_interval = 5000;
    cfg.learner.hidden = {32, 32};
    QLearnerConfig la = cfg.learner, lb = cfg.learner;
    la.seed = stream_seed(p.seed, Stream::Init);
    lb.seed = derive_seed(la.seed, 1);
    auto a = make_learner(p.a, spec, Team::Red, la);
    auto b = make_learner(p.b, spec, Team::Blue, lb);
    const PairedResult r = train_paired(*a, *b, spec, cfg, p.seed);
    if (r.a.points.size() != r.b.points.size() || r.a.points.empty()) {
      return {false, "evaluation grids differ"};
    }
    for (std::size_t i = 0; i < r.a.points.size(); ++i) {
      const EvalPoint& x = r.a.points[i];
      const EvalPoint& y = r.b.points[i];
      if (x.wins != y.losses || x.losses != y.wins || x.draws != y.draws ||
          x.episodes() != 32 || y.episodes() != 32) {
        return {false, std::string(p.a) + " vs " + p.b + " step " + std::to_string(x.env_step) +
                           ": " + std::to_string(x.wins) + "/" + std::to_string(x.draws) + "/" +
                           std::to_string(x.losses) + " against " + std::to_string(y.wins) + "/" +
                           std::to_string(y.draws) + "/" + std::to_string(y.losses)};
      }
      ++points;
    }
  }
  return {true, std::to_string(points) +
                    " evaluation points over two 50k-step pairings: wins(A) = losses(B), 32 episodes each"};
}

// ---------------------------------------------------------------------------
// 7. Mixed sampling

Verdict mixed_sampling() {
  const ScenarioSpec& spec = builtin_scenario("3m");
  Env env(spec);
  OpponentPool pool;
  const char* kinds[] = {"bot", "random", "iql", "vdn", "qmix", "iql", "vdn", "qmix", "random"};
  for (int k = 0; k < 9; ++k) {
    QLearnerConfig lc;
    lc.hidden = {8};
    lc.mixer_embed = 4;
    lc.seed = 100 + k;
    auto l = make_learner(kinds[k], spec, Team::Blue, lc);
    l->freeze();
    PoolMember m;
    m.name = std::string(kinds[k]) + "-" + std::to_string(k);
    m.learner = std::move(l);
    pool.members.push_back(std::move(m));
  }
  std::vector<std::uint64_t> before;
  for (const auto& m : pool.members) before.push_back(m.learner->checkpoint_hash());

  TrainConfig cfg;
  cfg.mode = TrainMode::Mixed;
  cfg.total_env_steps = std::int64_t{1} << 40;
  cfg.max_episodes = 9000;
  cfg.test_interval = std::int64_t{1} << 40;
  cfg.test_episodes = 9;
  cfg.learner.hidden = {8};
  cfg.learner.batch_size = 4;
  cfg.learner.buffer_capacity = 100;
  QLearnerConfig lc = cfg.learner;
  lc.seed = stream_seed(0, Stream::Init);
  auto subject = make_learner("iql", spec, Team::Red, lc);
  const RunMetrics m = train_mixed(*subject, pool, spec, cfg, 0);

  std::int64_t total = 0;
  double chi2 = 0;
  for (auto d : m.opponent_draws) total += d;
  if (m.episodes != 9000 || total != 9000 || m.opponent_draws.size() != 9) {
    return {false, "episodes " + std::to_string(m.episodes) + ", draws " + std::to_string(total)};
  }
  const double expected = total / 9.0;
  std::string counts;
  for (auto d : m.opponent_draws) {
    chi2 += (d - expected) * (d - expected) / expected;
    counts += (counts.empty() ? "" : ",") + std::to_string(d);
  }
  const double p = boost::math::gamma_q(8 / 2.0, chi2 / 2);
  for (std::size_t i = 0; i < pool.members.size(); ++i) {
    if (pool.members[i].learner->checkpoint_hash() != before[i]) {
      return {false, "member " + pool.members[i].name + " changed"};
    }
  }
  return {p > 0.01, "draws [" + counts + "], chi-square " + num(chi2) + " (8 df), p = " + num(p) +
                        "; 9 member hashes unchanged"};
}

// ---------------------------------------------------------------------------
// 8. Aggregation semantics

RunMetrics run_of(const std::string& scenario, const std::string& red, const std::string& blue,
                  int wins, std::uint64_t seed = 0) {
  RunMetrics r;
  r.scenario = scenario;
  r.mode = "paired";
  r.algo_red = red;
  r.algo_blue = blue;
  r.seed = seed;
  r.points.push_back({1000, wins, 0, 32 - wins, 0, 0});
  return r;
}

Verdict aggregation() {
  if (kAdvantageMargin != 1.0 / 32) return {false, "margin is " + num(kAdvantageMargin)};
  // Margin boundary: exactly 1/32 counts, anything less does not.
  if (!has_advantage(0.5, {0.46875}) || has_advantage(0.5, {0.48}) ||
      has_advantage(0.5, {0.47}) || !has_advantage(16.0 / 32, {15.0 / 32})) {
    return {false, "margin boundary"};
  }
  // Scenario "3m": per-pairing final win rates (red = subject)
  //   iql:  vs iql 16, vs vdn 28, vs qmix 20   -> (0.5 + 0.875 + 0.625) / 3
  //   vdn:  vs iql 4,  vs vdn 16, vs qmix 10   -> (0.125 + 0.5 + 0.3125) / 3
  //   qmix: vs iql 12, vs vdn 22, vs qmix 16   -> (0.375 + 0.6875 + 0.5) / 3
  // Scenario "8m": iql and vdn split evenly except one seed of three; medians
  //   iql vs vdn {16, 17, 15} -> 16; vdn vs iql {15, 14, 16} -> 15; self 16.
  //   iql = (0.5 + 0.5) / 2 = 0.5, vdn = (0.46875 + 0.5) / 2 = 0.484375:
  //   the gap is 1/64, so no advantage there.
  const std::map<std::pair<std::string, std::string>, double> expected = {
      {{"3m", "iql"}, (0.5 + 0.875 + 0.625) / 3},   {{"3m", "vdn"}, (0.125 + 0.5 + 0.3125) / 3},
      {{"3m", "qmix"}, (0.375 + 0.6875 + 0.5) / 3}, {{"8m", "iql"}, 0.5},
      {{"8m", "vdn"}, (0.46875 + 0.5) / 2},
  };
  std::vector<RunMetrics> runs{
      run_of("3m", "iql", "iql", 16),  run_of("3m", "iql", "vdn", 28),
      run_of("3m", "iql", "qmix", 20), run_of("3m", "vdn", "iql", 4),
      run_of("3m", "vdn", "vdn", 16),  run_of("3m", "vdn", "qmix", 10),
      run_of("3m", "qmix", "iql", 12), run_of("3m", "qmix", "vdn", 22),
      run_of("3m", "qmix", "qmix", 16), run_of("8m", "iql", "iql", 16),
      run_of("8m", "vdn", "vdn", 16),  run_of("8m", "iql", "vdn", 16, 0),
      run_of("8m", "iql", "vdn", 17, 1), run_of("8m", "iql", "vdn", 15, 2),
      run_of("8m", "vdn", "iql", 15, 0), run_of("8m", "vdn", "iql", 14, 1),
      run_of("8m", "vdn", "iql", 16, 2),
  };
  const RunSummary s = aggregate_runs(runs);
  for (const auto& [key, value] : expected) {
    bool found = false;
    for (const AlgorithmScore& a : s.scores) {
      if (a.scenario == key.first && a.algorithm == key.second) {
        found = true;
        if (std::abs(a.average_median - value) > 1e-12) {
          return {false, key.first + " " + key.second + " average " + num(a.average_median, 17) +
                             ", expected " + num(value, 17)};
        }
      }
    }
    if (!found) return {false, "missing score " + key.first + " " + key.second};
  }
  // Only iql on 3m leads every other algorithm by at least 1/32.
  const std::map<std::string, int> want = {{"iql", 1}, {"vdn", 0}, {"qmix", 0}};
  for (const auto& [algo, count] : want) {
    const auto it = s.advantage.find(algo);
    const int got = it == s.advantage.end() ? 0 : it->second;
    if (got != count) {
      return {false, algo + " advantage count " + std::to_string(got) + ", expected " +
                         std::to_string(count)};
    }
  }
  return {true, "averages include self-pairing; 1/32 margin boundary exact; advantage counts match"};
}

// ---------------------------------------------------------------------------
// 9. Diversity

Verdict diversity() {
  JointActionLog one{3, 9, std::vector<std::vector<int>>(40, {2, 4, 6})};
  JointActionLog two{3, 9, {}};
  for (int k = 0; k < 40; ++k) {
    two.rows.push_back(k % 2 ? std::vector<int>{2, 4, 6} : std::vector<int>{7, 1, 3});
  }
  const int c1 = action_diversity(one).cluster_count;
  const int c2 = action_diversity(two).cluster_count;

  nn::Matrix rank1(60, 5);
  const double dir[5] = {0.3, -1.2, 2.0, 0.0, 0.7};
  for (int i = 0; i < 60; ++i) {
    const double t = std::sin(0.37 * i) * 3 + 0.1 * i;
    for (int j = 0; j < 5; ++j) rank1(i, j) = 4.0 + t * dir[j];
  }
  const Pca2d p = pca_2d(rank1);
  const bool ok = c1 == 1 && c2 == 2 && std::abs(p.explained_ratio[0] - 1.0) <= 1e-9;
  return {ok, "clusters " + std::to_string(c1) + " and " + std::to_string(c2) +
                  "; rank-1 explained variance " + num(p.explained_ratio[0], 17)};
}

// ---------------------------------------------------------------------------
// 10. Protocol equivalence

Verdict protocol_equivalence() {
  int episodes = 0;
  std::map<std::string, int> outcomes;
  for (const auto& [name, n] : std::vector<std::pair<std::string, int>>{{"3m", 50}, {"5m_vs_6m", 50}}) {
    const ScenarioSpec& spec = builtin_scenario(name);
    const std::uint64_t seed = 2024;
    ServeOptions so;
    so.seed = seed;
    so.episodes = n;
    Server server(spec, so);
    auto served = std::async(std::launch::async, [&] { return server.run(); });
    auto bot = [](const Assignment& a) -> std::unique_ptr<Learner> {
      return std::make_unique<ScriptedBot>(a.scenario, a.team);
    };
    auto client = [&](Team t) {
      ClientOptions o;
      o.port = server.port();
      o.team = t;
      return std::async(std::launch::async, [bot, o] { return client_loop(bot, o); });
    };
    auto red = client(Team::Red);
    auto blue = client(Team::Blue);
    const SessionReport report = served.get();
    const auto red_eps = red.get();
    const auto blue_eps = blue.get();

    Env env(spec);
    ScriptedBot rb(spec, Team::Red), bb(spec, Team::Blue);
    Rng unused(0);
    if (report.episodes.size() != static_cast<std::size_t>(n) ||
        red_eps.size() != report.episodes.size() || blue_eps.size() != report.episodes.size()) {
      return {false, name + ": served " + std::to_string(report.episodes.size()) + " episodes"};
    }
    for (int k = 0; k < n; ++k) {
      EnvStep s = env.reset(derive_seed(seed, static_cast<std::uint64_t>(k)));
      std::vector<double> r_red, r_blue;
      while (!s.red.terminated) {
        s = env.step(rb.act(s.red, {}, 0, unused), bb.act(s.blue, {}, 0, unused));
        r_red.push_back(s.red.reward);
        r_blue.push_back(s.blue.reward);
      }
      const ServedEpisode& e = report.episodes[k];
      if (e.outcome != s.red.outcome || e.red_rewards != r_red || e.blue_rewards != r_blue ||
          red_eps[k].outcome != s.red.outcome || red_eps[k].rewards != r_red ||
          blue_eps[k].rewards != r_blue) {
        return {false, name + " episode " + std::to_string(k) + " differs from the in-process run"};
      }
      ++outcomes[std::string(to_string(e.outcome))];
      ++episodes;
    }
  }
  std::string summary;
  for (const auto& [o, c] : outcomes) summary += " " + o + "=" + std::to_string(c);
  return {true, std::to_string(episodes) +
                    " served episodes bit-identical to in-process (outcomes, both reward streams);" +
                    summary};
}

// ---------------------------------------------------------------------------
// 11. Throughput

Verdict throughput() {
  double rate = 0;
  std::string how;
  if (!cli_path.empty()) {
    const std::string cmd = cli_path + " bench --scenario 3m --steps 300000 --seed 0";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return {false, "cannot run " + cmd};
    std::string out;
    char buf[512];
    while (fgets(buf, sizeof buf, pipe)) out += buf;
    if (pclose(pipe) != 0) return {false, "bench failed: " + out};
    const auto pos = out.find("steps_per_second ");
    if (pos == std::string::npos) return {false, "unexpected bench output: " + out};
    rate = std::stod(out.substr(pos + 17));
    how = "sc2ba bench";
  } else {
    rate = measure_throughput(builtin_scenario("3m"), 300000, 0).steps_per_second();
    how = "measure_throughput";
  }
  return {rate >= 10000, num(rate, 6) + " env steps/s on 3m with random policies (" + how +
                             ", floor 10000)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"combat model oracle", combat_model},
      {"mirror-symmetry rollout", mirror_symmetry},
      {"gradient correctness", gradients},
      {"reduction identities", reductions},
      {"desk-scale learning (IQL 3m vs bot, 300k steps, 3 seeds)", learning},
      {"paired-mode bookkeeping", paired_bookkeeping},
      {"mixed-mode sampling", mixed_sampling},
      {"aggregation semantics", aggregation},
      {"diversity pipeline", diversity},
      {"protocol equivalence", protocol_equivalence},
      {"throughput floor", throughput},
  };
  std::vector<int> selected;
  std::string report_path;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--cli" && i + 1 < argc) {
      cli_path = argv[++i];
    } else if (arg == "--report" && i + 1 < argc) {
      report_path = argv[++i];
    } else {
      selected.push_back(std::stoi(arg));
    }
  }
  if (selected.empty()) {
    for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) selected.push_back(k);
  }

  std::ofstream report;
  if (!report_path.empty()) report.open(report_path);
  int failures = 0;
  for (int k : selected) {
    const auto& [name, check] = criteria.at(k - 1);
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !v.pass;
    std::ostringstream line;
    line << (v.pass ? "PASS" : "FAIL") << " " << k << " " << name << ": " << v.detail << " ["
         << num(seconds, 3) << " s]";
    std::cout << line.str() << std::endl;
    if (report) report << line.str() << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
