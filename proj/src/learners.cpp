#include "sc2ba/learners.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "sc2ba/error.hpp"

namespace sc2ba {

namespace {

using nn::Matrix;
using nn::Vector;

constexpr std::string_view kMagic = "sc2ba-learner";
constexpr int kFormatVersion = 1;

void require_shape(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

std::string read_token(std::istream& in) {
  std::string t;
  if (!(in >> t)) throw Error(ErrorCode::CheckpointFormat, "unexpected end of checkpoint");
  return t;
}

void expect(std::istream& in, std::string_view token) {
  const std::string t = read_token(in);
  if (t != token) {
    throw Error(ErrorCode::CheckpointFormat,
                "expected '" + std::string(token) + "', found '" + t + "'");
  }
}

template <class T>
T read_number(std::istream& in) {
  const std::string t = read_token(in);
  std::istringstream s(t);
  T v{};
  if (!(s >> v) || !s.eof()) throw Error(ErrorCode::CheckpointFormat, "bad number '" + t + "'");
  return v;
}

double read_hex(std::istream& in) { return nn::parse_hex_double(read_token(in)); }

Matrix elu(const Matrix& x) {
  return x.unaryExpr([](double v) { return v > 0 ? v : std::expm1(v); });
}

Matrix sign_of(const Matrix& x) {
  return x.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

void write_header(std::ostream& out, const std::string& algorithm) {
  out << kMagic << ' ' << kFormatVersion << '\n' << "algorithm " << algorithm << '\n';
}

}  // namespace

// ---------------------------------------------------------------------------
// Episodes and replay

TeamEpisode::TeamEpisode(int agents, int obs, int state, int actions)
    : n_agents(agents), obs_size(obs), state_size(state), n_actions(actions) {}

void TeamEpisode::push_observation(const TeamStepResult& r) {
  require_shape(static_cast<int>(r.observations.size()) == n_agents &&
                    static_cast<int>(r.state.size()) == state_size,
                "episode observation shape");
  for (int i = 0; i < n_agents; ++i) {
    require_shape(static_cast<int>(r.observations[i].size()) == obs_size &&
                      static_cast<int>(r.masks[i].size()) == n_actions,
                  "episode observation shape");
    obs.insert(obs.end(), r.observations[i].begin(), r.observations[i].end());
    avail.insert(avail.end(), r.masks[i].begin(), r.masks[i].end());
  }
  state.insert(state.end(), r.state.begin(), r.state.end());
}

void TeamEpisode::push_transition(std::span<const int> joint_action, double reward) {
  require_shape(static_cast<int>(joint_action.size()) == n_agents, "joint action size");
  actions.insert(actions.end(), joint_action.begin(), joint_action.end());
  rewards.push_back(reward);
  ++length;
}

int EpisodeBatch::transitions() const {
  int n = 0;
  for (const auto* e : episodes) n += e->length;
  return n;
}

void ReplayBuffer::add(TeamEpisode episode) {
  if (capacity_ == 0) return;
  if (episodes_.size() == capacity_) episodes_.pop_front();
  episodes_.push_back(std::move(episode));
}

EpisodeBatch ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  n = std::min(n, episodes_.size());
  std::vector<std::size_t> index(episodes_.size());
  std::iota(index.begin(), index.end(), 0);
  // Partial Fisher-Yates: the first n entries are a uniform sample.
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, index.size() - 1);
    std::swap(index[i], index[pick(rng)]);
  }
  EpisodeBatch batch;
  for (std::size_t i = 0; i < n; ++i) batch.episodes.push_back(&episodes_[index[i]]);
  return batch;
}

// ---------------------------------------------------------------------------
// Action selection

std::uint64_t Learner::checkpoint_hash() const {
  std::ostringstream out;
  save(out);
  return nn::fnv1a64(out.str());
}

int uniform_available(const ActionMask& mask, Rng& rng) {
  const int count = static_cast<int>(std::count(mask.begin(), mask.end(), 1));
  if (count == 0) throw Error(ErrorCode::NoAvailableAction, "empty action mask");
  std::uniform_int_distribution<int> pick(0, count - 1);
  int k = pick(rng);
  for (std::size_t a = 0; a < mask.size(); ++a) {
    if (mask[a] && k-- == 0) return static_cast<int>(a);
  }
  return -1;  // unreachable
}

int epsilon_greedy(std::span<const double> q_values, const ActionMask& mask, double epsilon,
                   Rng& rng) {
  require_shape(q_values.size() == mask.size(), "q values and mask differ in length");
  if (epsilon > 0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < epsilon) return uniform_available(mask, rng);
  }
  int best = -1;
  for (std::size_t a = 0; a < mask.size(); ++a) {
    if (mask[a] && (best < 0 || q_values[a] > q_values[best])) best = static_cast<int>(a);
  }
  if (best < 0) throw Error(ErrorCode::NoAvailableAction, "empty action mask");
  return best;
}

std::vector<int> RandomLearner::act(const TeamStepResult& view, std::span<const int>, double,
                                    Rng& rng) const {
  std::vector<int> out;
  out.reserve(view.masks.size());
  for (const auto& m : view.masks) out.push_back(uniform_available(m, rng));
  return out;
}

void RandomLearner::save(std::ostream& out) const { write_header(out, algorithm()); }

std::unique_ptr<Learner> RandomLearner::clone() const {
  return std::make_unique<RandomLearner>(*this);
}

// ---------------------------------------------------------------------------
// Scripted bot

ScriptedBot::ScriptedBot(const ScenarioSpec& spec, Team team)
    : ctx_(EncodingContext::make(spec, team)) {
  for (std::size_t id = 0; id < ctx_.type_index.size(); ++id) {
    const int slot = ctx_.type_index[id];
    if (slot < 0) continue;
    if (static_cast<int>(slot_spec_.size()) <= slot) slot_spec_.resize(slot + 1, -1);
    slot_spec_[slot] = static_cast<int>(id);
  }
}

int ScriptedBot::type_of(const double* one_hot) const {
  for (int s = 0; s < ctx_.layout.type_width; ++s) {
    if (one_hot[s] > 0.5) return slot_spec_[s];
  }
  return -1;
}

int ScriptedBot::act_agent(int agent, const Observation& obs, const ActionMask& mask) const {
  const ObsLayout& L = ctx_.layout;
  const int living = static_cast<int>(std::count(mask.begin(), mask.end(), 1));
  if (living == 1 && mask[action::kNoOp]) return action::kNoOp;

  const int own_type = type_of(obs.data() + L.own_offset() + 2);
  const bool healer = own_type >= 0 && builtin_spec(own_type).is_healer;

  int best = -1;
  double best_value = 0;
  if (healer) {
    for (int s = 0; s < L.n_allies - 1; ++s) {
      const int ally = s < agent ? s : s + 1;
      const int code = action::kFirstTarget + ally;
      if (code >= static_cast<int>(mask.size()) || !mask[code]) continue;
      const double* f = obs.data() + L.allies_offset() + s * L.ally_width();
      const int type = type_of(f + 5);
      if (type < 0 || f[3] >= 1.0) continue;
      const double health = f[3] * builtin_spec(type).max_health;
      if (best < 0 || health < best_value) {
        best = code;
        best_value = health;
      }
    }
  } else {
    for (int k = 0; k < L.n_enemies; ++k) {
      const int code = action::kFirstTarget + k;
      if (code >= static_cast<int>(mask.size()) || !mask[code]) continue;
      const double* f = obs.data() + L.enemies_offset() + k * L.enemy_width();
      const int type = type_of(f + 6);
      if (type < 0) continue;
      const UnitSpec& s = builtin_spec(type);
      const double value = f[4] * s.max_health + f[5] * s.max_shield;
      if (best < 0 || value < best_value) {
        best = code;
        best_value = value;
      }
    }
  }
  if (best >= 0) return best;
  return mask[action::kEast] ? action::kEast : action::kStop;
}

std::vector<int> ScriptedBot::act(const TeamStepResult& view, std::span<const int>, double,
                                  Rng&) const {
  require_shape(static_cast<int>(view.observations.size()) == ctx_.layout.n_allies,
                "bot team size");
  std::vector<int> out;
  out.reserve(view.observations.size());
  for (std::size_t i = 0; i < view.observations.size(); ++i) {
    out.push_back(act_agent(static_cast<int>(i), view.observations[i], view.masks[i]));
  }
  return out;
}

void ScriptedBot::save(std::ostream& out) const { write_header(out, algorithm()); }

std::unique_ptr<Learner> ScriptedBot::clone() const {
  return std::make_unique<ScriptedBot>(*this);
}

// ---------------------------------------------------------------------------
// Mixers

double vdn_mix(std::span<const double> per_agent_q) {
  double total = 0;
  for (double q : per_agent_q) total += q;
  return total;
}

QmixMixer QmixMixer::make(int n_agents, int state_size, int embed, int layers,
                          std::uint64_t seed) {
  if (n_agents <= 0 || state_size <= 0 || embed <= 0 || (layers != 1 && layers != 2)) {
    throw Error(ErrorCode::ShapeMismatch, "bad mixer shape");
  }
  QmixMixer m;
  m.n_agents = n_agents;
  m.state_size = state_size;
  m.embed = embed;
  m.layers = layers;
  m.hyper_w1 = nn::init_params({state_size, layers == 2 ? n_agents * embed : n_agents},
                               derive_seed(seed, 1));
  if (layers == 2) {
    m.hyper_b1 = nn::init_params({state_size, embed}, derive_seed(seed, 2));
    m.hyper_w2 = nn::init_params({state_size, embed}, derive_seed(seed, 3));
  }
  m.hyper_v = nn::init_params({state_size, embed, 1}, derive_seed(seed, 4));
  return m;
}

QmixMixer QmixMixer::identity(int n_agents, int state_size) {
  QmixMixer m = make(n_agents, state_size, 1, 1, 0);
  m.hyper_w1.weights[0].setZero();
  m.hyper_w1.biases[0].setOnes();
  for (auto& w : m.hyper_v.weights) w.setZero();
  for (auto& b : m.hyper_v.biases) b.setZero();
  return m;
}

Eigen::Index QmixMixer::parameter_count() const {
  return hyper_w1.parameter_count() + hyper_b1.parameter_count() +
         hyper_w2.parameter_count() + hyper_v.parameter_count();
}

Vector QmixMixer::flatten() const {
  Vector flat(parameter_count());
  Eigen::Index off = 0;
  for (const nn::Mlp* net : {&hyper_w1, &hyper_b1, &hyper_w2, &hyper_v}) {
    const auto n = net->parameter_count();
    flat.segment(off, n) = nn::flatten(*net);
    off += n;
  }
  return flat;
}

void QmixMixer::unflatten(const Vector& flat) {
  require_shape(flat.size() == parameter_count(), "mixer parameter vector size");
  Eigen::Index off = 0;
  for (nn::Mlp* net : {&hyper_w1, &hyper_b1, &hyper_w2, &hyper_v}) {
    const auto n = net->parameter_count();
    nn::unflatten(*net, flat.segment(off, n));
    off += n;
  }
}

bool operator==(const QmixMixer& a, const QmixMixer& b) {
  return a.n_agents == b.n_agents && a.state_size == b.state_size && a.embed == b.embed &&
         a.layers == b.layers && a.hyper_w1 == b.hyper_w1 && a.hyper_b1 == b.hyper_b1 &&
         a.hyper_w2 == b.hyper_w2 && a.hyper_v == b.hyper_v;
}

Matrix QmixMixer::forward(const Matrix& q, const Matrix& states, Cache* cache) const {
  require_shape(q.rows() == n_agents && states.rows() == state_size && q.cols() == states.cols(),
                "mixer expects " + std::to_string(n_agents) + " agent values and state size " +
                    std::to_string(state_size));
  const Eigen::Index n = q.cols();
  Cache local;
  Cache& c = cache ? *cache : local;
  c.q = q;
  c.states = states;
  c.w1 = nn::forward_cached(hyper_w1, states);
  c.v = nn::forward_cached(hyper_v, states);
  c.w1_abs = c.w1.activations.back().cwiseAbs();
  const auto& v = c.v.activations.back();
  Matrix out(1, n);
  if (layers == 1) {
    for (Eigen::Index col = 0; col < n; ++col) {
      double total = 0;
      for (int i = 0; i < n_agents; ++i) total += c.w1_abs(i, col) * q(i, col);
      out(0, col) = total + v(0, col);
    }
    return out;
  }
  c.b1 = nn::forward_cached(hyper_b1, states);
  c.w2 = nn::forward_cached(hyper_w2, states);
  c.w2_abs = c.w2.activations.back().cwiseAbs();
  c.hidden_pre = c.b1.activations.back();
  for (Eigen::Index col = 0; col < n; ++col) {
    for (int i = 0; i < n_agents; ++i) {
      c.hidden_pre.col(col) += c.w1_abs.col(col).segment(i * embed, embed) * q(i, col);
    }
  }
  c.hidden = elu(c.hidden_pre);
  out = (c.w2_abs.cwiseProduct(c.hidden)).colwise().sum() + v;
  return out;
}

QmixMixer::Grads QmixMixer::backward(const Cache& c, const Matrix& dq_tot) const {
  const Eigen::Index n = c.q.cols();
  require_shape(dq_tot.rows() == 1 && dq_tot.cols() == n, "mixer output gradient shape");
  Grads g;
  g.dq.resize(n_agents, n);
  const Matrix w1_sign = sign_of(c.w1.activations.back());
  Matrix dw1(c.w1_abs.rows(), n);
  nn::Gradients gb1, gw2;
  if (layers == 1) {
    for (Eigen::Index col = 0; col < n; ++col) {
      for (int i = 0; i < n_agents; ++i) {
        g.dq(i, col) = dq_tot(0, col) * c.w1_abs(i, col);
        dw1(i, col) = dq_tot(0, col) * c.q(i, col) * w1_sign(i, col);
      }
    }
  } else {
    const Matrix dw2 = (c.hidden.array().rowwise() * dq_tot.row(0).array()).matrix()
                           .cwiseProduct(sign_of(c.w2.activations.back()));
    Matrix dpre = c.w2_abs.array().rowwise() * dq_tot.row(0).array();
    // elu'(x) = 1 for x > 0, exp(x) = elu(x) + 1 otherwise.
    dpre = dpre.cwiseProduct(c.hidden_pre.binaryExpr(
        c.hidden, [](double x, double h) { return x > 0 ? 1.0 : h + 1.0; }));
    for (Eigen::Index col = 0; col < n; ++col) {
      for (int i = 0; i < n_agents; ++i) {
        const auto w = c.w1_abs.col(col).segment(i * embed, embed);
        g.dq(i, col) = w.dot(dpre.col(col));
        dw1.col(col).segment(i * embed, embed) =
            (dpre.col(col) * c.q(i, col)).cwiseProduct(w1_sign.col(col).segment(i * embed, embed));
      }
    }
    gb1 = nn::backward(hyper_b1, c.b1, dpre);
    gw2 = nn::backward(hyper_w2, c.w2, dw2);
  }
  const nn::Gradients gw1 = nn::backward(hyper_w1, c.w1, dw1);
  const nn::Gradients gv = nn::backward(hyper_v, c.v, dq_tot);
  g.dparams.resize(parameter_count());
  Eigen::Index off = 0;
  for (const nn::Gradients* part : std::initializer_list<const nn::Gradients*>{&gw1, &gb1, &gw2, &gv}) {
    const Vector flat = nn::flatten(*part);
    g.dparams.segment(off, flat.size()) = flat;
    off += flat.size();
  }
  return g;
}

double qmix_mix(std::span<const double> per_agent_q, std::span<const double> state,
                const QmixMixer& mixer) {
  require_shape(static_cast<int>(per_agent_q.size()) == mixer.n_agents &&
                    static_cast<int>(state.size()) == mixer.state_size,
                "mixer expects " + std::to_string(mixer.n_agents) + " agent values and state size " +
                    std::to_string(mixer.state_size));
  const Matrix q = Eigen::Map<const Vector>(per_agent_q.data(), per_agent_q.size());
  const Matrix s = Eigen::Map<const Vector>(state.data(), state.size());
  return mixer.forward(q, s)(0, 0);
}

// ---------------------------------------------------------------------------
// Q learner

std::string mixing_name(Mixing m) {
  switch (m) {
    case Mixing::Independent: return "iql";
    case Mixing::Sum: return "vdn";
    case Mixing::Monotonic: return "qmix";
  }
  return "?";
}

Mixing mixing_from_name(const std::string& name) {
  if (name == "iql") return Mixing::Independent;
  if (name == "vdn") return Mixing::Sum;
  if (name == "qmix") return Mixing::Monotonic;
  throw Error(ErrorCode::CheckpointFormat, "unknown algorithm '" + name + "'");
}

QLearner::QLearner(Mixing mixing, std::string scenario, int n_agents, int obs_size,
                   int state_size, int n_actions, QLearnerConfig config)
    : mixing_(mixing),
      scenario_(std::move(scenario)),
      n_agents_(n_agents),
      obs_size_(obs_size),
      state_size_(state_size),
      n_actions_(n_actions),
      config_(std::move(config)),
      buffer_(static_cast<std::size_t>(std::max(0, config_.buffer_capacity))) {
  std::vector<int> widths{input_size()};
  widths.insert(widths.end(), config_.hidden.begin(), config_.hidden.end());
  widths.push_back(n_actions_);
  agent_ = nn::init_params(widths, derive_seed(config_.seed, 11));
  target_agent_ = agent_;
  if (mixing_ == Mixing::Monotonic) {
    mixer_ = QmixMixer::make(n_agents_, state_size_, config_.mixer_embed, config_.mixer_layers,
                             derive_seed(config_.seed, 12));
    target_mixer_ = mixer_;
  }
  adam_.learning_rate = config_.learning_rate;
}

std::unique_ptr<QLearner> QLearner::for_team(Mixing mixing, const Env& env, Team team,
                                             QLearnerConfig config) {
  return std::make_unique<QLearner>(mixing, env.scenario().name, env.n_agents(team),
                                    env.obs_size(team), env.state_size(team),
                                    env.n_actions(team), std::move(config));
}

std::string QLearner::algorithm() const { return mixing_name(mixing_); }

void QLearner::set_mixer(QmixMixer m) {
  require_shape(mixing_ == Mixing::Monotonic && m.n_agents == n_agents_ &&
                    m.state_size == state_size_,
                "mixer does not fit this learner");
  mixer_ = std::move(m);
  target_mixer_ = mixer_;
  adam_ = nn::AdamState{};
  adam_.learning_rate = config_.learning_rate;
}

Matrix QLearner::agent_inputs(const TeamStepResult& view,
                              std::span<const int> last_actions) const {
  require_shape(static_cast<int>(view.observations.size()) == n_agents_, "team size");
  Matrix x = Matrix::Zero(input_size(), n_agents_);
  for (int i = 0; i < n_agents_; ++i) {
    require_shape(static_cast<int>(view.observations[i].size()) == obs_size_, "observation size");
    x.col(i).head(obs_size_) = Eigen::Map<const Vector>(view.observations[i].data(), obs_size_);
    x(obs_size_ + i, i) = 1.0;
    if (i < static_cast<int>(last_actions.size()) && last_actions[i] >= 0) {
      x(obs_size_ + n_agents_ + last_actions[i], i) = 1.0;
    }
  }
  return x;
}

std::vector<int> QLearner::act(const TeamStepResult& view, std::span<const int> last_actions,
                               double epsilon, Rng& rng) const {
  const Matrix q = nn::forward_batch(agent_, agent_inputs(view, last_actions));
  std::vector<int> out(n_agents_);
  for (int i = 0; i < n_agents_; ++i) {
    out[i] = epsilon_greedy(std::span<const double>(q.col(i).data(), n_actions_), view.masks[i],
                            epsilon, rng);
  }
  return out;
}

void QLearner::observe(const TeamEpisode& episode) {
  if (frozen_) return;
  require_shape(episode.n_agents == n_agents_ && episode.obs_size == obs_size_ &&
                    episode.state_size == state_size_ && episode.n_actions == n_actions_,
                "episode does not fit this learner");
  if (episode.length > 0) buffer_.add(episode);
}

bool QLearner::ready_to_train() const {
  return !frozen_ && buffer_.size() >= static_cast<std::size_t>(std::max(1, config_.batch_size));
}

struct QLearner::BatchTensors {
  int transitions = 0;
  Matrix x, x_next;           // input x (N * A), column n * A + i
  Matrix s, s_next;           // S x N
  std::vector<int> chosen;    // N * A
  std::vector<std::uint8_t> next_avail;  // N * A * n_actions
  Vector reward, continues;   // N
};

QLearner::BatchTensors QLearner::build(const EpisodeBatch& batch) const {
  BatchTensors b;
  b.transitions = batch.transitions();
  const int N = b.transitions, A = n_agents_;
  b.x = Matrix::Zero(input_size(), static_cast<Eigen::Index>(N) * A);
  b.x_next = Matrix::Zero(input_size(), static_cast<Eigen::Index>(N) * A);
  b.s.resize(state_size_, N);
  b.s_next.resize(state_size_, N);
  b.chosen.resize(static_cast<std::size_t>(N) * A);
  b.next_avail.resize(static_cast<std::size_t>(N) * A * n_actions_);
  b.reward.resize(N);
  b.continues.resize(N);
  int n = 0;
  for (const TeamEpisode* e : batch.episodes) {
    for (int t = 0; t < e->length; ++t, ++n) {
      b.reward(n) = e->rewards[t];
      b.continues(n) = (e->terminated && t + 1 == e->length) ? 0.0 : 1.0;
      for (int k = 0; k < state_size_; ++k) {
        b.s(k, n) = e->state_at(t)[k];
        b.s_next(k, n) = e->state_at(t + 1)[k];
      }
      for (int i = 0; i < A; ++i) {
        const Eigen::Index col = static_cast<Eigen::Index>(n) * A + i;
        const float* o = e->obs_at(t, i);
        const float* o2 = e->obs_at(t + 1, i);
        for (int k = 0; k < obs_size_; ++k) {
          b.x(k, col) = o[k];
          b.x_next(k, col) = o2[k];
        }
        b.x(obs_size_ + i, col) = 1.0;
        b.x_next(obs_size_ + i, col) = 1.0;
        if (t > 0) b.x(obs_size_ + A + e->action_at(t - 1, i), col) = 1.0;
        const int a = e->action_at(t, i);
        b.x_next(obs_size_ + A + a, col) = 1.0;
        b.chosen[col] = a;
        std::copy_n(e->avail_at(t + 1, i), n_actions_,
                    b.next_avail.begin() + col * n_actions_);
      }
    }
  }
  return b;
}

double QLearner::loss_and_grads(const EpisodeBatch& batch, Vector* grads) const {
  if (batch.episodes.empty() || batch.transitions() == 0) {
    throw Error(ErrorCode::ShapeMismatch, "empty training batch");
  }
  const BatchTensors b = build(batch);
  const int N = b.transitions, A = n_agents_;
  const nn::ForwardCache cache = nn::forward_cached(agent_, b.x);
  const Matrix& q = cache.activations.back();
  const Matrix q_next_target = nn::forward_batch(target_agent_, b.x_next);
  Matrix q_next_online;
  if (config_.double_q) q_next_online = nn::forward_batch(agent_, b.x_next);

  // Chosen and bootstrap values, A x N.
  Matrix chosen(A, N), boot(A, N);
  for (int n = 0; n < N; ++n) {
    for (int i = 0; i < A; ++i) {
      const Eigen::Index col = static_cast<Eigen::Index>(n) * A + i;
      chosen(i, n) = q(b.chosen[col], col);
      const std::uint8_t* mask = b.next_avail.data() + col * n_actions_;
      int best = -1;
      const Matrix& selector = config_.double_q ? q_next_online : q_next_target;
      for (int a = 0; a < n_actions_; ++a) {
        if (mask[a] && (best < 0 || selector(a, col) > selector(best, col))) best = a;
      }
      boot(i, n) = best < 0 ? 0.0 : q_next_target(best, col);
    }
  }

  Matrix dchosen(A, N);
  double loss = 0;
  Vector mixer_grads;
  if (mixing_ == Mixing::Independent) {
    const double denom = static_cast<double>(N) * A;
    for (int n = 0; n < N; ++n) {
      for (int i = 0; i < A; ++i) {
        const double y = b.reward(n) + config_.gamma * b.continues(n) * boot(i, n);
        const double delta = chosen(i, n) - y;
        loss += delta * delta;
        dchosen(i, n) = 2.0 * delta / denom;
      }
    }
    loss /= denom;
  } else {
    Vector total(N), target(N);
    QmixMixer::Cache mcache;
    if (mixing_ == Mixing::Sum) {
      for (int n = 0; n < N; ++n) {
        total(n) = vdn_mix(std::span<const double>(chosen.col(n).data(), A));
        target(n) = vdn_mix(std::span<const double>(boot.col(n).data(), A));
      }
    } else {
      total = mixer_.forward(chosen, b.s, &mcache).row(0).transpose();
      target = target_mixer_.forward(boot, b.s_next).row(0).transpose();
    }
    Matrix dtotal(1, N);
    for (int n = 0; n < N; ++n) {
      const double y = b.reward(n) + config_.gamma * b.continues(n) * target(n);
      const double delta = total(n) - y;
      loss += delta * delta;
      dtotal(0, n) = 2.0 * delta / N;
    }
    loss /= N;
    if (mixing_ == Mixing::Sum) {
      for (int n = 0; n < N; ++n) dchosen.col(n).setConstant(dtotal(0, n));
    } else {
      QmixMixer::Grads mg = mixer_.backward(mcache, dtotal);
      dchosen = std::move(mg.dq);
      mixer_grads = std::move(mg.dparams);
    }
  }

  if (grads) {
    Matrix dq = Matrix::Zero(n_actions_, static_cast<Eigen::Index>(N) * A);
    for (int n = 0; n < N; ++n) {
      for (int i = 0; i < A; ++i) {
        const Eigen::Index col = static_cast<Eigen::Index>(n) * A + i;
        dq(b.chosen[col], col) = dchosen(i, n);
      }
    }
    const Vector agent_grads = nn::flatten(nn::backward(agent_, cache, dq));
    const bool with_mixer = mixing_ == Mixing::Monotonic && config_.train_mixer;
    grads->resize(agent_grads.size() + (with_mixer ? mixer_grads.size() : 0));
    grads->head(agent_grads.size()) = agent_grads;
    if (with_mixer) grads->tail(mixer_grads.size()) = mixer_grads;
  }
  return loss;
}

double QLearner::loss_on(const EpisodeBatch& batch) const {
  return loss_and_grads(batch, nullptr);
}

double QLearner::train_on(const EpisodeBatch& batch) {
  if (frozen_) throw Error(ErrorCode::MutablePoolMember, "frozen learners do not train");
  Vector grads;
  const double loss = loss_and_grads(batch, &grads);
  const double norm = grads.norm();
  if (config_.grad_clip > 0 && norm > config_.grad_clip) grads *= config_.grad_clip / norm;

  const bool with_mixer = mixing_ == Mixing::Monotonic && config_.train_mixer;
  const Eigen::Index n_agent = agent_.parameter_count();
  Vector params(grads.size());
  params.head(n_agent) = nn::flatten(agent_);
  if (with_mixer) params.tail(grads.size() - n_agent) = mixer_.flatten();
  nn::adam_step(params, grads, adam_);
  nn::unflatten(agent_, params.head(n_agent));
  if (with_mixer) mixer_.unflatten(params.tail(grads.size() - n_agent));

  ++train_steps_;
  if (config_.target_interval > 0 && train_steps_ % config_.target_interval == 0) {
    target_agent_ = agent_;
    target_mixer_ = mixer_;
  }
  return loss;
}

double QLearner::train_step(Rng& rng) {
  const EpisodeBatch batch = buffer_.sample(static_cast<std::size_t>(config_.batch_size), rng);
  return train_on(batch);
}

std::unique_ptr<Learner> QLearner::clone() const { return std::make_unique<QLearner>(*this); }

void QLearner::save(std::ostream& out) const {
  using nn::hex_double;
  write_header(out, algorithm());
  out << "scenario " << scenario_ << '\n'
      << "dims " << n_agents_ << ' ' << obs_size_ << ' ' << state_size_ << ' ' << n_actions_
      << '\n'
      << "hidden " << config_.hidden.size();
  for (int h : config_.hidden) out << ' ' << h;
  out << '\n'
      << "config " << hex_double(config_.gamma) << ' ' << hex_double(config_.learning_rate) << ' '
      << config_.batch_size << ' ' << config_.buffer_capacity << ' ' << config_.target_interval
      << ' ' << hex_double(config_.grad_clip) << ' ' << int(config_.double_q) << ' '
      << config_.mixer_embed << ' ' << config_.mixer_layers << ' ' << int(config_.train_mixer)
      << ' ' << config_.seed << '\n'
      << "train_steps " << train_steps_ << '\n';
  nn::write_mlp(out, agent_);
  nn::write_mlp(out, target_agent_);
  if (mixing_ == Mixing::Monotonic) {
    for (const QmixMixer* m : {&mixer_, &target_mixer_}) {
      out << "mixer " << m->embed << ' ' << m->layers << '\n';
      nn::write_mlp(out, m->hyper_w1);
      if (m->layers == 2) {
        nn::write_mlp(out, m->hyper_b1);
        nn::write_mlp(out, m->hyper_w2);
      }
      nn::write_mlp(out, m->hyper_v);
    }
  }
  nn::write_adam(out, adam_);
}

namespace {

struct Header {
  std::string algorithm;
};

Header read_header(std::istream& in) {
  expect(in, kMagic);
  const int version = read_number<int>(in);
  if (version != kFormatVersion) {
    throw Error(ErrorCode::CheckpointFormat, "unsupported version " + std::to_string(version));
  }
  expect(in, "algorithm");
  return {read_token(in)};
}

}  // namespace

namespace {

std::unique_ptr<QLearner> load_q_body(std::istream& in, Mixing mixing) {
  expect(in, "scenario");
  std::string scenario = read_token(in);
  expect(in, "dims");
  const int agents = read_number<int>(in);
  const int obs = read_number<int>(in);
  const int state = read_number<int>(in);
  const int actions = read_number<int>(in);
  if (agents <= 0 || obs <= 0 || state <= 0 || actions <= 0) {
    throw Error(ErrorCode::CheckpointFormat, "bad dimensions");
  }
  QLearnerConfig c;
  expect(in, "hidden");
  const auto layers = read_number<std::size_t>(in);
  if (layers > 16) throw Error(ErrorCode::CheckpointFormat, "bad hidden layer count");
  c.hidden.assign(layers, 0);
  for (auto& h : c.hidden) h = read_number<int>(in);
  expect(in, "config");
  c.gamma = read_hex(in);
  c.learning_rate = read_hex(in);
  c.batch_size = read_number<int>(in);
  c.buffer_capacity = read_number<int>(in);
  c.target_interval = read_number<int>(in);
  c.grad_clip = read_hex(in);
  c.double_q = read_number<int>(in) != 0;
  c.mixer_embed = read_number<int>(in);
  c.mixer_layers = read_number<int>(in);
  c.train_mixer = read_number<int>(in) != 0;
  c.seed = read_number<std::uint64_t>(in);
  expect(in, "train_steps");
  const auto steps = read_number<std::int64_t>(in);

  auto learner = std::make_unique<QLearner>(mixing, scenario, agents, obs, state, actions, c);
  nn::Mlp agent = nn::read_mlp(in);
  nn::Mlp target = nn::read_mlp(in);
  QmixMixer mixers[2];
  if (mixing == Mixing::Monotonic) {
    for (auto& m : mixers) {
      expect(in, "mixer");
      m.n_agents = agents;
      m.state_size = state;
      m.embed = read_number<int>(in);
      m.layers = read_number<int>(in);
      m.hyper_w1 = nn::read_mlp(in);
      if (m.layers == 2) {
        m.hyper_b1 = nn::read_mlp(in);
        m.hyper_w2 = nn::read_mlp(in);
      }
      m.hyper_v = nn::read_mlp(in);
    }
  }
  nn::AdamState adam = nn::read_adam(in);
  learner->restore(std::move(agent), std::move(target), std::move(mixers[0]),
                   std::move(mixers[1]), std::move(adam), steps);
  return learner;
}

}  // namespace

void QLearner::restore(nn::Mlp agent, nn::Mlp target, QmixMixer mixer, QmixMixer target_mixer,
                       nn::AdamState adam, std::int64_t train_steps) {
  if (!(agent.widths == agent_.widths && target.widths == agent_.widths)) {
    throw Error(ErrorCode::CheckpointFormat, "agent network shape does not match the header");
  }
  if (mixing_ == Mixing::Monotonic &&
      (mixer.hyper_w1.widths != mixer_.hyper_w1.widths ||
       mixer.hyper_v.widths != mixer_.hyper_v.widths ||
       target_mixer.hyper_w1.widths != mixer_.hyper_w1.widths)) {
    throw Error(ErrorCode::CheckpointFormat, "mixer shape does not match the header");
  }
  agent_ = std::move(agent);
  target_agent_ = std::move(target);
  if (mixing_ == Mixing::Monotonic) {
    mixer_ = std::move(mixer);
    target_mixer_ = std::move(target_mixer);
  }
  adam_ = std::move(adam);
  train_steps_ = train_steps;
}

std::unique_ptr<QLearner> QLearner::load(std::istream& in) {
  const Header h = read_header(in);
  return load_q_body(in, mixing_from_name(h.algorithm));
}

std::unique_ptr<Learner> load_learner(std::istream& in, const ScenarioSpec& spec, Team team) {
  const Header h = read_header(in);
  if (h.algorithm == "bot") return std::make_unique<ScriptedBot>(spec, team);
  if (h.algorithm == "random") return std::make_unique<RandomLearner>();
  auto learner = load_q_body(in, mixing_from_name(h.algorithm));
  const EncodingContext ctx = EncodingContext::make(spec, team);
  if (learner->n_agents() != spec.unit_count(team) ||
      learner->obs_size() != ctx.layout.obs_size() ||
      learner->state_size() != ctx.layout.state_size() || learner->n_actions() != ctx.n_actions) {
    throw Error(ErrorCode::CheckpointScenarioMismatch,
                "checkpoint trained on '" + learner->scenario() + "' does not fit " +
                    std::string(to_string(team)) + " of '" + spec.name + "'");
  }
  return learner;
}

std::unique_ptr<Learner> load_learner_file(const std::string& path, const ScenarioSpec& spec,
                                           Team team) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return load_learner(in, spec, team);
}

void save_learner_file(const Learner& learner, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  learner.save(out);
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

}  // namespace sc2ba
