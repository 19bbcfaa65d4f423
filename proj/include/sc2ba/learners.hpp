#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sc2ba/env.hpp"
#include "sc2ba/nn.hpp"
#include "sc2ba/rng.hpp"

namespace sc2ba {

// One team's view of one episode: T transitions and T+1 observation rows.
struct TeamEpisode {
  int n_agents = 0;
  int obs_size = 0;
  int state_size = 0;
  int n_actions = 0;
  int length = 0;
  bool terminated = false;
  std::vector<float> obs;             // (T+1) x A x obs_size
  std::vector<float> state;           // (T+1) x state_size
  std::vector<std::uint8_t> avail;    // (T+1) x A x n_actions
  std::vector<int> actions;           // T x A
  std::vector<double> rewards;        // T

  TeamEpisode() = default;
  TeamEpisode(int agents, int obs, int state, int actions);

  void push_observation(const TeamStepResult& r);
  void push_transition(std::span<const int> joint_action, double reward);

  const float* obs_at(int t, int agent) const {
    return obs.data() + (static_cast<std::size_t>(t) * n_agents + agent) * obs_size;
  }
  const std::uint8_t* avail_at(int t, int agent) const {
    return avail.data() + (static_cast<std::size_t>(t) * n_agents + agent) * n_actions;
  }
  const float* state_at(int t) const {
    return state.data() + static_cast<std::size_t>(t) * state_size;
  }
  int action_at(int t, int agent) const { return actions[t * n_agents + agent]; }
};

// Training batch of whole episodes. Agent networks are feed-forward, so
// transitions are concatenated instead of padded.
struct EpisodeBatch {
  std::vector<const TeamEpisode*> episodes;
  int transitions() const;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}
  void add(TeamEpisode episode);
  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  // Distinct episodes drawn uniformly.
  EpisodeBatch sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::deque<TeamEpisode> episodes_;
};

// Policy/trainer controlling one team. `act` is const: acting never changes
// parameters.
class Learner {
 public:
  virtual ~Learner() = default;

  virtual std::string algorithm() const = 0;
  virtual std::vector<int> act(const TeamStepResult& view, std::span<const int> last_actions,
                               double epsilon, Rng& rng) const = 0;
  virtual bool trainable() const { return false; }
  virtual void observe(const TeamEpisode& /*episode*/) {}
  virtual bool ready_to_train() const { return false; }
  // One optimizer step on a sampled batch; returns the loss.
  virtual double train_step(Rng& /*rng*/) { return 0; }
  virtual void save(std::ostream& out) const = 0;
  virtual std::unique_ptr<Learner> clone() const = 0;

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }
  std::uint64_t checkpoint_hash() const;

 protected:
  bool frozen_ = false;
};

// Uniform or greedy pick over a mask. Ties go to the lowest code.
int epsilon_greedy(std::span<const double> q_values, const ActionMask& mask, double epsilon,
                   Rng& rng);
int uniform_available(const ActionMask& mask, Rng& rng);

class RandomLearner final : public Learner {
 public:
  std::string algorithm() const override { return "random"; }
  std::vector<int> act(const TeamStepResult& view, std::span<const int> last_actions,
                       double epsilon, Rng& rng) const override;
  void save(std::ostream& out) const override;
  std::unique_ptr<Learner> clone() const override;
};

// Built-in heuristic opponent: focus fire on the weakest visible enemy,
// healers top up the most damaged ally, otherwise advance east.
class ScriptedBot final : public Learner {
 public:
  ScriptedBot(const ScenarioSpec& spec, Team team);

  std::string algorithm() const override { return "bot"; }
  std::vector<int> act(const TeamStepResult& view, std::span<const int> last_actions,
                       double epsilon, Rng& rng) const override;
  int act_agent(int agent, const Observation& obs, const ActionMask& mask) const;
  void save(std::ostream& out) const override;
  std::unique_ptr<Learner> clone() const override;

 private:
  int type_of(const double* one_hot) const;

  EncodingContext ctx_;
  std::vector<int> slot_spec_;  // one-hot slot -> spec id
};

enum class Mixing { Independent, Sum, Monotonic };

// Hypernetwork mixer: state-generated absolute-valued weights.
//   layers = 2: q_tot = |W2(s)| . elu(|W1(s)|^T q + B1(s)) + V(s)
//   layers = 1: q_tot = |W1(s)|^T q + V(s)
struct QmixMixer {
  int n_agents = 0;
  int state_size = 0;
  int embed = 32;
  int layers = 2;
  nn::Mlp hyper_w1;  // state -> A * embed (or A when layers = 1)
  nn::Mlp hyper_b1;  // state -> embed
  nn::Mlp hyper_w2;  // state -> embed
  nn::Mlp hyper_v;   // state -> embed -> 1

  static QmixMixer make(int n_agents, int state_size, int embed, int layers, std::uint64_t seed);
  // Single layer, unit weights, zero bias: reduces to the plain sum.
  static QmixMixer identity(int n_agents, int state_size);

  nn::Vector flatten() const;
  void unflatten(const nn::Vector& flat);
  Eigen::Index parameter_count() const;

  struct Cache;
  // q: A x N chosen-action values, states: S x N. Returns 1 x N.
  nn::Matrix forward(const nn::Matrix& q, const nn::Matrix& states, Cache* cache = nullptr) const;
  struct Grads {
    nn::Matrix dq;       // A x N
    nn::Vector dparams;  // flattened like flatten()
  };
  Grads backward(const Cache& cache, const nn::Matrix& dq_tot) const;

  friend bool operator==(const QmixMixer& a, const QmixMixer& b);
};

struct QmixMixer::Cache {
  nn::Matrix q, states;
  nn::ForwardCache w1, b1, w2, v;
  nn::Matrix w1_abs, hidden_pre, hidden, w2_abs;
};

double vdn_mix(std::span<const double> per_agent_q);
double qmix_mix(std::span<const double> per_agent_q, std::span<const double> state,
                const QmixMixer& mixer);

struct QLearnerConfig {
  std::vector<int> hidden = {64, 64};
  double gamma = 0.99;
  double learning_rate = 5e-4;
  int batch_size = 32;
  int buffer_capacity = 5000;
  int target_interval = 200;
  double grad_clip = 10;
  bool double_q = false;
  int mixer_embed = 32;
  int mixer_layers = 2;
  bool train_mixer = true;
  std::uint64_t seed = 0;

  friend bool operator==(const QLearnerConfig&, const QLearnerConfig&) = default;
};

// IQL / VDN / QMIX-lite share this learner; parameters are shared across a
// team's agents and the input is observation + agent one-hot + last-action
// one-hot.
class QLearner final : public Learner {
 public:
  QLearner(Mixing mixing, std::string scenario, int n_agents, int obs_size, int state_size,
           int n_actions, QLearnerConfig config);
  static std::unique_ptr<QLearner> for_team(Mixing mixing, const Env& env, Team team,
                                            QLearnerConfig config);

  std::string algorithm() const override;
  std::vector<int> act(const TeamStepResult& view, std::span<const int> last_actions,
                       double epsilon, Rng& rng) const override;
  bool trainable() const override { return !frozen_; }
  void observe(const TeamEpisode& episode) override;
  bool ready_to_train() const override;
  double train_step(Rng& rng) override;
  void save(std::ostream& out) const override;
  std::unique_ptr<Learner> clone() const override;

  // Loss and gradient step on an explicit batch (one optimizer step).
  double train_on(const EpisodeBatch& batch);
  // Loss only, no update.
  double loss_on(const EpisodeBatch& batch) const;

  int input_size() const { return obs_size_ + n_agents_ + n_actions_; }
  const nn::Mlp& agent_net() const { return agent_; }
  const QmixMixer& mixer() const { return mixer_; }
  void set_mixer(QmixMixer m);
  const QLearnerConfig& config() const { return config_; }
  const std::string& scenario() const { return scenario_; }
  Mixing mixing() const { return mixing_; }
  std::int64_t train_steps() const { return train_steps_; }
  int n_agents() const { return n_agents_; }
  int n_actions() const { return n_actions_; }
  int obs_size() const { return obs_size_; }
  int state_size() const { return state_size_; }

  static std::unique_ptr<QLearner> load(std::istream& in);
  // Installs checkpointed parameters; shapes must match the constructor's.
  void restore(nn::Mlp agent, nn::Mlp target, QmixMixer mixer, QmixMixer target_mixer,
               nn::AdamState adam, std::int64_t train_steps);

 private:
  struct BatchTensors;
  BatchTensors build(const EpisodeBatch& batch) const;
  double loss_and_grads(const EpisodeBatch& batch, nn::Vector* grads) const;
  nn::Matrix agent_inputs(const TeamStepResult& view, std::span<const int> last_actions) const;

  Mixing mixing_;
  std::string scenario_;
  int n_agents_, obs_size_, state_size_, n_actions_;
  QLearnerConfig config_;
  nn::Mlp agent_, target_agent_;
  QmixMixer mixer_, target_mixer_;
  nn::AdamState adam_;
  ReplayBuffer buffer_;
  std::int64_t train_steps_ = 0;
};

Mixing mixing_from_name(const std::string& name);
std::string mixing_name(Mixing m);

// Reads any checkpoint written by Learner::save. The scenario spec supplies
// team layout for bots. Throws CheckpointScenarioMismatch if a trained
// checkpoint was made for a different scenario or team shape.
std::unique_ptr<Learner> load_learner(std::istream& in, const ScenarioSpec& spec, Team team);
std::unique_ptr<Learner> load_learner_file(const std::string& path, const ScenarioSpec& spec,
                                           Team team);
void save_learner_file(const Learner& learner, const std::string& path);

}  // namespace sc2ba
