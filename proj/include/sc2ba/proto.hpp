#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sc2ba/env.hpp"
#include "sc2ba/learners.hpp"

namespace sc2ba {

// Newline-delimited JSON over TCP. Every message carries "v" and "type".
//   client -> server: hello, act, reset_ack, bye
//   server -> client: assign, obs, error, bye
// Global state never leaves the server.
inline constexpr int kProtocolVersion = 1;

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 = ephemeral, see Server::port()
  std::uint64_t seed = 0;
  // Episodes to play before saying bye; 0 = until a client leaves.
  int episodes = 0;
  // Per-step deadline for act messages; 0 = none. A team that misses it
  // forfeits the episode (both missing = draw).
  int act_timeout_ms = 0;
  // Fill one slot with the scripted bot.
  std::optional<Team> internal_bot;
  RewardConfig reward;
  std::ostream* transcript = nullptr;  // every message, prefixed "> " / "< "
  ReplayWriter* replay = nullptr;
};

struct ServedEpisode {
  int episode = 0;
  std::uint64_t seed = 0;
  Outcome outcome = Outcome::Ongoing;
  bool forfeited = false;
  std::vector<double> red_rewards;
  std::vector<double> blue_rewards;
};

struct SessionReport {
  std::vector<ServedEpisode> episodes;
  std::vector<std::string> errors;  // error codes sent to clients
};

// One session per listening endpoint. Episode k resets with
// derive_seed(seed, k), the same seeds an in-process run would use.
class Server {
 public:
  Server(ScenarioSpec spec, ServeOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  int port() const { return port_; }
  // Runs until the configured episodes are played, a client leaves, or
  // stop() is called.
  SessionReport run();
  void stop() { stop_ = true; }

 private:
  struct Impl;
  ScenarioSpec spec_;
  ServeOptions options_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stop_{false};
};

struct Assignment {
  Team team = Team::Red;
  ScenarioSpec scenario;
  int obs_len = 0;
  int n_actions = 0;
  int n_agents = 0;
};

struct ClientOptions {
  std::string host = "127.0.0.1";
  int port = 0;
  std::optional<Team> team;  // empty = any free slot
  std::string name = "client";
  int version = kProtocolVersion;
  double epsilon = 0;
  std::uint64_t seed = 0;  // action RNG
};

struct ClientEpisode {
  int episode = 0;
  Outcome outcome = Outcome::Ongoing;
  std::vector<double> rewards;
};

using PolicyFactory = std::function<std::unique_ptr<Learner>(const Assignment&)>;

// Reference client: handshake, answer every obs with the policy's actions,
// acknowledge terminal observations. Returns the completed episodes when
// the server says bye. Throws ConnectionLost if the server goes away,
// ProtocolViolation on unexpected messages and the server's error code for
// handshake failures.
std::vector<ClientEpisode> client_loop(const PolicyFactory& policy, const ClientOptions& options);

}  // namespace sc2ba
