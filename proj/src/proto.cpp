#include "sc2ba/proto.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ostream>

#include "json.hpp"
#include "sc2ba/error.hpp"

namespace sc2ba {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

// Line-buffered socket.
class Conn {
 public:
  explicit Conn(int fd) : fd_(fd) {}
  ~Conn() { close(); }
  Conn(const Conn&) = delete;
  Conn& operator=(const Conn&) = delete;

  int fd() const { return fd_; }
  bool open() const { return fd_ >= 0; }

  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  bool send_line(const std::string& line) {
    if (fd_ < 0) return false;
    std::string data = line;
    data.push_back('\n');
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return false;
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

  // Reads what is available; false once the peer has closed.
  bool read_some() {
    char buf[65536];
    for (;;) {
      const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return false;
      in_.append(buf, static_cast<std::size_t>(n));
      return true;
    }
  }

  // Blocks until a whole line arrives; empty optional on EOF.
  std::optional<std::string> read_line_blocking() {
    for (;;) {
      if (auto line = next_line()) return line;
      if (!read_some()) return std::nullopt;
    }
  }

  std::optional<std::string> next_line() {
    const auto pos = in_.find('\n');
    if (pos == std::string::npos) return std::nullopt;
    std::string line = in_.substr(0, pos);
    in_.erase(0, pos + 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

 private:
  int fd_;
  std::string in_;
};

json message(const char* type) { return json{{"v", kProtocolVersion}, {"type", type}}; }

json error_message(ErrorCode code, const std::string& text) {
  json m = message("error");
  m["code"] = std::string(error_code_name(code));
  m["message"] = text;
  return m;
}

std::string team_name(Team t) { return std::string(to_string(t)); }

std::optional<Team> parse_team(const std::string& s) {
  if (s == "red") return Team::Red;
  if (s == "blue") return Team::Blue;
  return std::nullopt;
}

json obs_message(int episode, int step, const TeamStepResult& r, std::optional<Outcome> forced) {
  json m = message("obs");
  m["episode"] = episode;
  m["step"] = step;
  m["obs"] = r.observations;
  json masks = json::array();
  for (const auto& mask : r.masks) {
    json row = json::array();
    for (auto v : mask) row.push_back(static_cast<int>(v));
    masks.push_back(std::move(row));
  }
  m["masks"] = std::move(masks);
  m["reward"] = forced ? 0.0 : r.reward;
  m["terminated"] = forced ? true : r.terminated;
  m["outcome"] = std::string(to_string(forced ? *forced : r.outcome));
  return m;
}

ErrorCode code_from_name(const std::string& name) {
  for (int c = 0; c <= static_cast<int>(ErrorCode::Io); ++c) {
    if (error_code_name(static_cast<ErrorCode>(c)) == name) return static_cast<ErrorCode>(c);
  }
  return ErrorCode::ProtocolViolation;
}

}  // namespace

// ---------------------------------------------------------------------------
// Server

Server::Server(ScenarioSpec spec, ServeOptions options)
    : spec_(std::move(spec)), options_(std::move(options)) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::Io, std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(options_.port));
  if (::inet_pton(AF_INET, options_.host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw Error(ErrorCode::Io, "bad listen address '" + options_.host + "'");
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
      ::listen(listen_fd_, 8) < 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    throw Error(ErrorCode::Io, "cannot listen on " + options_.host + ":" +
                                   std::to_string(options_.port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

Server::~Server() {
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

struct Server::Impl {
  enum class Phase { Handshake, AwaitActs, AwaitAcks, Done };

  Server& server;
  const ServeOptions& opt;
  Env env;
  SessionReport report;
  Phase phase = Phase::Handshake;
  std::vector<std::unique_ptr<Conn>> pending;
  std::unique_ptr<Conn> slot[2];
  std::optional<ScriptedBot> bot;
  int episode = 0;
  EnvStep current;
  std::optional<std::vector<int>> acts[2];
  bool acked[2] = {false, false};
  Clock::time_point deadline{};

  Impl(Server& s)
      : server(s), opt(s.options_), env(s.spec_, s.options_.reward) {
    if (opt.internal_bot) bot.emplace(s.spec_, *opt.internal_bot);
  }

  void log(char dir, const std::string& line) {
    if (opt.transcript) *opt.transcript << dir << ' ' << line << '\n';
  }

  void send(Conn& c, const json& m) {
    const std::string line = m.dump();
    log('>', line);
    c.send_line(line);
  }

  void send_error(Conn& c, ErrorCode code, const std::string& text) {
    report.errors.emplace_back(error_code_name(code));
    send(c, error_message(code, text));
  }

  bool filled(Team t) const {
    return slot[static_cast<int>(t)] != nullptr || (bot && *opt.internal_bot == t);
  }

  bool is_bot(Team t) const { return bot && *opt.internal_bot == t; }

  json assign_message(Team t) const {
    const EncodingContext& ctx = env.context(t);
    json m = message("assign");
    m["team"] = team_name(t);
    json units = json::array();
    for (int id : server.spec_.unit_specs(t)) units.push_back(builtin_spec(id).name);
    m["scenario"] = {{"name", server.spec_.name},
                     {"symmetric", server.spec_.symmetric()},
                     {"arena", {server.spec_.engine.arena_width, server.spec_.engine.arena_height}},
                     {"step_limit", server.spec_.episode_step_limit},
                     {"units", units},
                     {"config", serialize_scenario_config(server.spec_)}};
    m["obs_len"] = ctx.layout.obs_size();
    m["n_actions"] = ctx.n_actions;
    m["n_agents"] = env.n_agents(t);
    json types = json::array();
    for (int id : server.spec_.unit_types()) types.push_back(builtin_spec(id).name);
    m["unit_types"] = std::move(types);
    json layout = {{"enemy_width", ctx.layout.enemy_width()},
                   {"ally_width", ctx.layout.ally_width()},
                   {"own_width", ctx.layout.own_width()},
                   {"enemies_offset", ctx.layout.enemies_offset()},
                   {"allies_offset", ctx.layout.allies_offset()},
                   {"own_offset", ctx.layout.own_offset()}};
    m["layout"] = std::move(layout);
    return m;
  }

  void handle_hello(std::unique_ptr<Conn> conn, const json& m) {
    const int v = m.value("v", -1);
    if (v != kProtocolVersion) {
      send_error(*conn, ErrorCode::HandshakeVersionMismatch,
                 "server speaks version " + std::to_string(kProtocolVersion));
      return;
    }
    const std::string want = m.value("team", "any");
    std::optional<Team> team;
    if (phase == Phase::Handshake) {
      if (want == "any") {
        if (!filled(Team::Red)) {
          team = Team::Red;
        } else if (!filled(Team::Blue)) {
          team = Team::Blue;
        }
      } else if (auto t = parse_team(want); t && !filled(*t)) {
        team = t;
      } else if (!parse_team(want)) {
        send_error(*conn, ErrorCode::MalformedMessage, "team must be red, blue or any");
        return;
      }
    }
    if (!team) {
      send_error(*conn, ErrorCode::TeamSlotTaken, "no free slot for team '" + want + "'");
      return;
    }
    send(*conn, assign_message(*team));
    slot[static_cast<int>(*team)] = std::move(conn);
    if (filled(Team::Red) && filled(Team::Blue)) start_episode();
  }

  void start_episode() {
    if (opt.episodes > 0 && episode >= opt.episodes) {
      finish();
      return;
    }
    ServedEpisode e;
    e.episode = episode;
    e.seed = derive_seed(opt.seed, static_cast<std::uint64_t>(episode));
    report.episodes.push_back(e);
    current = env.reset(e.seed);
    phase = Phase::AwaitActs;
    acts[0].reset();
    acts[1].reset();
    acked[0] = acked[1] = false;
    broadcast_obs(std::nullopt);
  }

  void broadcast_obs(std::optional<Outcome> forced) {
    const int step = env.world().step;
    for (Team t : {Team::Red, Team::Blue}) {
      const TeamStepResult& r = current.team(t);
      if (is_bot(t)) {
        Rng unused(0);
        if (forced || r.terminated) {
          acked[static_cast<int>(t)] = true;
        } else {
          acts[static_cast<int>(t)] = bot->act(r, {}, 0, unused);
        }
      } else if (slot[static_cast<int>(t)]) {
        send(*slot[static_cast<int>(t)], obs_message(episode, step, r, forced));
      }
    }
    if (opt.act_timeout_ms > 0) {
      deadline = Clock::now() + std::chrono::milliseconds(opt.act_timeout_ms);
    }
  }

  void finish() {
    for (auto& c : slot) {
      if (c && c->open()) send(*c, message("bye"));
    }
    phase = Phase::Done;
  }

  void end_episode(std::optional<Outcome> forced) {
    ServedEpisode& e = report.episodes.back();
    e.outcome = forced ? *forced : current.red.outcome;
    e.forfeited = forced.has_value();
    if (forced) {
      e.red_rewards.push_back(0.0);
      e.blue_rewards.push_back(0.0);
    }
    phase = Phase::AwaitAcks;
    broadcast_obs(forced);
    maybe_next_episode();
  }

  void maybe_next_episode() {
    if (phase == Phase::AwaitAcks && acked[0] && acked[1]) {
      ++episode;
      start_episode();
    }
  }

  void handle_act(Team t, const json& m) {
    const int i = static_cast<int>(t);
    Conn& c = *slot[i];
    if (phase != Phase::AwaitActs) {
      send_error(c, ErrorCode::ProtocolViolation, "no observation is waiting for an act");
      return;
    }
    if (m.contains("episode") && m["episode"] != episode) {
      send_error(c, ErrorCode::ProtocolViolation, "act for a different episode");
      return;
    }
    if (m.contains("step") && m["step"] != env.world().step) {
      send_error(c, ErrorCode::ProtocolViolation, "act for a different step");
      return;
    }
    if (acts[i]) {
      send_error(c, ErrorCode::ProtocolViolation, "this step already has an act");
      return;
    }
    std::vector<int> actions;
    try {
      actions = m.at("actions").get<std::vector<int>>();
    } catch (const json::exception&) {
      send_error(c, ErrorCode::MalformedMessage, "act needs an integer array 'actions'");
      return;
    }
    const auto& masks = current.team(t).masks;
    if (actions.size() != masks.size()) {
      send_error(c, ErrorCode::ShapeMismatch,
                 "expected " + std::to_string(masks.size()) + " actions");
      return;
    }
    for (std::size_t k = 0; k < actions.size(); ++k) {
      const int a = actions[k];
      if (a < 0 || a >= static_cast<int>(masks[k].size()) || !masks[k][a]) {
        send_error(c, ErrorCode::UnavailableAction,
                   "agent " + std::to_string(k) + " cannot take action " + std::to_string(a));
        return;
      }
    }
    acts[i] = std::move(actions);
    maybe_step();
  }

  void maybe_step() {
    if (phase != Phase::AwaitActs || !acts[0] || !acts[1]) return;
    current = env.step(*acts[0], *acts[1]);
    if (opt.replay) opt.replay->write(episode, env, *acts[0], *acts[1], current);
    ServedEpisode& e = report.episodes.back();
    e.red_rewards.push_back(current.red.reward);
    e.blue_rewards.push_back(current.blue.reward);
    acts[0].reset();
    acts[1].reset();
    if (current.red.terminated) {
      end_episode(std::nullopt);
    } else {
      broadcast_obs(std::nullopt);
      maybe_step();  // both slots may be bots only in tests
    }
  }

  void handle_timeout() {
    const bool red_late = !acts[0];
    const bool blue_late = !acts[1];
    Outcome o = Outcome::Draw;
    if (red_late && !blue_late) o = Outcome::BlueWin;
    if (blue_late && !red_late) o = Outcome::RedWin;
    for (Team t : {Team::Red, Team::Blue}) {
      const int i = static_cast<int>(t);
      if (!acts[i] && slot[i]) {
        send_error(*slot[i], ErrorCode::ActTimeout, "no act before the deadline; episode forfeited");
      }
    }
    acts[0].reset();
    acts[1].reset();
    end_episode(o);
  }

  void handle_line(Team t, const std::string& line) {
    log('<', line);
    json m;
    try {
      m = json::parse(line);
    } catch (const json::exception&) {
      send_error(*slot[static_cast<int>(t)], ErrorCode::MalformedMessage, "not valid JSON");
      return;
    }
    const std::string type = m.is_object() ? m.value("type", "") : "";
    if (type == "act") {
      handle_act(t, m);
    } else if (type == "reset_ack") {
      if (phase != Phase::AwaitAcks) {
        send_error(*slot[static_cast<int>(t)], ErrorCode::ProtocolViolation,
                   "reset_ack outside an episode boundary");
        return;
      }
      acked[static_cast<int>(t)] = true;
      maybe_next_episode();
    } else if (type == "bye") {
      finish();
    } else {
      send_error(*slot[static_cast<int>(t)], ErrorCode::MalformedMessage,
                 "unexpected message type '" + type + "'");
    }
  }

  void handle_pending_line(std::size_t k, const std::string& line) {
    log('<', line);
    std::unique_ptr<Conn> conn = std::move(pending[k]);
    json m;
    try {
      m = json::parse(line);
    } catch (const json::exception&) {
      send_error(*conn, ErrorCode::MalformedMessage, "not valid JSON");
      return;
    }
    if (!m.is_object() || m.value("type", "") != "hello") {
      send_error(*conn, ErrorCode::ProtocolViolation, "the first message must be hello");
      return;
    }
    handle_hello(std::move(conn), m);
  }

  SessionReport run() {
    if (filled(Team::Red) && filled(Team::Blue)) start_episode();
    while (phase != Phase::Done && !server.stop_) {
      std::vector<pollfd> fds;
      fds.push_back({server.listen_fd_, POLLIN, 0});
      for (auto& c : pending) fds.push_back({c ? c->fd() : -1, POLLIN, 0});
      for (auto& c : slot) fds.push_back({c ? c->fd() : -1, POLLIN, 0});
      int timeout = 100;
      if (phase == Phase::AwaitActs && opt.act_timeout_ms > 0) {
        const auto left =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
        timeout = static_cast<int>(std::clamp<long long>(left, 0, 100));
      }
      const int ready = ::poll(fds.data(), fds.size(), timeout);
      if (ready < 0 && errno != EINTR) throw Error(ErrorCode::Io, "poll failed");

      if (fds[0].revents & POLLIN) {
        const int fd = ::accept(server.listen_fd_, nullptr, nullptr);
        if (fd >= 0) {
          const int one = 1;
          ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
          pending.push_back(std::make_unique<Conn>(fd));
        }
      }
      const std::size_t n_pending = fds.size() - 3;
      for (std::size_t k = 0; k < n_pending; ++k) {
        if (!(fds[1 + k].revents & (POLLIN | POLLHUP | POLLERR)) || !pending[k]) continue;
        if (!pending[k]->read_some()) {
          pending[k].reset();
          continue;
        }
        if (auto line = pending[k]->next_line()) handle_pending_line(k, *line);
      }
      for (Team t : {Team::Red, Team::Blue}) {
        const int i = static_cast<int>(t);
        const pollfd& p = fds[1 + n_pending + i];
        if (phase == Phase::Done || !slot[i] || !(p.revents & (POLLIN | POLLHUP | POLLERR))) {
          continue;
        }
        if (!slot[i]->read_some()) {
          // A client vanished: the session is over.
          slot[i].reset();
          finish();
          break;
        }
        while (phase != Phase::Done && slot[i]) {
          auto line = slot[i]->next_line();
          if (!line) break;
          handle_line(t, *line);
        }
      }
      std::erase_if(pending, [](const auto& c) { return !c; });
      if (phase == Phase::AwaitActs && opt.act_timeout_ms > 0 && Clock::now() >= deadline &&
          (!acts[0] || !acts[1])) {
        handle_timeout();
      }
    }
    if (phase != Phase::Done) finish();
    // Drop an unfinished trailing episode.
    if (!report.episodes.empty() && report.episodes.back().outcome == Outcome::Ongoing) {
      report.episodes.pop_back();
    }
    return std::move(report);
  }
};

SessionReport Server::run() {
  Impl impl(*this);
  return impl.run();
}

// ---------------------------------------------------------------------------
// Client

namespace {

int connect_to(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    throw Error(ErrorCode::ConnectionLost, "cannot resolve " + host);
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const bool ok = fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) == 0;
  ::freeaddrinfo(res);
  if (!ok) {
    if (fd >= 0) ::close(fd);
    throw Error(ErrorCode::ConnectionLost,
                "cannot connect to " + host + ":" + std::to_string(port));
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

}  // namespace

std::vector<ClientEpisode> client_loop(const PolicyFactory& policy, const ClientOptions& options) {
  Conn conn(connect_to(options.host, options.port));
  json hello = message("hello");
  hello["v"] = options.version;
  hello["team"] = options.team ? team_name(*options.team) : std::string("any");
  hello["name"] = options.name;
  conn.send_line(hello.dump());

  auto receive = [&]() -> json {
    auto line = conn.read_line_blocking();
    if (!line) throw Error(ErrorCode::ConnectionLost, "server closed the connection");
    try {
      return json::parse(*line);
    } catch (const json::exception&) {
      throw Error(ErrorCode::ProtocolViolation, "server sent invalid JSON");
    }
  };
  auto raise_error = [](const json& m) {
    throw Error(code_from_name(m.value("code", "")), m.value("message", ""));
  };

  json m = receive();
  if (m.value("type", "") == "error") raise_error(m);
  if (m.value("type", "") != "assign") {
    throw Error(ErrorCode::ProtocolViolation, "expected assign, got '" + m.value("type", "") + "'");
  }
  Assignment a;
  try {
    a.team = parse_team(m.at("team").get<std::string>()).value();
    a.scenario = parse_scenario_config(m.at("scenario").at("config").get<std::string>());
    a.obs_len = m.at("obs_len").get<int>();
    a.n_actions = m.at("n_actions").get<int>();
    a.n_agents = m.at("n_agents").get<int>();
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ProtocolViolation, std::string("bad assign: ") + e.what());
  }
  const std::unique_ptr<Learner> learner = policy(a);
  Rng rng(options.seed);

  std::vector<ClientEpisode> done;
  std::optional<ClientEpisode> current;
  std::vector<int> last(a.n_agents, -1);
  for (;;) {
    m = receive();
    const std::string type = m.value("type", "");
    if (type == "bye") return done;
    if (type == "error") {
      const std::string code = m.value("code", "");
      if (code == "ActTimeout") continue;  // the terminal obs follows
      raise_error(m);
    }
    if (type != "obs") throw Error(ErrorCode::ProtocolViolation, "unexpected '" + type + "'");
    TeamStepResult view;
    int episode = 0;
    try {
      episode = m.at("episode").get<int>();
      view.observations = m.at("obs").get<std::vector<Observation>>();
      for (const auto& row : m.at("masks")) {
        ActionMask mask;
        for (const auto& v : row) mask.push_back(static_cast<std::uint8_t>(v.get<int>()));
        view.masks.push_back(std::move(mask));
      }
      view.reward = m.at("reward").get<double>();
      view.terminated = m.at("terminated").get<bool>();
      view.outcome = outcome_from_string(m.at("outcome").get<std::string>());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::ProtocolViolation, std::string("bad obs: ") + e.what());
    }
    if (!current || current->episode != episode) {
      current = ClientEpisode{episode, Outcome::Ongoing, {}};
      std::fill(last.begin(), last.end(), -1);
    } else {
      current->rewards.push_back(view.reward);
    }
    if (view.terminated) {
      current->outcome = view.outcome;
      done.push_back(std::move(*current));
      current.reset();
      conn.send_line(message("reset_ack").dump());
      continue;
    }
    const std::vector<int> actions = learner->act(view, last, options.epsilon, rng);
    last = actions;
    json act = message("act");
    act["episode"] = episode;
    act["step"] = m.value("step", 0);
    act["actions"] = actions;
    conn.send_line(act.dump());
  }
}

}  // namespace sc2ba
