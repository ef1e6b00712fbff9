#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "imdauth/scenario.hpp"

// Live sessions for the tap console: HTTP + WebSocket over Boost.Beast.
// Endpoints and message schemas in docs/service.md.
namespace imdauth::service {

using json = scenario::json;

/// A simulation a human (or a script) drives in real time.
class LiveSession {
 public:
  enum class Mode { scripted, interactive };
  enum class Clock { wall, manual };

  struct TapReply {
    bool accepted = false;
    device::State state = device::State::Idle;
  };

  /// Interactive sessions disable the scripted patient and log in on the
  /// phone with `login` (or the scenario's patient) right away.
  LiveSession(std::string id, scenario::Scenario s, Mode mode, Clock clock,
              std::optional<simnet::LoginRequest> login = std::nullopt);

  /// Advances the simulation to t_ms (never backwards) and applies the
  /// touch edge. Accepted only while the device samples touch.
  TapReply tap(double t_ms, bool down);
  void advance_to(double t_ms);
  void login(simnet::LoginRequest r);

  double now_ms() const;
  const std::string& id() const { return id_; }
  Mode mode() const { return mode_; }
  Clock clock() const { return clock_; }
  std::chrono::steady_clock::time_point created() const { return created_; }

  /// State, SMS inbox and progress. Never carries key material.
  json view() const;
  json report();
  simnet::World& world() { return *world_; }

 private:
  std::string id_;
  std::string name_;
  Mode mode_;
  Clock clock_;
  std::chrono::steady_clock::time_point created_;
  std::unique_ptr<simnet::World> world_;
  std::uint64_t taps_accepted_ = 0;
  std::uint64_t taps_ignored_ = 0;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  unsigned short port = 8750;
  std::string scenario_dir = "scenarios";
  /// Wall-clock sessions run this far behind real time so that taps in
  /// flight are not already in the simulated past.
  std::chrono::milliseconds lag{250};
  std::chrono::milliseconds tick{50};
};

/// "host:port" or ":port".
std::pair<std::string, unsigned short> parse_bind(const std::string& bind);

struct HttpResponse {
  unsigned status = 200;
  json body;
};

/// Session registry and request routing, independent of the transport.
class Api {
 public:
  explicit Api(ServiceConfig config);

  HttpResponse handle(const std::string& method, const std::string& target, const std::string& body);
  /// One WebSocket text message for /sessions/{id}/taps.
  json tap_message(const std::string& session_id, const std::string& message);
  bool has_session(const std::string& id) const { return sessions_.count(id) > 0; }
  /// Moves every wall-clock session up to real time minus the lag.
  void tick_wall_clock();

 private:
  HttpResponse create(const std::string& body);

  ServiceConfig cfg_;
  std::map<std::string, std::unique_ptr<LiveSession>> sessions_;
  std::uint64_t next_id_ = 1;
};

/// Runs the service on one thread.
class Server {
 public:
  explicit Server(ServiceConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and listens. Returns the bound port (useful with port 0).
  /// Throws std::runtime_error when the address is busy.
  unsigned short listen();
  /// Blocks until stop().
  void run();
  /// Safe from any thread.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// listen() + run(), with errors reported on stderr. Exit code.
int serve(const ServiceConfig& config);

}  // namespace imdauth::service
