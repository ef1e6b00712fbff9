#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "imdauth/device.hpp"
#include "imdauth/server.hpp"
#include "imdauth/sim.hpp"

// The simulated deployment: implant, phone relay (possibly hostile),
// server, SMS channel and a scripted patient, wired over datagram links.
namespace imdauth::simnet {

using sim::SimTime;

// ---- adversary ----

enum class AdversaryMode { honest, passive_capture, tamper, replay, inject, wake_spam };
std::string_view to_string(AdversaryMode m);
AdversaryMode adversary_mode_from_string(std::string_view name);

/// Which relayed frames a tamper/replay adversary goes after.
enum class FrameClass { any, control, handshake, app_up, app_down };
std::string_view to_string(FrameClass c);
FrameClass frame_class_from_string(std::string_view name);

enum class Direction { to_device, to_server };
std::string_view to_string(Direction d);

struct AdversaryConfig {
  AdversaryMode mode = AdversaryMode::honest;
  FrameClass target = FrameClass::any;
  /// Chance of acting on each eligible frame.
  double rate = 1.0;
  /// Stop acting after this many actions; 0 means no limit.
  std::uint64_t max_actions = 0;
  std::size_t replay_buffer = 256;
  /// Replay: replace the genuine frame instead of sending the copy after it.
  bool replay_replace = false;
  std::uint32_t inject_per_frame = 1;
  std::uint64_t spam_count = 0;
  SimTime spam_start{0};
  SimTime spam_duration = std::chrono::hours(1);

  void validate() const;
};

struct AdversaryAction {
  SimTime at{0};
  Direction direction = Direction::to_device;
  std::string action;
  std::size_t bytes = 0;
};

/// Sits inside the compromised phone and sees every frame the phone sends.
/// It never holds the PSK and has no path to the SMS channel.
class Adversary {
 public:
  Adversary(sim::Simulator& sim, AdversaryConfig config, Rng rng);

  /// Frames to put on the wire in place of `frame`.
  std::vector<Bytes> filter(Direction d, Bytes frame);
  /// Spam frame number i of a wake-spam campaign.
  Bytes spam_frame(std::uint64_t i);

  const AdversaryConfig& config() const { return cfg_; }
  const std::vector<AdversaryAction>& actions() const { return actions_; }
  std::uint64_t attempts() const { return attempts_; }
  /// Everything seen on the relay, in order (passive capture).
  const std::vector<std::pair<Direction, Bytes>>& captured() const { return captured_; }

 private:
  bool acting();
  void log(Direction d, std::string action, std::size_t bytes);
  Bytes tamper(Direction d, Bytes frame);
  std::optional<Bytes> replay_candidate(Direction d, FrameClass c);
  Bytes forge(Direction d);
  Bytes mutate(Bytes frame);

  sim::Simulator& sim_;
  AdversaryConfig cfg_;
  Rng rng_;
  std::vector<AdversaryAction> actions_;
  std::uint64_t attempts_ = 0;
  std::vector<std::pair<Direction, Bytes>> captured_;
  std::deque<std::pair<Direction, Bytes>> replay_pool_;
};

FrameClass classify(Direction d, BytesView frame);

// ---- phone ----

struct LoginRequest {
  std::string identity;
  std::string credential;
  std::uint32_t dose = 0;
};

struct PhoneStats {
  std::uint64_t logins_sent = 0;
  std::uint64_t denials = 0;
  std::uint64_t gos = 0;
};

/// The patient's phone app: turns READY into a LOGIN, relays the verdict
/// to the implant as GO or ABORT, and forwards DTLS datagrams both ways.
class Phone {
 public:
  using Send = std::function<void(Bytes)>;

  Phone(Adversary& adversary, Send to_device, Send to_server);

  /// The patient enters credentials and a dose in the app.
  void request(LoginRequest r);
  void from_device(Bytes frame);
  void from_server(Bytes frame);

  const PhoneStats& stats() const { return stats_; }
  std::optional<msg::DenyReason> last_denial() const { return last_denial_; }

 private:
  void out(Direction d, Bytes frame);

  Adversary& adversary_;
  Send to_device_;
  Send to_server_;
  std::optional<LoginRequest> request_;
  std::uint32_t login_id_ = 0;
  std::optional<Bytes> verdict_;  // GO or ABORT for the current login
  std::optional<msg::DenyReason> last_denial_;
  PhoneStats stats_;
};

// ---- patient ----

enum class OtpBehavior { follow, wrong, none };
std::string_view to_string(OtpBehavior b);
OtpBehavior otp_behavior_from_string(std::string_view name);

struct UserConfig {
  LoginRequest login;
  std::string phone;
  tapcode::TapPattern wake_pattern = tapcode::TapPattern::uniform(4);
  SimTime start = std::chrono::seconds(1);
  std::uint32_t sessions = 1;
  SimTime session_interval = std::chrono::seconds(120);
  /// Time from reading the SMS to the first tap.
  SimTime reaction = std::chrono::seconds(5);
  /// Per session; the last entry repeats.
  std::vector<OtpBehavior> otp = {OtpBehavior::follow};
  /// Ignore a challenge whose SMS names a dose other than the one asked for.
  bool check_dose = true;
  tapcode::RenderConfig render;

  void validate() const;
};

/// A different pattern than `p`, for users who get it wrong.
tapcode::TapPattern wrong_pattern(const tapcode::TapPattern& p);

/// Schedules touch edges so that the device samples exactly `pattern`,
/// starting at the first LCLK tick at or after `at`. Returns the end time.
SimTime schedule_taps(sim::Simulator& sim, device::Device& device, SimTime at, const tapcode::TapPattern& pattern,
                      const tapcode::RenderConfig& render);

class User {
 public:
  User(sim::Simulator& sim, UserConfig config, device::Device& device, Phone& phone);

  void start();
  void on_sms(const server::SmsMessage& m);

  std::uint32_t sessions_started() const { return session_; }
  std::uint64_t challenges_refused() const { return refused_; }

 private:
  void begin_session();

  sim::Simulator& sim_;
  UserConfig cfg_;
  device::Device& device_;
  Phone& phone_;
  std::uint32_t session_ = 0;
  bool awaiting_otp_ = false;
  std::uint64_t refused_ = 0;
};

// ---- assembly ----

struct WorldConfig {
  std::uint64_t seed = 1;
  device::DeviceConfig device;
  server::Registry registry;
  server::ServerConfig server;
  sim::LinkConfig ble{0.0, std::chrono::milliseconds(5), std::chrono::milliseconds(2), 125'000.0};
  sim::LinkConfig cell{0.0, std::chrono::milliseconds(40), std::chrono::milliseconds(10), 1'000'000.0};
  SimTime sms_delay = std::chrono::seconds(2);
  /// When false no patient acts; used for idle and spam studies.
  bool user_enabled = true;
  UserConfig user;
  AdversaryConfig adversary;
  bool tracing = true;
};

/// Device state entry times for one wake-to-idle session.
struct SessionTimeline {
  SimTime woken{0};
  std::optional<SimTime> first_factor;
  std::optional<SimTime> await_second_factor;
  std::optional<SimTime> verifying;
  std::optional<SimTime> notifying;
  std::optional<SimTime> executing;
  std::optional<SimTime> lockout;
  std::optional<SimTime> idle;
  /// Woken to Executing, or to the return to Idle when nothing ran.
  SimTime latency() const;
};

struct Forgery {
  std::size_t execution = 0;
  std::string reason;
};

class World {
 public:
  explicit World(WorldConfig config);
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  /// Runs to quiescence (bounded by max_events), or up to `until`.
  void run(std::optional<SimTime> until = std::nullopt, std::size_t max_events = 50'000'000);

  sim::Simulator& simulator() { return sim_; }
  const WorldConfig& config() const { return cfg_; }
  device::Device& device() { return *device_; }
  server::Server& server() { return *server_; }
  const server::TransactionLog& log() const { return log_; }
  Phone& phone() { return *phone_; }
  Adversary& adversary() { return *adversary_; }
  User* user() { return user_.get(); }
  const std::vector<server::SmsMessage>& sms() const { return sms_; }
  const std::vector<SessionTimeline>& sessions() const { return timelines_; }
  /// Every frame put on a relay link, both hops and directions.
  const std::vector<Bytes>& relay_traffic() const { return relay_traffic_; }

  /// Executions that do not trace back to a genuine challenge the patient
  /// asked for and answered.
  std::vector<Forgery> forgeries() const;

 private:
  void on_transition(device::State from, device::State to);
  void start_spam();

  WorldConfig cfg_;
  Rng rng_;
  sim::Simulator sim_;
  std::unique_ptr<sim::Link> ble_up_, ble_down_, cell_up_, cell_down_;
  server::TransactionLog log_;
  std::unique_ptr<Adversary> adversary_;
  std::unique_ptr<device::Device> device_;
  std::unique_ptr<server::Server> server_;
  std::unique_ptr<Phone> phone_;
  std::unique_ptr<User> user_;
  std::vector<server::SmsMessage> sms_;
  std::vector<SessionTimeline> timelines_;
  std::vector<Bytes> relay_traffic_;
};

/// Result of driving many sessions through one adversary mode.
struct CampaignResult {
  std::uint64_t attempts = 0;
  std::uint64_t sessions = 0;
  std::uint64_t executions = 0;
  std::uint64_t forgeries = 0;
  std::uint64_t device_auth_failures = 0;
  std::uint64_t replays_dropped = 0;
};

/// Repeats patient sessions under `adversary` until it has made at least
/// `attempts` attempts. `base` supplies device, registry and patient.
CampaignResult run_campaign(WorldConfig base, AdversaryConfig adversary, std::uint64_t attempts);

}  // namespace imdauth::simnet
