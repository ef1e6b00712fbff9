#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "imdauth/energy.hpp"
#include "imdauth/handshake.hpp"
#include "imdauth/messages.hpp"
#include "imdauth/sim.hpp"
#include "imdauth/tapcode.hpp"

// The implant: touch wake-up, DTLS-PSK client, OTP verification, result
// notification and execution, with an energy ledger charged by state.
namespace imdauth::device {

enum class WakeMatch { exact, count };

struct DeviceConfig {
  tapcode::TapPattern wake_pattern = tapcode::TapPattern::uniform(4);
  WakeMatch wake_match = WakeMatch::exact;
  bool second_factor_enabled = true;
  Bytes psk_identity;
  Bytes psk;
  SimTime second_factor_window = std::chrono::seconds(30);
  std::uint32_t max_failed_attempts = 3;
  SimTime lockout = std::chrono::seconds(60);
  /// Ablation: keep the receiver on in Idle so every datagram wakes the
  /// auth unit long enough to read it.
  bool radio_on_in_idle = false;
  SimTime retransmit_timeout = std::chrono::seconds(1);
  std::uint32_t max_retransmits = 3;
  tapcode::DetectorConfig detector;
  tapcode::ClockConfig clock;
  PowerParams power;
  CostModel cost;

  void validate() const;
};

/// Transitions the state machine may take. Without the second factor the
/// device may go from FirstFactor straight to Notifying; with it,
/// Notifying is only reachable through Verifying.
bool transition_allowed(State from, State to, bool second_factor_enabled);
std::vector<std::pair<State, State>> transition_table(bool second_factor_enabled);

struct Execution {
  SimTime at{0};
  msg::Nonce nonce{};
  std::uint32_t dose = 0;
  dtls::SessionKeys keys;
  /// Challenged pattern text; empty when executed on the first factor only.
  std::string pattern;
};

struct DeviceStats {
  std::uint64_t wakes = 0;
  std::uint64_t wake_mismatches = 0;
  std::uint64_t radio_wakes = 0;
  std::uint64_t handshakes_established = 0;
  std::uint64_t handshake_failures = 0;
  std::uint64_t auth_failures = 0;
  std::uint64_t replays_dropped = 0;
  std::uint64_t decode_errors = 0;
  std::uint64_t protocol_errors = 0;
  std::uint64_t frames_ignored_idle = 0;
  std::uint64_t otp_accepts = 0;
  std::uint64_t otp_rejects = 0;
  std::uint64_t otp_timeouts = 0;
  std::uint64_t timeouts = 0;
  std::uint64_t lockouts = 0;
  std::uint64_t executions = 0;
};

class Device {
 public:
  using Transmit = std::function<void(Bytes)>;
  using TransitionHook = std::function<void(State from, State to)>;

  Device(sim::Simulator& sim, DeviceConfig config, Rng rng, Transmit tx);
  Device(const Device&) = delete;
  Device& operator=(const Device&) = delete;

  /// Touch surface level change (the detector samples it on LCLK ticks).
  void set_touch(bool level);
  /// Frame arriving from the short-range radio.
  void on_radio(Bytes frame);
  /// Brings the ledger up to the current simulated time.
  void settle();
  void on_transition(TransitionHook hook) { hook_ = std::move(hook); }

  State state() const { return state_; }
  bool radio_on() const;
  /// Woken only to clock in a frame (radio_on_in_idle ablation).
  bool woken_by_radio() const { return radio_wake_; }
  /// Touch is sampled only in Idle (wake) and AwaitSecondFactor (OTP).
  bool sampling_touch() const { return state_ == State::Idle || state_ == State::AwaitSecondFactor; }

  const EnergyLedger& ledger() const { return ledger_; }
  const DeviceConfig& config() const { return cfg_; }
  const DeviceStats& stats() const { return stats_; }
  const std::vector<Execution>& executions() const { return executions_; }
  /// Current handshake, or the most recent one after power-down.
  const dtls::Endpoint* handshake() const;
  std::uint32_t failed_attempts() const { return failed_attempts_; }
  const std::optional<tapcode::TapPattern>& last_otp_input() const { return last_otp_input_; }

 private:
  void enter(State next);
  void power_down(std::string_view why);
  void wake();
  void announce();
  void start_first_factor();
  void on_control(const Bytes& frame);
  void on_dtls(const Bytes& frame);
  void on_app(const Bytes& payload);
  void on_pattern(const tapcode::TapPattern& p);
  void verify(std::optional<tapcode::TapPattern> observed);
  void send_result();
  void finish_notify();
  void execute();
  void fatal_channel_error();

  void start_ticking();
  void stop_ticking();
  void on_tick(std::uint64_t k);

  void on_timer();

  dtls::CryptoUsage take_crypto();
  void send(Bytes frame, SimTime compute);
  void send_now(Bytes frame);
  void arm_timer();
  void cancel_timers();

  sim::Simulator& sim_;
  DeviceConfig cfg_;
  Rng rng_;
  Transmit tx_;
  TransitionHook hook_;

  State state_ = State::Idle;
  SimTime state_since_{0};
  EnergyLedger ledger_;
  DeviceStats stats_;
  std::uint64_t session_ = 0;
  bool radio_ready_ = false;
  bool radio_wake_ = false;

  bool touch_ = false;
  bool ticking_ = false;
  sim::EventId tick_event_ = 0;
  std::uint64_t current_tick_ = 0;
  tapcode::Detector detector_;

  std::optional<dtls::Endpoint> handshake_;
  std::optional<dtls::Endpoint> last_handshake_;
  dtls::CryptoUsage accounted_;
  SimTime busy_until_{0};
  sim::EventId timer_ = 0;
  sim::EventId window_timer_ = 0;
  std::uint32_t retries_ = 0;

  std::optional<tapcode::OtpChallenge> challenge_;
  std::optional<tapcode::TapPattern> last_otp_input_;
  msg::Nonce nonce_{};
  std::uint32_t dose_ = 0;
  msg::Verdict verdict_ = msg::Verdict::reject;
  std::uint32_t failed_attempts_ = 0;
  std::vector<Execution> executions_;
};

}  // namespace imdauth::device
