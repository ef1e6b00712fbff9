#include "imdauth/device.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace imdauth::device {

using dtls::ContentType;
using dtls::OpenStatus;

void DeviceConfig::validate() const {
  if (!wake_pattern.valid()) throw std::invalid_argument("wake pattern is invalid");
  if (psk.size() < dtls::kMinPskSize || psk.size() > dtls::kMaxPskSize)
    throw std::invalid_argument("psk must be 16..32 bytes");
  if (psk_identity.empty() || psk_identity.size() > dtls::kMaxIdentitySize)
    throw std::invalid_argument("psk identity must be 1..32 bytes");
  if (second_factor_window.count() <= 0 || lockout.count() < 0 || retransmit_timeout.count() <= 0)
    throw std::invalid_argument("device timers must be positive");
  if (max_failed_attempts < 1) throw std::invalid_argument("max_failed_attempts must be >= 1");
  detector.validate();
  clock.validate();
  power.validate();
  cost.validate();
}

std::vector<std::pair<State, State>> transition_table(bool second_factor_enabled) {
  std::vector<std::pair<State, State>> t = {
      {State::Idle, State::Woken},
      {State::Woken, State::FirstFactor},
      {State::Woken, State::Idle},
      {State::FirstFactor, State::Idle},
      {State::Notifying, State::Executing},
      {State::Notifying, State::Idle},
      {State::Notifying, State::Lockout},
      {State::Executing, State::Idle},
      {State::Lockout, State::Idle},
  };
  if (second_factor_enabled) {
    t.insert(t.end(), {
                          {State::FirstFactor, State::AwaitSecondFactor},
                          {State::AwaitSecondFactor, State::Verifying},
                          {State::AwaitSecondFactor, State::Idle},
                          {State::Verifying, State::Notifying},
                      });
  } else {
    t.emplace_back(State::FirstFactor, State::Notifying);
  }
  return t;
}

bool transition_allowed(State from, State to, bool second_factor_enabled) {
  const auto t = transition_table(second_factor_enabled);
  return std::find(t.begin(), t.end(), std::make_pair(from, to)) != t.end();
}

Device::Device(sim::Simulator& sim, DeviceConfig config, Rng rng, Transmit tx)
    : sim_(sim),
      cfg_(std::move(config)),
      rng_(rng),
      tx_(std::move(tx)),
      state_since_(sim.now()),
      ledger_(cfg_.power),
      detector_(cfg_.detector) {
  cfg_.validate();
}

bool Device::radio_on() const { return radio_ready_ && state_ != State::Idle && state_ != State::Lockout; }

const dtls::Endpoint* Device::handshake() const {
  if (handshake_) return &*handshake_;
  if (last_handshake_) return &*last_handshake_;
  return nullptr;
}

void Device::settle() {
  ledger_.accrue(state_, sim_.now() - state_since_);
  state_since_ = sim_.now();
}

void Device::enter(State next) {
  if (!transition_allowed(state_, next, cfg_.second_factor_enabled))
    throw std::logic_error("illegal device transition " + std::string(to_string(state_)) + " -> " +
                           std::string(to_string(next)));
  if (next == State::Executing) {
    const bool first = handshake_ && handshake_->established();
    const bool second = !cfg_.second_factor_enabled ||
                        (challenge_ && challenge_->consumed && verdict_ == msg::Verdict::accept);
    if (!first || !second) throw std::logic_error("execution without both factors");
  }
  settle();
  const State prev = state_;
  state_ = next;
  stop_ticking();
  if (sim_.tracing()) sim_.trace("device", std::string(to_string(prev)) + "->" + std::string(to_string(next)));
  if (hook_) hook_(prev, next);
  if (sampling_touch() && touch_) start_ticking();
}

void Device::cancel_timers() {
  if (timer_) sim_.cancel(timer_);
  if (window_timer_) sim_.cancel(window_timer_);
  timer_ = window_timer_ = 0;
}

void Device::arm_timer() {
  if (timer_) sim_.cancel(timer_);
  const auto session = session_;
  timer_ = sim_.schedule_in(cfg_.retransmit_timeout, [this, session] {
    if (session != session_) return;
    timer_ = 0;
    on_timer();
  });
}

void Device::on_timer() {
  if (++retries_ > cfg_.max_retransmits) {
    ++stats_.timeouts;
    switch (state_) {
      case State::Woken: power_down("no go from relay"); break;
      case State::FirstFactor:
        if (handshake_) handshake_->abort(dtls::Failure::timeout);
        power_down("handshake timeout");
        break;
      case State::Notifying: finish_notify(); break;
      default: break;
    }
    return;
  }
  switch (state_) {
    case State::Woken:
      announce();
      break;
    case State::FirstFactor: {
      auto again = handshake_->retransmit();
      if (!again.empty()) send(dtls::encode_datagram(again), cfg_.cost.compute_time(take_crypto()));
      arm_timer();
      break;
    }
    case State::Notifying:
      send_result();
      break;
    default:
      break;
  }
}

void Device::power_down(std::string_view why) {
  cancel_timers();
  if (handshake_) {
    last_handshake_ = std::move(handshake_);
    handshake_.reset();
  }
  challenge_.reset();
  radio_ready_ = false;
  radio_wake_ = false;
  ++session_;
  if (sim_.tracing()) sim_.trace("device", "power-down " + std::string(why));
  if (state_ != State::Idle) enter(State::Idle);
}

// ---- touch sampling ----

void Device::set_touch(bool level) {
  touch_ = level;
  if (level && sampling_touch() && !ticking_) start_ticking();
}

void Device::start_ticking() {
  const auto now = sim_.now();
  auto k = static_cast<std::uint64_t>(std::ceil(static_cast<double>(now.count()) * cfg_.clock.lclk_hz / 1e9));
  while (cfg_.clock.tick_time(k) < now) ++k;
  while (k > 0 && cfg_.clock.tick_time(k - 1) >= now) --k;
  detector_.reset();
  ticking_ = true;
  tick_event_ = sim_.schedule_at(cfg_.clock.tick_time(k), [this, k] { on_tick(k); });
}

void Device::stop_ticking() {
  if (ticking_) sim_.cancel(tick_event_);
  ticking_ = false;
  detector_.reset();
}

void Device::on_tick(std::uint64_t k) {
  ticking_ = false;
  if (!sampling_touch()) return;
  current_tick_ = k;
  auto emission = detector_.sample(touch_, k);
  if (auto* p = std::get_if<tapcode::TapPattern>(&emission)) {
    const State before = state_;
    on_pattern(*p);
    if (state_ != before) return;  // enter() owns the tick grid now
  }
  if (touch_ || detector_.taps_so_far() > 0) {
    ticking_ = true;
    tick_event_ = sim_.schedule_at(cfg_.clock.tick_time(k + 1), [this, k] { on_tick(k + 1); });
  }
}

void Device::on_pattern(const tapcode::TapPattern& p) {
  if (state_ == State::Idle) {
    const bool ok = cfg_.wake_match == WakeMatch::exact
                        ? tapcode::match(p, cfg_.wake_pattern) == tapcode::MatchResult::accept
                        : tapcode::match_count(p, cfg_.wake_pattern) == tapcode::MatchResult::accept;
    if (sim_.tracing()) sim_.trace("device", "touch " + p.to_text() + (ok ? " wake" : " ignored"));
    if (ok) {
      wake();
    } else {
      ++stats_.wake_mismatches;
    }
  } else if (state_ == State::AwaitSecondFactor) {
    if (sim_.tracing()) sim_.trace("device", "otp input " + p.to_text());
    verify(p);
  }
}

// ---- session flow ----

void Device::wake() {
  ++stats_.wakes;
  ++session_;
  enter(State::Woken);
  busy_until_ = sim_.now() + cfg_.cost.overhead;
  const auto session = session_;
  timer_ = sim_.schedule_at(busy_until_, [this, session] {
    if (session != session_) return;
    timer_ = 0;
    radio_ready_ = true;
    retries_ = 0;
    announce();
  });
}

void Device::announce() {
  send_now(msg::encode(msg::Control{msg::Ready{}}));
  arm_timer();
}

void Device::start_first_factor() {
  enter(State::FirstFactor);
  handshake_.emplace(dtls::Endpoint::client(cfg_.psk_identity, cfg_.psk, Rng(rng_())));
  accounted_ = {};
  auto flight = handshake_->start();
  send(dtls::encode_datagram(flight), cfg_.cost.compute_time(take_crypto()));
  retries_ = 0;
  arm_timer();
}

void Device::on_radio(Bytes frame) {
  if (state_ == State::Idle && cfg_.radio_on_in_idle) {
    // Receiver left on: the frame wakes the auth unit for as long as it
    // takes to clock it in over SPI, then the unit powers down again.
    ++stats_.radio_wakes;
    ++session_;
    radio_wake_ = true;
    enter(State::Woken);
    ledger_.debit_bits(Primitive::spi, frame.size() * 8);
    const auto session = session_;
    const auto rx = sim::from_seconds(static_cast<double>(frame.size()) * 8.0 / cfg_.power.spi_bps);
    timer_ = sim_.schedule_in(rx, [this, session] {
      if (session == session_) power_down("radio frame discarded");
    });
    return;
  }
  if (radio_wake_) {
    ledger_.debit_bits(Primitive::spi, frame.size() * 8);
    return;
  }
  if (!radio_on()) {
    ++stats_.frames_ignored_idle;
    return;
  }
  ledger_.debit_bits(Primitive::spi, frame.size() * 8);
  if (msg::is_dtls(frame)) {
    on_dtls(frame);
  } else {
    on_control(frame);
  }
}

void Device::on_control(const Bytes& frame) {
  msg::Control c;
  try {
    c = msg::decode_control(frame);
  } catch (const DecodeError&) {
    ++stats_.decode_errors;
    return;
  }
  if (std::holds_alternative<msg::Go>(c)) {
    if (state_ == State::Woken) start_first_factor();
  } else if (std::holds_alternative<msg::Abort>(c)) {
    if (state_ == State::Woken) power_down("relay abort");
  }
}

void Device::on_dtls(const Bytes& frame) {
  if (!handshake_) return;
  std::vector<dtls::Record> records;
  try {
    records = dtls::decode_datagram(frame);
  } catch (const DecodeError&) {
    ++stats_.decode_errors;
    return;
  }
  const auto session = session_;
  for (const auto& r : records) {
    if (session != session_ || !handshake_) return;
    if (r.type == ContentType::application_data) {
      if (!handshake_->established()) continue;
      auto opened = handshake_->open(r);
      busy_until_ = std::max(busy_until_, sim_.now()) + cfg_.cost.compute_time(take_crypto());
      if (opened.status == OpenStatus::replay_detected) {
        ++stats_.replays_dropped;
        if (sim_.tracing()) sim_.trace("device", "replay dropped seq=" + std::to_string(r.sequence));
        continue;
      }
      if (opened.status == OpenStatus::auth_failure) {
        fatal_channel_error();
        return;
      }
      on_app(opened.payload);
      continue;
    }

    const bool was_established = handshake_->established();
    auto step = handshake_->on_record(r);
    const auto compute = cfg_.cost.compute_time(take_crypto());
    if (handshake_->failed()) {
      ++stats_.handshake_failures;
      if (sim_.tracing())
        sim_.trace("device", "handshake failed " + std::string(dtls::to_string(handshake_->failure())));
      if (!step.out.empty()) send_now(dtls::encode_datagram(step.out));
      power_down("handshake failed");
      return;
    }
    if (!step.out.empty()) {
      send(dtls::encode_datagram(step.out), compute);
      if (state_ == State::FirstFactor) {
        retries_ = 0;
        arm_timer();
      }
    } else {
      busy_until_ = std::max(busy_until_, sim_.now()) + compute;
    }
    if (!was_established && handshake_->established()) {
      ++stats_.handshakes_established;
      if (sim_.tracing()) sim_.trace("device", "handshake established");
    }
  }
}

void Device::fatal_channel_error() {
  ++stats_.auth_failures;
  if (sim_.tracing()) sim_.trace("device", "record authentication failed");
  const auto alert = handshake_->seal(ContentType::alert,
                                     Bytes{2, static_cast<std::uint8_t>(dtls::AlertDescription::bad_record_mac)});
  take_crypto();
  send_now(dtls::encode_datagram(std::span<const dtls::Record>(&alert, 1)));
  power_down("channel authentication failure");
}

void Device::on_app(const Bytes& payload) {
  msg::AppMessage m;
  try {
    m = msg::decode_app(payload);
  } catch (const DecodeError&) {
    ++stats_.protocol_errors;
    power_down("malformed application message");
    return;
  }

  if (auto* c = std::get_if<msg::Challenge>(&m)) {
    if (state_ != State::FirstFactor) return;  // duplicate from a resent flight
    if (!cfg_.second_factor_enabled) {
      ++stats_.protocol_errors;
      power_down("challenge while second factor disabled");
      return;
    }
    tapcode::TapPattern pattern;
    try {
      pattern = tapcode::TapPattern::parse(c->pattern);
    } catch (const tapcode::PatternError&) {
      ++stats_.protocol_errors;
      power_down("malformed challenge pattern");
      return;
    }
    cancel_timers();
    challenge_ = tapcode::OtpChallenge{pattern, c->nonce,
                                       current_tick_ + cfg_.clock.ticks_in(cfg_.second_factor_window), false};
    nonce_ = c->nonce;
    dose_ = c->dose;
    last_otp_input_.reset();
    enter(State::AwaitSecondFactor);
    const auto session = session_;
    window_timer_ = sim_.schedule_in(cfg_.second_factor_window, [this, session] {
      if (session != session_) return;
      window_timer_ = 0;
      if (state_ == State::AwaitSecondFactor) verify(std::nullopt);
    });
  } else if (auto* cmd = std::get_if<msg::Command>(&m)) {
    if (state_ != State::FirstFactor) return;
    if (cfg_.second_factor_enabled) {
      // Refuses to act on a first factor alone.
      ++stats_.protocol_errors;
      power_down("command without second factor");
      return;
    }
    cancel_timers();
    nonce_ = cmd->nonce;
    dose_ = cmd->dose;
    verdict_ = msg::Verdict::accept;
    enter(State::Notifying);
    retries_ = 0;
    send_result();
  } else if (auto* ack = std::get_if<msg::Ack>(&m)) {
    if (state_ != State::Notifying || ack->nonce != nonce_) return;
    cancel_timers();
    if (ack->verdict == msg::Verdict::accept && verdict_ == msg::Verdict::accept) {
      execute();
    } else {
      finish_notify();
    }
  }
}

void Device::verify(std::optional<tapcode::TapPattern> observed) {
  if (window_timer_) sim_.cancel(window_timer_);
  window_timer_ = 0;
  enter(State::Verifying);
  if (!observed) {
    challenge_->consumed = true;
    verdict_ = msg::Verdict::timeout;
    ++stats_.otp_timeouts;
  } else {
    last_otp_input_ = observed;
    verdict_ = tapcode::verify_once(*challenge_, *observed) == tapcode::MatchResult::accept ? msg::Verdict::accept
                                                                                            : msg::Verdict::reject;
    ++(verdict_ == msg::Verdict::accept ? stats_.otp_accepts : stats_.otp_rejects);
  }
  failed_attempts_ = verdict_ == msg::Verdict::accept ? 0 : failed_attempts_ + 1;
  if (sim_.tracing()) sim_.trace("device", "verdict " + std::string(msg::to_string(verdict_)));
  enter(State::Notifying);
  retries_ = 0;
  send_result();
}

void Device::send_result() {
  const auto record =
      handshake_->seal(ContentType::application_data, msg::encode(msg::AuthResult{nonce_, verdict_}));
  send(dtls::encode_datagram(std::span<const dtls::Record>(&record, 1)), cfg_.cost.compute_time(take_crypto()));
  arm_timer();
}

void Device::finish_notify() {
  if (failed_attempts_ >= cfg_.max_failed_attempts) {
    ++stats_.lockouts;
    failed_attempts_ = 0;
    cancel_timers();
    if (handshake_) {
      last_handshake_ = std::move(handshake_);
      handshake_.reset();
    }
    challenge_.reset();
    radio_ready_ = false;
    ++session_;
    enter(State::Lockout);
    const auto session = session_;
    timer_ = sim_.schedule_in(cfg_.lockout, [this, session] {
      if (session == session_) power_down("lockout over");
    });
    return;
  }
  power_down("session closed");
}

void Device::execute() {
  enter(State::Executing);
  ++stats_.executions;
  Execution e;
  e.at = sim_.now();
  e.nonce = nonce_;
  e.dose = dose_;
  e.keys = *handshake_->keys();
  if (challenge_) e.pattern = challenge_->pattern.to_text();
  executions_.push_back(std::move(e));
  if (sim_.tracing()) sim_.trace("device", "execute dose=" + std::to_string(dose_));
  power_down("executed");
}

// ---- output and metering ----

dtls::CryptoUsage Device::take_crypto() {
  if (!handshake_) return {};
  const auto now = handshake_->usage();
  const auto delta = now - accounted_;
  accounted_ = now;
  ledger_.debit_bits(Primitive::aes, delta.aes_bits);
  ledger_.debit_bits(Primitive::sha, delta.sha_bits());
  return delta;
}

void Device::send(Bytes frame, SimTime compute) {
  busy_until_ = std::max(busy_until_, sim_.now()) + compute;
  const auto session = session_;
  sim_.schedule_at(busy_until_, [this, session, frame = std::move(frame)]() mutable {
    if (session != session_) return;
    send_now(std::move(frame));
  });
}

void Device::send_now(Bytes frame) {
  ledger_.debit_bits(Primitive::spi, frame.size() * 8);
  tx_(std::move(frame));
}

}  // namespace imdauth::device
