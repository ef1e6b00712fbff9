#include "imdauth/world.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "imdauth/record.hpp"

namespace imdauth::simnet {

namespace {

template <typename E, std::size_t N>
E from_name(std::string_view name, const std::array<E, N>& all, std::string_view what) {
  for (E e : all)
    if (to_string(e) == name) return e;
  throw std::invalid_argument("unknown " + std::string(what) + " '" + std::string(name) + "'");
}

std::uint64_t uniform(Rng& rng, std::uint64_t lo, std::uint64_t hi) {
  return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng);
}

Bytes random_bytes(Rng& rng, std::size_t n) {
  Bytes b(n);
  fill_random(rng, b);
  return b;
}

}  // namespace

std::string_view to_string(AdversaryMode m) {
  switch (m) {
    case AdversaryMode::honest: return "honest";
    case AdversaryMode::passive_capture: return "passive_capture";
    case AdversaryMode::tamper: return "tamper";
    case AdversaryMode::replay: return "replay";
    case AdversaryMode::inject: return "inject";
    case AdversaryMode::wake_spam: return "wake_spam";
  }
  return "?";
}

AdversaryMode adversary_mode_from_string(std::string_view name) {
  return from_name(name,
                   std::array{AdversaryMode::honest, AdversaryMode::passive_capture, AdversaryMode::tamper,
                              AdversaryMode::replay, AdversaryMode::inject, AdversaryMode::wake_spam},
                   "adversary mode");
}

std::string_view to_string(FrameClass c) {
  switch (c) {
    case FrameClass::any: return "any";
    case FrameClass::control: return "control";
    case FrameClass::handshake: return "handshake";
    case FrameClass::app_up: return "app_up";
    case FrameClass::app_down: return "app_down";
  }
  return "?";
}

FrameClass frame_class_from_string(std::string_view name) {
  return from_name(name,
                   std::array{FrameClass::any, FrameClass::control, FrameClass::handshake, FrameClass::app_up,
                              FrameClass::app_down},
                   "frame class");
}

std::string_view to_string(Direction d) { return d == Direction::to_device ? "to_device" : "to_server"; }

std::string_view to_string(OtpBehavior b) {
  switch (b) {
    case OtpBehavior::follow: return "follow";
    case OtpBehavior::wrong: return "wrong";
    case OtpBehavior::none: return "none";
  }
  return "?";
}

OtpBehavior otp_behavior_from_string(std::string_view name) {
  return from_name(name, std::array{OtpBehavior::follow, OtpBehavior::wrong, OtpBehavior::none}, "otp behavior");
}

FrameClass classify(Direction d, BytesView frame) {
  if (!msg::is_dtls(frame)) return FrameClass::control;
  try {
    for (const auto& r : dtls::decode_datagram(frame))
      if (r.type == dtls::ContentType::application_data)
        return d == Direction::to_device ? FrameClass::app_down : FrameClass::app_up;
  } catch (const DecodeError&) {
  }
  return FrameClass::handshake;
}

// ---- adversary ----

void AdversaryConfig::validate() const {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("adversary rate must be in [0, 1]");
  if (replay_buffer == 0) throw std::invalid_argument("adversary replay_buffer must be >= 1");
  if (spam_duration.count() <= 0) throw std::invalid_argument("adversary spam_duration must be positive");
}

Adversary::Adversary(sim::Simulator& sim, AdversaryConfig config, Rng rng) : sim_(sim), cfg_(config), rng_(rng) {
  cfg_.validate();
}

bool Adversary::acting() {
  const bool draw = std::bernoulli_distribution(cfg_.rate)(rng_);
  if (cfg_.max_actions && attempts_ >= cfg_.max_actions) return false;
  return draw;
}

void Adversary::log(Direction d, std::string action, std::size_t bytes) {
  ++attempts_;
  if (sim_.tracing()) sim_.trace("adversary", std::string(to_string(d)) + " " + action);
  actions_.push_back({sim_.now(), d, std::move(action), bytes});
}

std::vector<Bytes> Adversary::filter(Direction d, Bytes frame) {
  captured_.emplace_back(d, frame);
  const FrameClass c = classify(d, frame);
  const bool eligible = cfg_.target == FrameClass::any || cfg_.target == c;
  std::vector<Bytes> out;

  switch (cfg_.mode) {
    case AdversaryMode::tamper:
      out.push_back(eligible && acting() ? tamper(d, std::move(frame)) : std::move(frame));
      break;
    case AdversaryMode::replay: {
      std::optional<Bytes> copy;
      if (eligible && acting()) copy = replay_candidate(d, c);
      if (copy) {
        log(d, std::string(cfg_.replay_replace ? "replace with " : "replay ") + std::string(to_string(c)),
            copy->size());
        if (!cfg_.replay_replace) out.push_back(frame);
        out.push_back(std::move(*copy));
      } else {
        out.push_back(frame);
      }
      replay_pool_.emplace_back(d, std::move(frame));
      if (replay_pool_.size() > cfg_.replay_buffer) replay_pool_.pop_front();
      break;
    }
    case AdversaryMode::inject:
      out.push_back(std::move(frame));
      if (acting())
        for (std::uint32_t i = 0; i < cfg_.inject_per_frame; ++i) out.push_back(forge(d));
      break;
    default:
      out.push_back(std::move(frame));
      break;
  }
  return out;
}

Bytes Adversary::tamper(Direction d, Bytes frame) {
  if (cfg_.target == FrameClass::app_up || cfg_.target == FrameClass::app_down) {
    // Aim at the sealed application record rather than its header.
    auto records = dtls::decode_datagram(frame);
    for (auto it = records.rbegin(); it != records.rend(); ++it) {
      if (it->type != dtls::ContentType::application_data || it->payload.empty()) continue;
      const auto bit = uniform(rng_, 0, it->payload.size() * 8 - 1);
      it->payload[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      log(d, "flip sealed bit " + std::to_string(bit), frame.size());
      return dtls::encode_datagram(records);
    }
  }
  const auto bit = uniform(rng_, 0, frame.size() * 8 - 1);
  frame[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
  log(d, "flip bit " + std::to_string(bit), frame.size());
  return frame;
}

std::optional<Bytes> Adversary::replay_candidate(Direction d, FrameClass c) {
  std::vector<const Bytes*> pool;
  for (const auto& [dir, f] : replay_pool_)
    if (dir == d && classify(dir, f) == c) pool.push_back(&f);
  if (pool.empty()) return std::nullopt;
  return *pool[uniform(rng_, 0, pool.size() - 1)];
}

Bytes Adversary::forge(Direction d) {
  std::vector<const Bytes*> seen;
  for (const auto& [dir, f] : captured_)
    if (dir == d) seen.push_back(&f);

  Bytes out;
  std::string what;
  switch (uniform(rng_, 0, 4)) {
    case 0:
      out = random_bytes(rng_, uniform(rng_, 1, 96));
      what = "random bytes";
      break;
    case 1: {
      dtls::Record r;
      r.type = static_cast<dtls::ContentType>(uniform(rng_, 20, 23));
      r.epoch = static_cast<std::uint16_t>(uniform(rng_, 0, 1));
      r.sequence = uniform(rng_, 0, dtls::kMaxSequence);
      r.payload = random_bytes(rng_, uniform(rng_, 0, 80));
      out = dtls::encode_datagram(std::span<const dtls::Record>(&r, 1));
      what = "forged record";
      break;
    }
    case 2: {
      msg::Control c;
      switch (uniform(rng_, 0, 5)) {
        case 0: c = msg::Ready{}; break;
        case 1: c = msg::Go{}; break;
        case 2: c = msg::Abort{static_cast<std::uint8_t>(uniform(rng_, 0, 255))}; break;
        case 3: c = msg::LoginOk{static_cast<std::uint32_t>(uniform(rng_, 0, 8))}; break;
        case 4:
          c = msg::LoginDenied{static_cast<std::uint32_t>(uniform(rng_, 0, 8)),
                               static_cast<msg::DenyReason>(uniform(rng_, 1, 4))};
          break;
        default: {
          msg::Login l;
          l.login_id = static_cast<std::uint32_t>(uniform(rng_, 0, 1u << 20));
          l.identity = "patient";
          l.credential = "guess";
          l.dose = static_cast<std::uint32_t>(uniform(rng_, 0, 100));
          c = l;
        }
      }
      out = msg::encode(c);
      what = "forged control";
      break;
    }
    default:
      if (seen.empty()) {
        out = random_bytes(rng_, uniform(rng_, 1, 64));
        what = "random bytes";
      } else {
        out = mutate(*seen[uniform(rng_, 0, seen.size() - 1)]);
        what = "mutated capture";
      }
      break;
  }
  log(d, what, out.size());
  return out;
}

Bytes Adversary::mutate(Bytes frame) {
  std::vector<dtls::Record> records;
  bool parsed = false;
  if (msg::is_dtls(frame)) {
    try {
      records = dtls::decode_datagram(frame);
      parsed = !records.empty();
    } catch (const DecodeError&) {
    }
  }
  if (parsed && uniform(rng_, 0, 1) == 0) {
    auto& r = records[uniform(rng_, 0, records.size() - 1)];
    switch (uniform(rng_, 0, 6)) {
      case 0: r.sequence = std::min<std::uint64_t>(dtls::kMaxSequence, r.sequence + uniform(rng_, 1, 1000)); break;
      case 1: r.epoch ^= 1; break;
      case 2: r.type = static_cast<dtls::ContentType>(uniform(rng_, 20, 23)); break;
      case 3:
        if (!r.payload.empty()) r.payload.resize(uniform(rng_, 0, r.payload.size() - 1));
        break;
      case 4: {
        auto extra = random_bytes(rng_, uniform(rng_, 1, 16));
        append(r.payload, extra);
        break;
      }
      case 5: records.push_back(records.front()); break;
      default:
        if (!r.payload.empty()) {
          const auto bit = uniform(rng_, 0, r.payload.size() * 8 - 1);
          r.payload[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
        }
        break;
    }
    if (uniform(rng_, 0, 3) == 0) std::reverse(records.begin(), records.end());
    return dtls::encode_datagram(records);
  }
  if (frame.empty()) return random_bytes(rng_, 1);
  switch (uniform(rng_, 0, 3)) {
    case 0: frame.resize(uniform(rng_, 0, frame.size() - 1)); break;
    case 1: {
      auto extra = random_bytes(rng_, uniform(rng_, 1, 16));
      append(frame, extra);
      break;
    }
    case 2: frame[uniform(rng_, 0, frame.size() - 1)] = static_cast<std::uint8_t>(uniform(rng_, 0, 255)); break;
    default: {
      const auto bit = uniform(rng_, 0, frame.size() * 8 - 1);
      frame[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    }
  }
  return frame;
}

Bytes Adversary::spam_frame(std::uint64_t i) {
  Bytes f;
  switch (i % 4) {
    case 0: f = msg::encode(msg::Control{msg::Go{}}); break;
    case 1: f = msg::encode(msg::Control{msg::Ready{}}); break;
    default: {
      dtls::Record r;
      r.type = i % 4 == 2 ? dtls::ContentType::handshake : dtls::ContentType::application_data;
      r.epoch = i % 4 == 2 ? 0 : 1;
      r.sequence = i;
      r.payload = random_bytes(rng_, uniform(rng_, 16, 64));
      f = dtls::encode_datagram(std::span<const dtls::Record>(&r, 1));
    }
  }
  log(Direction::to_device, "spam", f.size());
  return f;
}

// ---- phone ----

Phone::Phone(Adversary& adversary, Send to_device, Send to_server)
    : adversary_(adversary), to_device_(std::move(to_device)), to_server_(std::move(to_server)) {}

void Phone::request(LoginRequest r) {
  request_ = std::move(r);
  ++login_id_;
  verdict_.reset();
}

void Phone::out(Direction d, Bytes frame) {
  for (auto& f : adversary_.filter(d, std::move(frame))) (d == Direction::to_device ? to_device_ : to_server_)(std::move(f));
}

void Phone::from_device(Bytes frame) {
  if (msg::is_dtls(frame)) {
    out(Direction::to_server, std::move(frame));
    return;
  }
  msg::Control c;
  try {
    c = msg::decode_control(frame);
  } catch (const DecodeError&) {
    return;
  }
  if (!std::holds_alternative<msg::Ready>(c) || !request_) return;
  if (verdict_) {
    out(Direction::to_device, *verdict_);
    return;
  }
  ++stats_.logins_sent;
  out(Direction::to_server,
      msg::encode(msg::Control{msg::Login{login_id_, request_->identity, request_->credential, request_->dose}}));
}

void Phone::from_server(Bytes frame) {
  if (msg::is_dtls(frame)) {
    out(Direction::to_device, std::move(frame));
    return;
  }
  msg::Control c;
  try {
    c = msg::decode_control(frame);
  } catch (const DecodeError&) {
    return;
  }
  if (auto* ok = std::get_if<msg::LoginOk>(&c)) {
    if (ok->login_id != login_id_ || verdict_) return;
    ++stats_.gos;
    verdict_ = msg::encode(msg::Control{msg::Go{}});
    out(Direction::to_device, *verdict_);
  } else if (auto* no = std::get_if<msg::LoginDenied>(&c)) {
    if (no->login_id != login_id_ || verdict_) return;
    ++stats_.denials;
    last_denial_ = no->reason;
    verdict_ = msg::encode(msg::Control{msg::Abort{static_cast<std::uint8_t>(no->reason)}});
    out(Direction::to_device, *verdict_);
  }
}

// ---- patient ----

void UserConfig::validate() const {
  if (sessions > 0 && otp.empty()) throw std::invalid_argument("user otp behaviour list is empty");
  if (!wake_pattern.valid()) throw std::invalid_argument("user wake pattern is invalid");
  if (reaction.count() < 0 || start.count() < 0 || session_interval.count() <= 0)
    throw std::invalid_argument("user timings must be non-negative");
}

tapcode::TapPattern wrong_pattern(const tapcode::TapPattern& p) {
  tapcode::TapPattern w = p;
  if (w.tap_count < 6) {
    ++w.tap_count;
    w.gaps.push_back(tapcode::Gap::Short);
  } else {
    w.gaps.back() = w.gaps.back() == tapcode::Gap::Short ? tapcode::Gap::Long : tapcode::Gap::Short;
  }
  return w;
}

SimTime schedule_taps(sim::Simulator& sim, device::Device& device, SimTime at, const tapcode::TapPattern& pattern,
                      const tapcode::RenderConfig& render) {
  const auto& clock = device.config().clock;
  auto k = static_cast<std::uint64_t>(std::max<double>(0.0, std::floor(sim::to_seconds(at) * clock.lclk_hz)));
  while (clock.tick_time(k) < at) ++k;
  const SimTime base = clock.tick_time(k);
  const auto samples = tapcode::render_waveform(pattern, render, device.config().detector);
  for (const auto& e : tapcode::edges_from_waveform(samples, clock)) {
    sim.schedule_at(base + sim::from_millis(e.t_ms), [&device, down = e.down] { device.set_touch(down); });
  }
  return clock.tick_time(k + samples.size());
}

User::User(sim::Simulator& sim, UserConfig config, device::Device& device, Phone& phone)
    : sim_(sim), cfg_(std::move(config)), device_(device), phone_(phone) {
  cfg_.validate();
}

void User::start() {
  for (std::uint32_t i = 0; i < cfg_.sessions; ++i)
    sim_.schedule_at(cfg_.start + cfg_.session_interval * i, [this] { begin_session(); });
}

void User::begin_session() {
  ++session_;
  awaiting_otp_ = true;
  phone_.request(cfg_.login);
  if (sim_.tracing()) sim_.trace("user", "session " + std::to_string(session_) + " wake taps");
  schedule_taps(sim_, device_, sim_.now(), cfg_.wake_pattern, cfg_.render);
}

void User::on_sms(const server::SmsMessage& m) {
  if (m.to != cfg_.phone) return;
  static constexpr std::string_view kPatternTag = "Tap pattern: ";
  const auto at = m.body.find(kPatternTag);
  if (at == std::string::npos) return;
  if (!awaiting_otp_) {
    ++refused_;
    return;
  }
  awaiting_otp_ = false;
  if (cfg_.check_dose) {
    const std::string expected = "Dose " + std::to_string(cfg_.login.dose) + " ";
    if (m.body.rfind(expected, 0) != 0) {
      ++refused_;
      if (sim_.tracing()) sim_.trace("user", "dose in SMS differs, not tapping");
      return;
    }
  }
  const auto behavior = cfg_.otp[std::min<std::size_t>(session_ - 1, cfg_.otp.size() - 1)];
  if (behavior == OtpBehavior::none) return;
  tapcode::TapPattern p;
  try {
    p = tapcode::TapPattern::parse(std::string_view(m.body).substr(at + kPatternTag.size()));
  } catch (const tapcode::PatternError&) {
    ++refused_;
    return;
  }
  if (behavior == OtpBehavior::wrong) p = wrong_pattern(p);
  if (sim_.tracing()) sim_.trace("user", "taps " + p.to_text());
  schedule_taps(sim_, device_, sim_.now() + cfg_.reaction, p, cfg_.render);
}

// ---- world ----

SimTime SessionTimeline::latency() const {
  if (executing) return *executing - woken;
  if (idle) return *idle - woken;
  return SimTime{0};
}

World::World(WorldConfig config) : cfg_(std::move(config)), rng_(cfg_.seed) {
  sim_.set_tracing(cfg_.tracing);
  ble_up_ = std::make_unique<sim::Link>(sim_, "ble_up", cfg_.ble, Rng(rng_()));
  ble_down_ = std::make_unique<sim::Link>(sim_, "ble_down", cfg_.ble, Rng(rng_()));
  cell_up_ = std::make_unique<sim::Link>(sim_, "cell_up", cfg_.cell, Rng(rng_()));
  cell_down_ = std::make_unique<sim::Link>(sim_, "cell_down", cfg_.cell, Rng(rng_()));
  adversary_ = std::make_unique<Adversary>(sim_, cfg_.adversary, Rng(rng_()));

  device_ = std::make_unique<device::Device>(sim_, cfg_.device, Rng(rng_()), [this](Bytes f) {
    relay_traffic_.push_back(f);
    ble_up_->send(std::move(f), [this](Bytes g) { phone_->from_device(std::move(g)); });
  });
  device_->on_transition([this](device::State from, device::State to) { on_transition(from, to); });

  server_ = std::make_unique<server::Server>(
      sim_, cfg_.registry, cfg_.server, Rng(rng_()), log_,
      [this](Bytes f) {
        relay_traffic_.push_back(f);
        cell_down_->send(std::move(f), [this](Bytes g) { phone_->from_server(std::move(g)); });
      },
      [this](const server::SmsMessage& m) {
        sim_.schedule_in(cfg_.sms_delay, [this, m] {
          sms_.push_back(server::SmsMessage{sim_.now(), m.to, m.body});
          if (sim_.tracing()) sim_.trace("sms", m.to + " " + m.body);
          if (user_) user_->on_sms(sms_.back());
        });
      });

  phone_ = std::make_unique<Phone>(
      *adversary_,
      [this](Bytes f) {
        relay_traffic_.push_back(f);
        ble_down_->send(std::move(f), [this](Bytes g) { device_->on_radio(std::move(g)); });
      },
      [this](Bytes f) {
        relay_traffic_.push_back(f);
        cell_up_->send(std::move(f), [this](Bytes g) { server_->on_frame(std::move(g)); });
      });

  if (cfg_.user_enabled) {
    user_ = std::make_unique<User>(sim_, cfg_.user, *device_, *phone_);
    user_->start();
  }
  start_spam();
}

void World::start_spam() {
  const auto& a = cfg_.adversary;
  if (a.mode != AdversaryMode::wake_spam || a.spam_count == 0) return;
  for (std::uint64_t i = 0; i < a.spam_count; ++i) {
    const auto at = a.spam_start + SimTime(static_cast<std::int64_t>(
                                       static_cast<double>(a.spam_duration.count()) * static_cast<double>(i) /
                                       static_cast<double>(a.spam_count)));
    sim_.schedule_at(at, [this, i] {
      auto f = adversary_->spam_frame(i);
      relay_traffic_.push_back(f);
      ble_down_->send(std::move(f), [this](Bytes g) { device_->on_radio(std::move(g)); });
    });
  }
}

void World::on_transition(device::State from, device::State to) {
  using device::State;
  if (from == State::Idle && to == State::Woken) {
    if (!device_->woken_by_radio()) {
      SessionTimeline t;
      t.woken = sim_.now();
      timelines_.push_back(t);
    }
    return;
  }
  if (timelines_.empty() || timelines_.back().idle) return;
  auto& t = timelines_.back();
  const auto now = sim_.now();
  switch (to) {
    case State::FirstFactor: t.first_factor = now; break;
    case State::AwaitSecondFactor: t.await_second_factor = now; break;
    case State::Verifying: t.verifying = now; break;
    case State::Notifying: t.notifying = now; break;
    case State::Executing: t.executing = now; break;
    case State::Lockout: t.lockout = now; break;
    case State::Idle: t.idle = now; break;
    default: break;
  }
}

void World::run(std::optional<SimTime> until, std::size_t max_events) {
  if (until) {
    sim_.run_until(*until);
  } else {
    sim_.run(max_events);
  }
  device_->settle();
}

std::vector<Forgery> World::forgeries() const {
  std::vector<Forgery> out;
  const auto& issued = server_->issued();
  const auto& execs = device_->executions();
  for (std::size_t i = 0; i < execs.size(); ++i) {
    const auto& e = execs[i];
    auto it = std::find_if(issued.begin(), issued.end(), [&](const auto& c) { return c.nonce == e.nonce; });
    std::string why;
    if (it == issued.end()) {
      why = "no matching challenge was issued";
    } else if (!(it->keys == e.keys)) {
      why = "session keys differ from the server's";
    } else if (it->dose != e.dose) {
      why = "dose differs from the issued one";
    } else if (it->pattern != e.pattern) {
      why = "pattern differs from the issued one";
    } else if (cfg_.device.second_factor_enabled && e.pattern.empty()) {
      why = "executed without a second factor";
    } else if (cfg_.user_enabled && e.dose != cfg_.user.login.dose) {
      why = "dose was not requested by the patient";
    } else {
      for (std::size_t j = 0; j < i; ++j)
        if (execs[j].nonce == e.nonce) why = "challenge executed twice";
    }
    if (!why.empty()) out.push_back({i, std::move(why)});
  }
  return out;
}

CampaignResult run_campaign(WorldConfig base, AdversaryConfig adversary, std::uint64_t attempts) {
  CampaignResult r;
  const auto* patient = base.registry.find(base.user.login.identity);
  std::uint32_t daily = patient ? std::max<std::uint32_t>(1, patient->prescription.max_daily_doses) : 1;
  auto interval = std::max<SimTime>(base.user.session_interval, base.server.daily_window / daily + std::chrono::minutes(1));
  interval = std::max<SimTime>(interval, base.server.session_timeout + std::chrono::seconds(30));

  for (std::uint64_t round = 0; r.attempts < attempts; ++round) {
    WorldConfig cfg = base;
    cfg.seed = base.seed * 1'000'003ULL + round;
    cfg.adversary = adversary;
    cfg.tracing = false;
    cfg.user_enabled = true;
    cfg.user.sessions = 50;
    cfg.user.session_interval = interval;
    World w(cfg);
    w.run();
    if (w.adversary().attempts() == 0 && round > 0) throw std::runtime_error("campaign: adversary never acted");
    r.attempts += w.adversary().attempts();
    r.sessions += w.user()->sessions_started();
    r.executions += w.device().executions().size();
    r.forgeries += w.forgeries().size();
    r.device_auth_failures += w.device().stats().auth_failures;
    r.replays_dropped += w.device().stats().replays_dropped + w.server().stats().replays_dropped;
  }
  return r;
}

}  // namespace imdauth::simnet
