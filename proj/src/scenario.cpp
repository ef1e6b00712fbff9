#include "imdauth/scenario.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>

namespace imdauth::scenario {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using sim::SimTime;

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"scenario", {"name", "seed", "registry", "run_until_s", "trace"}},
      {"device",
       {"identity", "psk", "wake_pattern", "wake_match", "second_factor", "second_factor_window_s",
        "max_failed_attempts", "lockout_s", "radio_on_in_idle", "retransmit_timeout_s", "max_retransmits",
        "overhead_ms", "idle_w", "active_w", "aes_j_per_bit", "sha_j_per_bit", "spi_bps", "lclk_hz",
        "debounce_ticks", "gap_threshold_ticks", "pattern_timeout_ticks", "tolerance_ticks"}},
      {"user",
       {"enabled", "identity", "credential", "dose", "start_s", "sessions", "interval_s", "reaction_s", "otp",
        "check_dose", "wake_pattern", "press_ticks", "short_gap_ticks", "long_gap_ticks"}},
      {"ble", {"loss", "delay_ms", "jitter_ms", "bandwidth_bps"}},
      {"cell", {"loss", "delay_ms", "jitter_ms", "bandwidth_bps"}},
      {"sms", {"delay_s"}},
      {"server", {"otp_min", "otp_max", "session_timeout_s", "daily_window_h"}},
      {"adversary",
       {"mode", "target", "rate", "max_actions", "replay_buffer", "replay_replace", "inject_per_frame", "spam_count",
        "spam_start_s", "spam_duration_s"}},
      {"expect",
       {"outcome", "outcomes", "executions", "latency_s", "latency_tol", "active_energy_uj", "energy_tol",
        "total_energy_pj", "total_energy_pj_min", "final_state", "log_records", "device_auth_failures", "lockouts",
        "handshake_payload_max", "sms_refused"}},
  };
  return s;
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  template <typename T>
  std::optional<T> opt(const std::string& section, const std::string& key) const {
    const auto* sec = tree_.get_child_optional(section).get_ptr();
    if (!sec) return std::nullopt;
    const auto raw = sec->get_optional<std::string>(key);
    if (!raw) return std::nullopt;
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (raw->find('-') != std::string::npos)
        throw ParseError("[" + section + "] " + key + ": bad value '" + *raw + "'");
    }
    try {
      return sec->get<T>(key);
    } catch (const pt::ptree_error&) {
      throw ParseError("[" + section + "] " + key + ": bad value '" + *raw + "'");
    }
  }

  template <typename T>
  T get(const std::string& section, const std::string& key, T fallback) const {
    return opt<T>(section, key).value_or(fallback);
  }

  template <typename T>
  T req(const std::string& section, const std::string& key) const {
    auto v = opt<T>(section, key);
    if (!v) throw ParseError("[" + section + "] " + key + " is required");
    return *v;
  }

  SimTime seconds(const std::string& section, const std::string& key, SimTime fallback) const {
    auto v = opt<double>(section, key);
    return v ? sim::from_seconds(*v) : fallback;
  }

  SimTime millis(const std::string& section, const std::string& key, SimTime fallback) const {
    auto v = opt<double>(section, key);
    return v ? sim::from_millis(*v) : fallback;
  }

 private:
  const pt::ptree& tree_;
};

sim::LinkConfig read_link(const Reader& r, const std::string& section, sim::LinkConfig c) {
  c.loss_rate = r.get(section, "loss", c.loss_rate);
  c.delay = r.millis(section, "delay_ms", c.delay);
  c.jitter = r.millis(section, "jitter_ms", c.jitter);
  c.bandwidth_bps = r.get(section, "bandwidth_bps", c.bandwidth_bps);
  return c;
}

tapcode::TapPattern read_pattern(const std::string& section, const std::string& key, const std::string& text) {
  try {
    return tapcode::TapPattern::parse(text);
  } catch (const tapcode::PatternError& e) {
    throw ParseError("[" + section + "] " + key + ": " + e.what());
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  boost::split(parts, text, boost::is_any_of(","));
  for (auto& p : parts) boost::trim(p);
  parts.erase(std::remove(parts.begin(), parts.end(), std::string()), parts.end());
  return parts;
}

std::string join(const std::vector<std::string>& v) { return boost::join(v, ","); }

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(6);
  o << v;
  return o.str();
}

}  // namespace

Scenario parse(const std::string& text, const std::string& base_dir, const std::vector<std::string>& overrides) {
  pt::ptree tree;
  {
    std::istringstream in(text);
    try {
      pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
      throw ParseError(std::string("scenario: ") + e.what());
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw ParseError("override '" + o + "' is not section.key=value");
    tree.put(pt::ptree::path_type(o.substr(0, eq), '.'), o.substr(eq + 1));
  }
  for (const auto& [section, body] : tree) {
    auto it = schema().find(section);
    if (it == schema().end()) {
      if (body.empty()) throw ParseError("key '" + section + "' outside any section");
      throw ParseError("unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw ParseError("unknown key [" + section + "] " + key);
      if (!value.empty()) throw ParseError("[" + section + "] " + key + ": nested value");
    }
  }

  const Reader r(tree);
  Scenario s;
  s.name = r.get<std::string>("scenario", "name", "scenario");
  auto& w = s.world;
  w.seed = r.get<std::uint64_t>("scenario", "seed", 1);
  w.tracing = r.get("scenario", "trace", true);
  if (auto until = r.opt<double>("scenario", "run_until_s")) s.run_until = sim::from_seconds(*until);

  const auto registry_path = r.req<std::string>("scenario", "registry");
  try {
    const fs::path p(registry_path);
    w.registry = server::Registry::load(p.is_absolute() ? p.string() : (fs::path(base_dir) / p).string());
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }

  // device
  auto& d = w.device;
  const auto identity = r.req<std::string>("device", "identity");
  const auto* patient = w.registry.find(identity);
  d.psk_identity = to_bytes(identity);
  if (auto psk = r.opt<std::string>("device", "psk")) {
    try {
      d.psk = from_hex(*psk);
    } catch (const DecodeError&) {
      throw ParseError("[device] psk is not hex");
    }
  } else if (patient) {
    d.psk = patient->psk;
  } else {
    throw ParseError("[device] identity '" + identity + "' is not in the registry and no psk is given");
  }
  if (auto p = r.opt<std::string>("device", "wake_pattern")) d.wake_pattern = read_pattern("device", "wake_pattern", *p);
  const auto match = r.get<std::string>("device", "wake_match", "exact");
  if (match == "exact") {
    d.wake_match = device::WakeMatch::exact;
  } else if (match == "count") {
    d.wake_match = device::WakeMatch::count;
  } else {
    throw ParseError("[device] wake_match must be exact or count");
  }
  d.second_factor_enabled = r.get("device", "second_factor", patient ? patient->second_factor : true);
  d.second_factor_window = r.seconds("device", "second_factor_window_s", d.second_factor_window);
  d.max_failed_attempts = r.get("device", "max_failed_attempts", d.max_failed_attempts);
  d.lockout = r.seconds("device", "lockout_s", d.lockout);
  d.radio_on_in_idle = r.get("device", "radio_on_in_idle", d.radio_on_in_idle);
  d.retransmit_timeout = r.seconds("device", "retransmit_timeout_s", d.retransmit_timeout);
  d.max_retransmits = r.get("device", "max_retransmits", d.max_retransmits);
  d.cost.overhead = r.millis("device", "overhead_ms", d.cost.overhead);
  d.power.idle_w = r.get("device", "idle_w", d.power.idle_w);
  d.power.active_w = r.get("device", "active_w", d.power.active_w);
  d.power.aes_j_per_bit = r.get("device", "aes_j_per_bit", d.power.aes_j_per_bit);
  d.power.sha_j_per_bit = r.get("device", "sha_j_per_bit", d.power.sha_j_per_bit);
  d.power.spi_bps = r.get("device", "spi_bps", d.power.spi_bps);
  d.clock.lclk_hz = r.get("device", "lclk_hz", d.clock.lclk_hz);
  d.detector.debounce_ticks = r.get("device", "debounce_ticks", d.detector.debounce_ticks);
  d.detector.gap_threshold_ticks = r.get("device", "gap_threshold_ticks", d.detector.gap_threshold_ticks);
  d.detector.pattern_timeout_ticks = r.get("device", "pattern_timeout_ticks", d.detector.pattern_timeout_ticks);
  d.detector.tolerance_ticks = r.get("device", "tolerance_ticks", d.detector.tolerance_ticks);

  // user
  auto& u = w.user;
  w.user_enabled = r.get("user", "enabled", true);
  u.login.identity = r.get("user", "identity", identity);
  const auto* user_patient = w.registry.find(u.login.identity);
  u.login.credential = r.get<std::string>("user", "credential", user_patient ? user_patient->credential : "");
  u.phone = user_patient ? user_patient->phone : "";
  if (w.user_enabled) {
    u.login.dose = r.req<std::uint32_t>("user", "dose");
  }
  u.wake_pattern = d.wake_pattern;
  if (auto p = r.opt<std::string>("user", "wake_pattern")) u.wake_pattern = read_pattern("user", "wake_pattern", *p);
  u.start = r.seconds("user", "start_s", u.start);
  u.sessions = r.get("user", "sessions", u.sessions);
  u.session_interval = r.seconds("user", "interval_s", u.session_interval);
  u.reaction = r.seconds("user", "reaction_s", u.reaction);
  u.check_dose = r.get("user", "check_dose", u.check_dose);
  if (auto otp = r.opt<std::string>("user", "otp")) {
    u.otp.clear();
    try {
      for (const auto& part : split_list(*otp)) u.otp.push_back(simnet::otp_behavior_from_string(part));
    } catch (const std::invalid_argument& e) {
      throw ParseError(std::string("[user] otp: ") + e.what());
    }
  }
  u.render = tapcode::default_render(d.detector);
  u.render.press_ticks = r.get("user", "press_ticks", u.render.press_ticks);
  u.render.short_gap_ticks = r.get("user", "short_gap_ticks", u.render.short_gap_ticks);
  u.render.long_gap_ticks = r.get("user", "long_gap_ticks", u.render.long_gap_ticks);

  // links and server
  w.ble = read_link(r, "ble", w.ble);
  w.cell = read_link(r, "cell", w.cell);
  w.sms_delay = r.seconds("sms", "delay_s", w.sms_delay);
  w.server.otp_bounds.min = r.get("server", "otp_min", w.server.otp_bounds.min);
  w.server.otp_bounds.max = r.get("server", "otp_max", w.server.otp_bounds.max);
  w.server.session_timeout = r.seconds("server", "session_timeout_s", w.server.session_timeout);
  if (auto h = r.opt<double>("server", "daily_window_h")) w.server.daily_window = sim::from_seconds(*h * 3600.0);

  // adversary
  auto& a = w.adversary;
  try {
    a.mode = simnet::adversary_mode_from_string(r.get<std::string>("adversary", "mode", "honest"));
    a.target = simnet::frame_class_from_string(r.get<std::string>("adversary", "target", "any"));
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("[adversary] ") + e.what());
  }
  a.rate = r.get("adversary", "rate", a.rate);
  a.max_actions = r.get("adversary", "max_actions", a.max_actions);
  a.replay_buffer = r.get("adversary", "replay_buffer", a.replay_buffer);
  a.replay_replace = r.get("adversary", "replay_replace", a.replay_replace);
  a.inject_per_frame = r.get("adversary", "inject_per_frame", a.inject_per_frame);
  a.spam_count = r.get("adversary", "spam_count", a.spam_count);
  a.spam_start = r.seconds("adversary", "spam_start_s", a.spam_start);
  a.spam_duration = r.seconds("adversary", "spam_duration_s", a.spam_duration);

  // expectations
  auto& e = s.expect;
  e.outcome = r.opt<std::string>("expect", "outcome");
  if (auto o = r.opt<std::string>("expect", "outcomes")) e.outcomes = split_list(*o);
  e.executions = r.opt<std::uint64_t>("expect", "executions");
  e.latency_s = r.opt<double>("expect", "latency_s");
  e.latency_tol = r.get("expect", "latency_tol", e.latency_tol);
  e.active_energy_uj = r.opt<double>("expect", "active_energy_uj");
  e.energy_tol = r.get("expect", "energy_tol", e.energy_tol);
  e.total_energy_pj = r.opt<std::int64_t>("expect", "total_energy_pj");
  e.total_energy_pj_min = r.opt<std::int64_t>("expect", "total_energy_pj_min");
  e.final_state = r.opt<std::string>("expect", "final_state");
  e.log_records = r.opt<std::uint64_t>("expect", "log_records");
  e.device_auth_failures = r.opt<std::uint64_t>("expect", "device_auth_failures");
  e.lockouts = r.opt<std::uint64_t>("expect", "lockouts");
  e.handshake_payload_max = r.opt<std::uint64_t>("expect", "handshake_payload_max");
  e.sms_refused = r.opt<std::uint64_t>("expect", "sms_refused");

  try {
    d.validate();
    if (w.user_enabled) u.validate();
    a.validate();
  } catch (const std::invalid_argument& ex) {
    throw ParseError(ex.what());
  }
  for (const auto& [name, link] : {std::pair{"ble", &w.ble}, std::pair{"cell", &w.cell}}) {
    try {
      link->validate();
    } catch (const std::invalid_argument& ex) {
      throw ParseError("[" + std::string(name) + "] " + ex.what());
    }
  }
  try {
    if (w.server.otp_bounds.min < 1 || w.server.otp_bounds.min > w.server.otp_bounds.max)
      throw std::invalid_argument("server otp bounds are invalid");
    if (e.final_state && !device::state_from_string(*e.final_state))
      throw std::invalid_argument("expect final_state is not a device state");
  } catch (const std::invalid_argument& ex) {
    throw ParseError(ex.what());
  }
  return s;
}

std::string resolve_path(const std::string& path) {
  if (fs::is_regular_file(path)) return path;
  if (fs::is_regular_file(path + ".scn")) return path + ".scn";
  throw ParseError("scenario not found: " + path);
}

Scenario load(const std::string& path, const std::vector<std::string>& overrides) {
  const auto resolved = resolve_path(path);
  std::ifstream in(resolved);
  if (!in) throw ParseError("cannot open " + resolved);
  std::stringstream ss;
  ss << in.rdbuf();
  auto s = parse(ss.str(), fs::path(resolved).parent_path().string(), overrides);
  s.path = resolved;
  if (s.name == "scenario") s.name = fs::path(resolved).stem().string();
  return s;
}

// ---- report ----

namespace {

json wire(const dtls::WireStats& w) {
  return json{{"records", w.records}, {"payload_bytes", w.payload_bytes}, {"wire_bytes", w.wire_bytes}};
}

json opt_seconds(const std::optional<SimTime>& from, const std::optional<SimTime>& to) {
  if (!from || !to) return nullptr;
  return sim::to_seconds(*to - *from);
}

json timeline(const simnet::SessionTimeline& t) {
  const std::optional<SimTime> woken = t.woken;
  const auto after_ff = t.await_second_factor ? t.await_second_factor : t.notifying;
  const auto notify_end = t.executing ? t.executing : (t.lockout ? t.lockout : t.idle);
  std::string end = t.executing ? "Executing" : (t.lockout ? "Lockout" : "Idle");
  return json{
      {"woken_s", sim::to_seconds(t.woken)},
      {"radio_and_login_s", opt_seconds(woken, t.first_factor)},
      {"handshake_s", opt_seconds(t.first_factor, after_ff)},
      {"second_factor_s", opt_seconds(t.await_second_factor, t.verifying)},
      {"notify_s", opt_seconds(t.notifying, notify_end)},
      {"total_s", sim::to_seconds(t.latency())},
      {"end", end},
  };
}

bool channel_separated(simnet::World& w) {
  for (const auto& c : w.server().issued()) {
    if (c.pattern.empty()) continue;
    const auto needle = to_bytes(c.pattern);
    for (const auto& f : w.relay_traffic())
      if (std::search(f.begin(), f.end(), needle.begin(), needle.end()) != f.end()) return false;
  }
  return true;
}

std::string outcome_of(const simnet::World& w) {
  const auto& recs = w.log().records();
  return recs.empty() ? "no_session" : recs.back().outcome;
}

}  // namespace

json build_report(simnet::World& w, const std::string& name, std::optional<std::vector<Check>> checks) {
  auto& dev = w.device();
  auto& srv = w.server();
  const auto& ledger = dev.ledger();
  json r;
  r["format"] = kReportFormat;
  r["scenario"] = name;
  r["seed"] = w.config().seed;
  r["sim_time_s"] = sim::to_seconds(w.simulator().now());
  r["outcome"] = outcome_of(w);
  json outcomes = json::array();
  for (const auto& rec : w.log().records()) outcomes.push_back(rec.outcome);
  r["outcomes"] = outcomes;

  json hs;
  const auto* client = dev.handshake();
  const auto* server_ep = srv.handshake();
  hs["established"] = client && server_ep && client->established() && server_ep->established();
  hs["client"] = client ? wire(client->sent()) : json(nullptr);
  hs["server"] = server_ep ? wire(server_ep->sent()) : json(nullptr);
  const std::size_t payload = (client ? client->sent().payload_bytes : 0) + (server_ep ? server_ep->sent().payload_bytes : 0);
  const std::size_t wire_total = (client ? client->sent().wire_bytes : 0) + (server_ep ? server_ep->sent().wire_bytes : 0);
  hs["payload_bytes"] = payload;
  hs["wire_bytes"] = wire_total;
  hs["buffer_high_water"] = std::max(client ? client->buffer_high_water() : 0, server_ep ? server_ep->buffer_high_water() : 0);
  r["handshake"] = hs;

  json sessions = json::array();
  for (const auto& t : w.sessions()) sessions.push_back(timeline(t));
  r["latency"] = sessions.empty() ? json(nullptr) : sessions.front();
  r["sessions"] = sessions;

  json energy;
  energy["sim_time_s"] = sim::to_seconds(ledger.sim_time());
  energy["total_pj"] = device::to_picojoules(ledger.total_joules());
  energy["active_pj"] = device::to_picojoules(ledger.active_joules());
  energy["idle_pj"] = device::to_picojoules(ledger.state_joules(device::State::Idle));
  json by_state;
  for (auto s : device::kAllStates) by_state[std::string(device::to_string(s))] = device::to_picojoules(ledger.state_joules(s));
  energy["by_state_pj"] = by_state;
  json prims;
  for (auto p : {device::Primitive::aes, device::Primitive::sha, device::Primitive::spi})
    prims[std::string(device::to_string(p))] = {{"bits", ledger.bits(p)}, {"pj", device::to_picojoules(ledger.primitive_joules(p))}};
  energy["primitives"] = prims;
  r["energy"] = energy;

  const auto& ds = dev.stats();
  r["device"] = {
      {"final_state", device::to_string(dev.state())},
      {"executions", dev.executions().size()},
      {"wakes", ds.wakes},
      {"wake_mismatches", ds.wake_mismatches},
      {"radio_wakes", ds.radio_wakes},
      {"handshakes_established", ds.handshakes_established},
      {"handshake_failures", ds.handshake_failures},
      {"auth_failures", ds.auth_failures},
      {"replays_dropped", ds.replays_dropped},
      {"decode_errors", ds.decode_errors},
      {"protocol_errors", ds.protocol_errors},
      {"frames_ignored_idle", ds.frames_ignored_idle},
      {"otp_accepts", ds.otp_accepts},
      {"otp_rejects", ds.otp_rejects},
      {"otp_timeouts", ds.otp_timeouts},
      {"timeouts", ds.timeouts},
      {"lockouts", ds.lockouts},
  };
  const auto& ss = srv.stats();
  r["server"] = {
      {"logins", ss.logins},
      {"duplicate_logins", ss.duplicate_logins},
      {"challenges_issued", srv.issued().size()},
      {"records_dropped", ss.records_dropped},
      {"auth_failures", ss.auth_failures},
      {"replays_dropped", ss.replays_dropped},
  };

  json sms = json::array();
  for (const auto& m : w.sms()) sms.push_back({{"at_s", sim::to_seconds(m.at)}, {"to", m.to}, {"body", m.body}});
  r["sms"] = sms;

  constexpr std::size_t kMaxActions = 100;
  const auto& acts = w.adversary().actions();
  json actions = json::array();
  for (std::size_t i = 0; i < acts.size() && i < kMaxActions; ++i)
    actions.push_back({{"at_s", sim::to_seconds(acts[i].at)},
                       {"direction", simnet::to_string(acts[i].direction)},
                       {"action", acts[i].action},
                       {"bytes", acts[i].bytes}});
  r["adversary"] = {
      {"mode", simnet::to_string(w.config().adversary.mode)},
      {"attempts", w.adversary().attempts()},
      {"actions", actions},
      {"actions_omitted", acts.size() > kMaxActions ? acts.size() - kMaxActions : 0},
  };

  const auto chain = server::TransactionLog::verify(w.log().lines());
  r["log"] = {
      {"records", w.log().size()},
      {"chain_ok", chain.ok},
      {"head", w.log().size() ? w.log().records().back().digest : std::string(server::TransactionLog::kGenesis)},
  };
  json forg = json::array();
  for (const auto& f : w.forgeries()) forg.push_back({{"execution", f.execution}, {"reason", f.reason}});
  r["forgeries"] = forg;
  r["channel_separated"] = channel_separated(w);

  if (checks) {
    json exp = json::array();
    bool pass = true;
    for (const auto& c : *checks) {
      exp.push_back({{"name", c.name}, {"expected", c.expected}, {"actual", c.actual}, {"pass", c.pass}});
      pass = pass && c.pass;
    }
    r["expectations"] = exp;
    r["pass"] = pass;
  }
  return r;
}

std::vector<Check> evaluate(simnet::World& w, const Expectations& e) {
  std::vector<Check> out;
  auto add = [&](std::string name, std::string expected, std::string actual, bool pass) {
    out.push_back({std::move(name), std::move(expected), std::move(actual), pass});
  };
  auto exact = [&](std::string name, const auto& expected, const auto& actual) {
    std::ostringstream a, b;
    a << expected;
    b << actual;
    add(std::move(name), a.str(), b.str(), expected == actual);
  };

  const auto forgeries = w.forgeries().size();
  exact("forgeries", std::size_t{0}, forgeries);
  const auto chain = server::TransactionLog::verify(w.log().lines());
  add("log_chain", "ok", chain.ok ? "ok" : "bad at " + std::to_string(chain.bad_index), chain.ok);
  const bool separated = channel_separated(w);
  add("channel_separation", "true", separated ? "true" : "false", separated);

  if (e.outcome) exact("outcome", *e.outcome, outcome_of(w));
  if (e.outcomes) {
    std::vector<std::string> got;
    for (const auto& rec : w.log().records()) got.push_back(rec.outcome);
    add("outcomes", join(*e.outcomes), join(got), got == *e.outcomes);
  }
  if (e.executions) exact("executions", *e.executions, std::uint64_t{w.device().executions().size()});
  if (e.latency_s) {
    const double got = w.sessions().empty() ? 0.0 : sim::to_seconds(w.sessions().front().latency());
    add("latency_s", fmt(*e.latency_s) + " +-" + fmt(e.latency_tol * 100) + "%", fmt(got),
        std::abs(got - *e.latency_s) <= e.latency_tol * *e.latency_s);
  }
  if (e.active_energy_uj) {
    const double got = w.device().ledger().active_joules() * 1e6;
    add("active_energy_uj", fmt(*e.active_energy_uj) + " +-" + fmt(e.energy_tol * 100) + "%", fmt(got),
        std::abs(got - *e.active_energy_uj) <= e.energy_tol * *e.active_energy_uj);
  }
  if (e.total_energy_pj) exact("total_energy_pj", *e.total_energy_pj, device::to_picojoules(w.device().ledger().total_joules()));
  if (e.total_energy_pj_min) {
    const auto got = device::to_picojoules(w.device().ledger().total_joules());
    add("total_energy_pj_min", ">= " + std::to_string(*e.total_energy_pj_min), std::to_string(got),
        got >= *e.total_energy_pj_min);
  }
  if (e.final_state) exact("final_state", *e.final_state, std::string(device::to_string(w.device().state())));
  if (e.log_records) exact("log_records", *e.log_records, std::uint64_t{w.log().size()});
  if (e.device_auth_failures) exact("device_auth_failures", *e.device_auth_failures, w.device().stats().auth_failures);
  if (e.lockouts) exact("lockouts", *e.lockouts, w.device().stats().lockouts);
  if (e.handshake_payload_max) {
    const auto* c = w.device().handshake();
    const auto* s = w.server().handshake();
    const std::uint64_t got = (c ? c->sent().payload_bytes : 0) + (s ? s->sent().payload_bytes : 0);
    add("handshake_payload_bytes", "<= " + std::to_string(*e.handshake_payload_max), std::to_string(got),
        got <= *e.handshake_payload_max);
  }
  if (e.sms_refused) exact("sms_refused", *e.sms_refused, w.user() ? w.user()->challenges_refused() : 0);
  return out;
}

RunResult run(const Scenario& s) {
  simnet::World w(s.world);
  w.run(s.run_until);
  RunResult r;
  r.checks = evaluate(w, s.expect);
  r.pass = std::all_of(r.checks.begin(), r.checks.end(), [](const Check& c) { return c.pass; });
  r.report = build_report(w, s.name, r.checks);
  r.trace = w.simulator().trace_text();
  return r;
}

std::string format_text(const json& r) {
  std::ostringstream o;
  o << "scenario " << r["scenario"].get<std::string>() << " (seed " << r["seed"].get<std::uint64_t>() << ")\n";
  o << "  outcome      " << r["outcome"].get<std::string>() << "\n";
  const auto& hs = r["handshake"];
  o << "  handshake    " << (hs["established"].get<bool>() ? "established" : "not established") << ", "
    << hs["payload_bytes"].get<std::uint64_t>() << " B payload, " << hs["wire_bytes"].get<std::uint64_t>()
    << " B on the wire\n";
  if (!r["latency"].is_null()) {
    const auto& l = r["latency"];
    o << "  latency      " << fmt(l["total_s"].get<double>()) << " s (ends " << l["end"].get<std::string>() << ")\n";
    for (const char* k : {"radio_and_login_s", "handshake_s", "second_factor_s", "notify_s"})
      if (!l[k].is_null()) o << "    " << k << " " << fmt(l[k].get<double>()) << "\n";
  }
  const auto& e = r["energy"];
  o << "  energy       total " << e["total_pj"].get<std::int64_t>() << " pJ, active " << e["active_pj"].get<std::int64_t>()
    << " pJ over " << fmt(e["sim_time_s"].get<double>()) << " s\n";
  o << "  device       " << r["device"]["final_state"].get<std::string>() << ", "
    << r["device"]["executions"].get<std::uint64_t>() << " execution(s)\n";
  o << "  adversary    " << r["adversary"]["mode"].get<std::string>() << ", "
    << r["adversary"]["attempts"].get<std::uint64_t>() << " action(s)\n";
  o << "  log          " << r["log"]["records"].get<std::uint64_t>() << " record(s), chain "
    << (r["log"]["chain_ok"].get<bool>() ? "ok" : "BROKEN") << "\n";
  if (r.contains("expectations")) {
    for (const auto& c : r["expectations"])
      o << "  " << (c["pass"].get<bool>() ? "ok  " : "FAIL") << " " << c["name"].get<std::string>() << ": expected "
        << c["expected"].get<std::string>() << ", got " << c["actual"].get<std::string>() << "\n";
    o << (r["pass"].get<bool>() ? "PASS" : "FAIL") << "\n";
  }
  return o.str();
}

SimTime calibrate_overhead(Scenario s, SimTime target) {
  s.world.device.cost.overhead = SimTime{0};
  s.world.tracing = false;
  simnet::World w(s.world);
  w.run(s.run_until);
  if (w.sessions().empty() || !w.sessions().front().executing)
    throw std::runtime_error("calibration scenario did not reach Executing");
  const auto base = w.sessions().front().latency();
  if (base > target) throw std::runtime_error("calibration target is below the uncalibrated latency");
  return target - base;
}

}  // namespace imdauth::scenario
