#include "imdauth/server.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>
#include <sstream>

#include "imdauth/crypto.hpp"

namespace imdauth::server {

// ---- registry ----

namespace {

template <typename T>
T get_required(const boost::property_tree::ptree& section, const std::string& id, const std::string& key) {
  auto v = section.get_optional<T>(key);
  if (!v) throw std::invalid_argument("registry: [" + id + "] missing or bad '" + key + "'");
  return *v;
}

}  // namespace

Registry Registry::parse(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw std::invalid_argument("registry: " + std::string(e.what()));
  }
  Registry reg;
  for (const auto& [id, section] : tree) {
    if (section.empty()) throw std::invalid_argument("registry: top-level key '" + id + "' outside a section");
    PatientRecord p;
    p.psk_identity = id;
    try {
      p.psk = from_hex(get_required<std::string>(section, id, "psk"));
    } catch (const DecodeError&) {
      throw std::invalid_argument("registry: [" + id + "] psk is not hex");
    }
    p.credential = get_required<std::string>(section, id, "credential");
    p.prescription.min_dose = get_required<std::uint32_t>(section, id, "min_dose");
    p.prescription.max_dose = get_required<std::uint32_t>(section, id, "max_dose");
    p.prescription.max_daily_doses = get_required<std::uint32_t>(section, id, "max_daily_doses");
    p.prescription.units = section.get<std::string>("units", "units");
    p.phone = get_required<std::string>(section, id, "phone");
    p.second_factor = section.get<bool>("second_factor", true);
    reg.add(std::move(p));
  }
  return reg;
}

Registry Registry::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("registry: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void Registry::add(PatientRecord record) {
  if (record.psk_identity.empty() || record.psk_identity.size() > dtls::kMaxIdentitySize)
    throw std::invalid_argument("registry: identity must be 1..32 bytes");
  if (record.psk.size() < dtls::kMinPskSize || record.psk.size() > dtls::kMaxPskSize)
    throw std::invalid_argument("registry: [" + record.psk_identity + "] psk must be 16..32 bytes");
  if (record.prescription.min_dose > record.prescription.max_dose)
    throw std::invalid_argument("registry: [" + record.psk_identity + "] min_dose > max_dose");
  if (!patients_.emplace(record.psk_identity, record).second)
    throw std::invalid_argument("registry: duplicate identity " + record.psk_identity);
}

const PatientRecord* Registry::find(std::string_view identity) const {
  auto it = patients_.find(identity);
  return it == patients_.end() ? nullptr : &it->second;
}

// ---- policy ----

std::string_view to_string(PolicyVerdict v) {
  switch (v) {
    case PolicyVerdict::ok: return "ok";
    case PolicyVerdict::below_min: return "below_min";
    case PolicyVerdict::above_max: return "above_max";
    case PolicyVerdict::daily_limit: return "daily_limit";
  }
  return "?";
}

PolicyVerdict check_policy(const Prescription& p, std::uint32_t dose, std::size_t executed_in_window) {
  if (dose < p.min_dose) return PolicyVerdict::below_min;
  if (dose > p.max_dose) return PolicyVerdict::above_max;
  if (executed_in_window >= p.max_daily_doses) return PolicyVerdict::daily_limit;
  return PolicyVerdict::ok;
}

// ---- transaction log ----

namespace {

constexpr std::string_view kDigestKey = ",\"digest\":\"";

std::string body_text(const TransactionRecord& r) {
  nlohmann::ordered_json j;
  j["seq"] = r.seq;
  j["timestamp_ns"] = r.timestamp_ns;
  j["psk_identity"] = r.psk_identity;
  j["requested_dose"] = r.requested_dose;
  j["policy_verdict"] = r.policy_verdict;
  j["first_factor"] = r.first_factor;
  j["second_factor"] = r.second_factor;
  j["otp_pattern"] = r.otp_pattern;
  j["outcome"] = r.outcome;
  j["prev"] = r.prev;
  // Identities arrive from the relay and need not be UTF-8.
  return j.dump(-1, ' ', true, nlohmann::ordered_json::error_handler_t::replace);
}

}  // namespace

TransactionLog::TransactionLog(const std::string& path) {
  file_.emplace(path, std::ios::out | std::ios::trunc);
  if (!*file_) throw StorageFailure("cannot open transaction log " + path);
}

const TransactionRecord& TransactionLog::append(TransactionRecord record) {
  record.seq = records_.size();
  record.prev = records_.empty() ? std::string(kGenesis) : records_.back().digest;
  std::string body = body_text(record);
  record.digest = crypto::sha256(as_view(body)).hex();
  body.pop_back();  // closing brace
  std::string line = body + std::string(kDigestKey) + record.digest + "\"}";
  if (file_) {
    *file_ << line << '\n';
    file_->flush();
    if (!*file_) throw StorageFailure("transaction log write failed");
  }
  lines_.push_back(std::move(line));
  records_.push_back(std::move(record));
  return records_.back();
}

std::vector<TransactionRecord> TransactionLog::read(const std::function<bool(const TransactionRecord&)>& filter) const {
  std::vector<TransactionRecord> out;
  for (const auto& r : records_)
    if (!filter || filter(r)) out.push_back(r);
  return out;
}

TransactionRecord TransactionLog::parse_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  TransactionRecord r;
  r.seq = j.at("seq").get<std::uint64_t>();
  r.timestamp_ns = j.at("timestamp_ns").get<std::int64_t>();
  r.psk_identity = j.at("psk_identity").get<std::string>();
  r.requested_dose = j.at("requested_dose").get<std::uint32_t>();
  r.policy_verdict = j.at("policy_verdict").get<std::string>();
  r.first_factor = j.at("first_factor").get<std::string>();
  r.second_factor = j.at("second_factor").get<std::string>();
  r.otp_pattern = j.at("otp_pattern").get<std::string>();
  r.outcome = j.at("outcome").get<std::string>();
  r.prev = j.at("prev").get<std::string>();
  r.digest = j.at("digest").get<std::string>();
  return r;
}

ChainCheck TransactionLog::verify(const std::vector<std::string>& lines) {
  std::string prev(kGenesis);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    const auto pos = line.rfind(kDigestKey);
    if (pos == std::string::npos || line.size() != pos + kDigestKey.size() + 64 + 2 ||
        line.compare(line.size() - 2, 2, "\"}") != 0)
      return {false, i, "digest field missing"};
    const std::string digest = line.substr(pos + kDigestKey.size(), 64);
    const std::string body = line.substr(0, pos) + "}";
    if (crypto::sha256(as_view(body)).hex() != digest) return {false, i, "digest mismatch"};
    TransactionRecord r;
    try {
      r = parse_line(line);
    } catch (const std::exception&) {
      return {false, i, "unparseable entry"};
    }
    if (r.prev != prev) return {false, i, "chain link mismatch"};
    if (r.seq != i) return {false, i, "sequence mismatch"};
    prev = digest;
  }
  return {};
}

// ---- server ----

Server::Server(sim::Simulator& sim, Registry registry, ServerConfig config, Rng rng, TransactionLog& log,
               Send to_relay, SendSms sms)
    : sim_(sim),
      registry_(std::move(registry)),
      cfg_(config),
      rng_(rng),
      log_(log),
      to_relay_(std::move(to_relay)),
      sms_(std::move(sms)) {}

const dtls::Endpoint* Server::handshake() const {
  if (session_ && session_->endpoint) return &*session_->endpoint;
  if (last_endpoint_) return &*last_endpoint_;
  return nullptr;
}

void Server::on_frame(Bytes frame) {
  if (msg::is_dtls(frame)) {
    on_dtls(frame);
    return;
  }
  msg::Control c;
  try {
    c = msg::decode_control(frame);
  } catch (const DecodeError&) {
    ++stats_.records_dropped;
    return;
  }
  if (auto* login = std::get_if<msg::Login>(&c)) on_login(*login);
}

void Server::reply(const msg::Control& c) { to_relay_(msg::encode(c)); }

TransactionRecord Server::base_record(std::string identity, std::uint32_t dose) const {
  TransactionRecord r;
  r.timestamp_ns = sim_.now().count();
  r.psk_identity = std::move(identity);
  r.requested_dose = dose;
  r.first_factor = "not_run";
  r.second_factor = "not_run";
  return r;
}

void Server::deny_and_log(const msg::Login& login, msg::DenyReason reason, std::string policy, std::string outcome) {
  auto r = base_record(login.identity, login.dose);
  r.policy_verdict = std::move(policy);
  r.outcome = std::move(outcome);
  log_.append(std::move(r));
  const auto reply_frame = msg::encode(msg::Control{msg::LoginDenied{login.login_id, reason}});
  answered_logins_[login.login_id] = reply_frame;
  to_relay_(reply_frame);
  sim_.trace("server", "login denied " + std::string(msg::to_string(reason)));
}

std::size_t Server::executed_in_window(const std::string& identity) const {
  auto it = executed_at_.find(identity);
  if (it == executed_at_.end()) return 0;
  const auto from = sim_.now() - cfg_.daily_window;
  return static_cast<std::size_t>(std::count_if(it->second.begin(), it->second.end(), [&](SimTime t) { return t > from; }));
}

void Server::on_login(const msg::Login& login) {
  if (session_ && session_->login_id == login.login_id && session_->stage != Stage::closing) {
    ++stats_.duplicate_logins;
    reply(msg::LoginOk{login.login_id});
    return;
  }
  if (auto it = answered_logins_.find(login.login_id); it != answered_logins_.end()) {
    ++stats_.duplicate_logins;
    to_relay_(it->second);
    return;
  }
  ++stats_.logins;
  if (session_ && session_->stage != Stage::closing) {
    deny_and_log(login, msg::DenyReason::busy, "not_checked", "busy");
    return;
  }
  const PatientRecord* patient = registry_.find(login.identity);
  if (!patient) {
    deny_and_log(login, msg::DenyReason::unknown_identity, "not_checked", "unknown_identity");
    return;
  }
  if (!constant_time_equal(as_view(login.credential), as_view(patient->credential))) {
    deny_and_log(login, msg::DenyReason::bad_credentials, "not_checked", "bad_credentials");
    return;
  }
  const auto verdict = check_policy(patient->prescription, login.dose, executed_in_window(patient->psk_identity));
  if (verdict != PolicyVerdict::ok) {
    deny_and_log(login, msg::DenyReason::policy_violation, std::string(to_string(verdict)), "policy_violation");
    return;
  }

  if (session_ && session_->endpoint) last_endpoint_ = std::move(session_->endpoint);
  if (session_ && session_->timeout) sim_.cancel(session_->timeout);
  session_.emplace();
  session_->login_id = login.login_id;
  session_->patient = patient;
  session_->dose = login.dose;
  session_->generation = ++generation_;
  const std::string identity = patient->psk_identity;
  const Bytes psk = patient->psk;
  session_->endpoint.emplace(dtls::Endpoint::server(
      [identity, psk](BytesView id) -> std::optional<Bytes> {
        if (std::string(id.begin(), id.end()) == identity) return psk;
        return std::nullopt;
      },
      Rng(rng_())));
  const auto gen = session_->generation;
  session_->timeout = sim_.schedule_in(cfg_.session_timeout, [this, gen] {
    if (!session_ || session_->generation != gen) return;
    session_->timeout = 0;
    if (session_->stage == Stage::closing) {
      last_endpoint_ = std::move(session_->endpoint);
      session_.reset();
      return;
    }
    const bool established = session_->endpoint->established();
    close(established ? "established" : "timeout", established && !session_->pattern.empty() ? "timeout" : "not_run",
          "timeout");
  });
  sim_.trace("server", "login ok " + identity + " dose=" + std::to_string(login.dose));
  reply(msg::LoginOk{login.login_id});
}

void Server::send_records(std::vector<dtls::Record> records) {
  if (records.empty()) return;
  to_relay_(dtls::encode_datagram(records));
}

void Server::on_dtls(const Bytes& frame) {
  if (!session_ || !session_->endpoint) {
    ++stats_.records_dropped;
    return;
  }
  std::vector<dtls::Record> records;
  try {
    records = dtls::decode_datagram(frame);
  } catch (const DecodeError&) {
    ++stats_.records_dropped;
    return;
  }
  const auto gen = session_->generation;
  for (const auto& r : records) {
    if (!session_ || session_->generation != gen) return;
    auto& ep = *session_->endpoint;
    if (r.type == dtls::ContentType::application_data) {
      if (!ep.established()) {
        ++stats_.records_dropped;
        continue;
      }
      auto opened = ep.open(r);
      if (opened.status == dtls::OpenStatus::replay_detected) {
        ++stats_.replays_dropped;
        continue;
      }
      if (opened.status == dtls::OpenStatus::auth_failure) {
        ++stats_.auth_failures;
        continue;
      }
      on_app(opened.payload);
      continue;
    }

    const bool was_established = ep.established();
    auto step = ep.on_record(r);
    if (ep.failed()) {
      send_records(std::move(step.out));
      if (session_->stage == Stage::closing) {
        last_endpoint_ = std::move(session_->endpoint);
        sim_.cancel(session_->timeout);
        session_.reset();
        return;
      }
      const auto f = ep.failure();
      if (f == dtls::Failure::unknown_psk_identity) {
        close("unknown_psk_identity", "not_run", "unknown_identity");
      } else if (f == dtls::Failure::peer_alert && was_established) {
        close("established", "not_run", "channel_failure");
      } else {
        close(std::string(dtls::to_string(f)), "not_run", "handshake_failed");
      }
      return;
    }
    auto out = std::move(step.out);
    if (!was_established && ep.established()) {
      issue();
      auto app = ep.seal(dtls::ContentType::application_data, session_->app_payload);
      out.push_back(std::move(app));
    } else if (step.retransmitted && !session_->app_payload.empty() && session_->stage == Stage::awaiting_result) {
      out.push_back(ep.seal(dtls::ContentType::application_data, session_->app_payload));
    }
    send_records(std::move(out));
  }
}

void Server::issue() {
  auto& s = *session_;
  IssuedChallenge issued;
  issued.psk_identity = s.patient->psk_identity;
  issued.dose = s.dose;
  issued.keys = *s.endpoint->keys();
  issued.at = sim_.now();
  if (s.patient->second_factor) {
    auto otp = tapcode::generate_otp(rng_, cfg_.otp_bounds);
    s.nonce = otp.nonce;
    s.pattern = otp.pattern.to_text();
    s.app_payload = msg::encode(msg::Challenge{s.nonce, s.dose, s.pattern});
    sms_(SmsMessage{sim_.now(), s.patient->phone,
                    "Dose " + std::to_string(s.dose) + " " + s.patient->prescription.units +
                        " requested. Tap pattern: " + s.pattern});
  } else {
    fill_random(rng_, s.nonce);
    s.app_payload = msg::encode(msg::Command{s.nonce, s.dose});
  }
  issued.nonce = s.nonce;
  issued.pattern = s.pattern;
  issued_.push_back(std::move(issued));
  s.stage = Stage::awaiting_result;
  sim_.trace("server", s.pattern.empty() ? "command issued" : "challenge issued " + s.pattern);
}

void Server::on_app(const Bytes& payload) {
  msg::AppMessage m;
  try {
    m = msg::decode_app(payload);
  } catch (const DecodeError&) {
    ++stats_.records_dropped;
    return;
  }
  auto* result = std::get_if<msg::AuthResult>(&m);
  if (!result || result->nonce != session_->nonce) {
    ++stats_.records_dropped;
    return;
  }
  auto& s = *session_;
  if (s.stage == Stage::closing) {
    if (s.ack_payload) send_records({s.endpoint->seal(dtls::ContentType::application_data, *s.ack_payload)});
    return;
  }
  if (s.stage != Stage::awaiting_result) return;

  const auto verdict = result->verdict;
  s.ack_payload = msg::encode(msg::Ack{s.nonce, verdict});
  send_records({s.endpoint->seal(dtls::ContentType::application_data, *s.ack_payload)});

  const bool two_factor = !s.pattern.empty();
  std::string second = two_factor ? std::string(msg::to_string(verdict)) : "disabled";
  std::string outcome;
  std::string note;
  switch (verdict) {
    case msg::Verdict::accept:
      outcome = "executed";
      note = "Authenticated, executing dose " + std::to_string(s.dose) + " " + s.patient->prescription.units;
      executed_at_[s.patient->psk_identity].push_back(sim_.now());
      break;
    case msg::Verdict::reject:
      outcome = "denied";
      note = "Second factor rejected";
      break;
    case msg::Verdict::timeout:
      outcome = "timeout";
      note = "Second factor timed out";
      break;
  }
  if (two_factor) sms_(SmsMessage{sim_.now(), s.patient->phone, note});
  close("established", std::move(second), std::move(outcome));
}

void Server::close(std::string first_factor, std::string second_factor, std::string outcome) {
  auto& s = *session_;
  auto r = base_record(s.patient->psk_identity, s.dose);
  r.policy_verdict = "ok";
  r.first_factor = std::move(first_factor);
  r.second_factor = std::move(second_factor);
  r.otp_pattern = s.pattern;
  r.outcome = std::move(outcome);
  sim_.trace("server", "session closed " + r.outcome);
  log_.append(std::move(r));
  answered_logins_[s.login_id] = msg::encode(msg::Control{msg::LoginOk{s.login_id}});
  if (s.ack_payload && s.endpoint && !s.endpoint->failed()) {
    // Stays around to answer a retransmitted result until the timeout.
    s.stage = Stage::closing;
    return;
  }
  if (s.timeout) sim_.cancel(s.timeout);
  last_endpoint_ = std::move(s.endpoint);
  session_.reset();
}

}  // namespace imdauth::server
