#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "imdauth/handshake.hpp"
#include "imdauth/messages.hpp"
#include "imdauth/sim.hpp"
#include "imdauth/tapcode.hpp"

// Server side: patient registry, prescription policy, hash-chained
// transaction log, and the per-session protocol driver.
namespace imdauth::server {

using sim::SimTime;

struct Prescription {
  std::uint32_t min_dose = 0;
  std::uint32_t max_dose = 0;
  std::uint32_t max_daily_doses = 0;
  std::string units = "units";
};

struct PatientRecord {
  std::string psk_identity;
  Bytes psk;
  std::string credential;
  Prescription prescription;
  std::string phone;
  bool second_factor = true;
};

class Registry {
 public:
  /// INI text: one [identity] section per patient. Throws
  /// std::invalid_argument with the offending key on bad input.
  static Registry parse(const std::string& text);
  static Registry load(const std::string& path);

  void add(PatientRecord record);
  const PatientRecord* find(std::string_view identity) const;
  std::size_t size() const { return patients_.size(); }

 private:
  std::map<std::string, PatientRecord, std::less<>> patients_;
};

enum class PolicyVerdict { ok, below_min, above_max, daily_limit };
std::string_view to_string(PolicyVerdict v);

PolicyVerdict check_policy(const Prescription& p, std::uint32_t dose, std::size_t executed_in_window);

struct TransactionRecord {
  std::uint64_t seq = 0;
  std::int64_t timestamp_ns = 0;
  std::string psk_identity;
  std::uint32_t requested_dose = 0;
  std::string policy_verdict;
  std::string first_factor;
  std::string second_factor;
  std::string otp_pattern;
  std::string outcome;
  std::string prev;
  std::string digest;
};

class StorageFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ChainCheck {
  bool ok = true;
  /// First entry that fails, when !ok.
  std::size_t bad_index = 0;
  std::string reason;
};

/// Append-only JSONL log. Each line's digest is SHA-256 over the line text
/// up to the digest field, and each line carries the previous digest.
class TransactionLog {
 public:
  static constexpr std::string_view kGenesis = "0000000000000000000000000000000000000000000000000000000000000000";

  TransactionLog() = default;
  /// Also appends every line to `path` (created if absent, truncated).
  explicit TransactionLog(const std::string& path);

  const TransactionRecord& append(TransactionRecord record);
  const std::vector<std::string>& lines() const { return lines_; }
  const std::vector<TransactionRecord>& records() const { return records_; }
  std::vector<TransactionRecord> read(const std::function<bool(const TransactionRecord&)>& filter = {}) const;
  std::size_t size() const { return lines_.size(); }

  static ChainCheck verify(const std::vector<std::string>& lines);
  static TransactionRecord parse_line(const std::string& line);

 private:
  std::vector<std::string> lines_;
  std::vector<TransactionRecord> records_;
  std::optional<std::ofstream> file_;
};

struct SmsMessage {
  SimTime at{0};
  std::string to;
  std::string body;
};

/// What the server handed out, for later comparison against executions.
struct IssuedChallenge {
  std::string psk_identity;
  msg::Nonce nonce{};
  std::uint32_t dose = 0;
  std::string pattern;  // empty for first-factor-only commands
  dtls::SessionKeys keys;
  SimTime at{0};
};

struct ServerConfig {
  tapcode::LengthBounds otp_bounds;
  SimTime session_timeout = std::chrono::seconds(90);
  SimTime daily_window = std::chrono::hours(24);
};

struct ServerStats {
  std::uint64_t logins = 0;
  std::uint64_t duplicate_logins = 0;
  std::uint64_t records_dropped = 0;
  std::uint64_t auth_failures = 0;
  std::uint64_t replays_dropped = 0;
  std::uint64_t handshake_bytes_sent = 0;
};

class Server {
 public:
  using Send = std::function<void(Bytes)>;
  using SendSms = std::function<void(const SmsMessage&)>;

  Server(sim::Simulator& sim, Registry registry, ServerConfig config, Rng rng, TransactionLog& log, Send to_relay,
         SendSms sms);
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Frame from the relay (control frame or DTLS datagram).
  void on_frame(Bytes frame);

  const ServerStats& stats() const { return stats_; }
  const std::vector<IssuedChallenge>& issued() const { return issued_; }
  bool session_active() const { return session_.has_value(); }
  /// Handshake of the current or most recent session.
  const dtls::Endpoint* handshake() const;

 private:
  enum class Stage { handshaking, awaiting_result, closing };

  struct Session {
    std::uint32_t login_id = 0;
    const PatientRecord* patient = nullptr;
    std::uint32_t dose = 0;
    Stage stage = Stage::handshaking;
    std::optional<dtls::Endpoint> endpoint;
    msg::Nonce nonce{};
    std::string pattern;
    Bytes app_payload;
    std::optional<Bytes> ack_payload;
    sim::EventId timeout = 0;
    std::uint64_t generation = 0;
  };

  void on_login(const msg::Login& login);
  void on_dtls(const Bytes& frame);
  void on_app(const Bytes& payload);
  void issue();
  void close(std::string first_factor, std::string second_factor, std::string outcome);
  void reply(const msg::Control& c);
  void deny_and_log(const msg::Login& login, msg::DenyReason reason, std::string policy, std::string outcome);
  TransactionRecord base_record(std::string identity, std::uint32_t dose) const;
  void send_records(std::vector<dtls::Record> records);
  std::size_t executed_in_window(const std::string& identity) const;

  sim::Simulator& sim_;
  Registry registry_;
  ServerConfig cfg_;
  Rng rng_;
  TransactionLog& log_;
  Send to_relay_;
  SendSms sms_;
  ServerStats stats_;
  std::optional<Session> session_;
  std::optional<dtls::Endpoint> last_endpoint_;
  std::map<std::uint32_t, Bytes> answered_logins_;
  std::map<std::string, std::vector<SimTime>> executed_at_;
  std::vector<IssuedChallenge> issued_;
  std::uint64_t generation_ = 0;
};

}  // namespace imdauth::server
