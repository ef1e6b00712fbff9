#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "imdauth/bytes.hpp"
#include "imdauth/crypto.hpp"
#include "imdauth/record.hpp"

// DTLS 1.2 PSK handshake as an explicitly enumerated state machine with a
// hard working-memory budget, plus the AEAD record channel it keys.
namespace imdauth::dtls {

/// Working memory available to one handshake context (2.75 KiB).
inline constexpr std::size_t kBufferBudget = 2816;
inline constexpr std::size_t kRandomSize = 32;
inline constexpr std::size_t kMasterSecretSize = 48;
inline constexpr std::size_t kVerifyDataSize = 12;
inline constexpr std::size_t kMaxIdentitySize = 32;
inline constexpr std::size_t kMinPskSize = 16;
inline constexpr std::size_t kMaxPskSize = 32;
/// explicit nonce + tag added to every sealed record
inline constexpr std::size_t kSealOverhead = crypto::kExplicitNonceSize + crypto::kTagSize;

using Random = std::array<std::uint8_t, kRandomSize>;
using MasterSecret = std::array<std::uint8_t, kMasterSecretSize>;
using VerifyData = std::array<std::uint8_t, kVerifyDataSize>;

enum class Role { client, server };

enum class Phase {
  Start,
  AwaitServerHello,
  AwaitServerHelloDone,
  AwaitCCSFinished,
  AwaitClientKeyExchange,
  AwaitClientCCSFinished,
  Established,
  Failed,
};

enum class Failure {
  none,
  unknown_psk_identity,
  bad_finished,
  unexpected_message,
  budget_exceeded,
  negotiation_failed,
  decode_error,
  peer_alert,
  timeout,
  aborted,
};

enum class HandshakeEvent { none, established, failed };

std::string_view to_string(Phase phase);
std::string_view to_string(Failure failure);

struct SessionKeys {
  crypto::Key128 client_write_key;
  crypto::Key128 server_write_key;
  std::array<std::uint8_t, crypto::kSaltSize> client_salt{};
  std::array<std::uint8_t, crypto::kSaltSize> server_salt{};
  MasterSecret master_secret{};

  friend bool operator==(const SessionKeys& a, const SessionKeys& b) noexcept;
};

enum class Direction { client_to_server, server_to_client };

/// RFC 4279 premaster: uint16(N) || N zero bytes || uint16(N) || psk.
Bytes psk_premaster(BytesView psk);
MasterSecret derive_master_secret(BytesView psk, const Random& client_random, const Random& server_random);
SessionKeys derive_key_block(const MasterSecret& master, const Random& client_random, const Random& server_random);
VerifyData finished_verify_data(const MasterSecret& master, const crypto::Digest256& transcript_digest,
                                std::string_view label);

/// Highest-seen tracking for one epoch; anything not above it is a replay.
class ReplayWindow {
 public:
  bool is_fresh(std::uint64_t sequence) const { return !seen_any_ || sequence > highest_; }
  void mark(std::uint64_t sequence) {
    seen_any_ = true;
    highest_ = sequence;
  }
  std::optional<std::uint64_t> highest() const {
    return seen_any_ ? std::optional<std::uint64_t>(highest_) : std::nullopt;
  }

 private:
  bool seen_any_ = false;
  std::uint64_t highest_ = 0;
};

enum class OpenStatus { ok, auth_failure, replay_detected };
std::string_view to_string(OpenStatus status);

struct OpenResult {
  OpenStatus status = OpenStatus::auth_failure;
  Bytes payload;
};

/// Epoch-1 record: explicit nonce (epoch || sequence) || ciphertext || tag,
/// additional data = epoch || sequence || type || version || length.
Record channel_seal(const SessionKeys& keys, Direction direction, std::uint64_t sequence, ContentType type,
                    BytesView payload);
OpenResult channel_open(const SessionKeys& keys, Direction direction, ReplayWindow& window, const Record& record);

/// Primitive work done by one endpoint, used by the device cost model.
struct CryptoUsage {
  std::uint64_t sha_blocks = 0;
  std::uint64_t aes_blocks = 0;
  std::uint64_t aes_bits = 0;

  std::uint64_t sha_bits() const { return sha_blocks * crypto::kSha256BlockSize * 8; }
  friend CryptoUsage operator-(const CryptoUsage& a, const CryptoUsage& b) {
    return {a.sha_blocks - b.sha_blocks, a.aes_blocks - b.aes_blocks, a.aes_bits - b.aes_bits};
  }
};

/// Handshake-phase traffic sent by one endpoint (handshake, CCS and alert
/// records; application data excluded).
struct WireStats {
  std::size_t records = 0;
  std::size_t payload_bytes = 0;
  std::size_t wire_bytes = 0;
};

struct StepResult {
  std::vector<Record> out;
  HandshakeEvent event = HandshakeEvent::none;
  /// Set when a duplicate peer flight made this endpoint resend its own.
  bool retransmitted = false;
};

using PskLookup = std::function<std::optional<Bytes>(BytesView identity)>;

/// One side of a DTLS-PSK handshake. Single owner; movable.
class Endpoint {
 public:
  static Endpoint client(Bytes psk_identity, Bytes psk, Rng rng);
  static Endpoint server(PskLookup lookup, Rng rng);

  /// Emits the ClientHello flight. Client only, from Start.
  std::vector<Record> start();
  /// Consumes one handshake-layer record (handshake, CCS or alert).
  /// Application data is not accepted here; use open().
  StepResult on_record(const Record& record);
  /// Re-encodes the last flight with fresh record sequence numbers.
  std::vector<Record> retransmit();
  /// Marks the context failed; later calls emit nothing.
  void abort(Failure reason);

  /// Seals application data or an alert. Requires Established.
  Record seal(ContentType type, BytesView payload);
  /// Opens an epoch-1 record from the peer, enforcing the replay window.
  OpenResult open(const Record& record);

  Role role() const { return role_; }
  Phase phase() const { return phase_; }
  Failure failure() const { return failure_; }
  bool established() const { return phase_ == Phase::Established; }
  bool failed() const { return phase_ == Phase::Failed; }
  const std::optional<SessionKeys>& keys() const { return keys_; }
  const Random& client_random() const { return client_random_; }
  const Random& server_random() const { return server_random_; }
  const Bytes& psk_identity() const { return identity_; }
  const CryptoUsage& usage() const { return usage_; }
  const WireStats& sent() const { return sent_; }
  std::size_t buffer_used() const { return buffer_used_; }
  std::size_t buffer_high_water() const { return high_water_; }

 private:
  struct FlightEntry {
    ContentType type;
    std::uint16_t epoch;
    Bytes plaintext;
  };

  Endpoint(Role role, Rng rng);

  StepResult on_handshake_messages(std::vector<HandshakeMessage> messages, bool from_epoch1);
  StepResult client_message(const HandshakeMessage& m, bool from_epoch1);
  StepResult server_message(const HandshakeMessage& m, bool from_epoch1);
  StepResult fail(Failure reason);
  StepResult resend_flight();

  void add_transcript(const HandshakeMessage& m);
  crypto::Digest256 transcript_digest();
  Bytes metered_prf(BytesView secret, std::string_view label, BytesView seed, std::size_t n);
  void meter_aead(std::size_t plaintext_len, std::size_t aad_len);
  void derive_keys(BytesView psk);
  VerifyData verify_data(std::string_view label);
  HandshakeMessage next_message(HandshakeType type, Bytes body);
  std::vector<Record> encode_flight();
  void update_buffer(std::size_t incoming);

  Role role_;
  Phase phase_ = Phase::Start;
  Failure failure_ = Failure::none;
  Rng rng_;
  Bytes identity_;
  Bytes psk_;
  PskLookup lookup_;
  Random client_random_{};
  Random server_random_{};
  crypto::Sha256 transcript_;
  std::optional<SessionKeys> keys_;
  std::uint16_t next_send_seq_ = 0;
  std::uint16_t next_recv_seq_ = 0;
  std::uint16_t write_epoch_ = 0;
  std::array<std::uint64_t, 2> record_seq_{};
  ReplayWindow epoch1_window_;
  bool peer_ccs_ = false;
  std::uint16_t peer_flight_last_seq_ = 0;
  std::vector<FlightEntry> flight_;
  CryptoUsage usage_;
  WireStats sent_;
  std::size_t buffer_used_ = 0;
  std::size_t high_water_ = 0;
};

}  // namespace imdauth::dtls
