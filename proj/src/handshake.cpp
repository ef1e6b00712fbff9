#include "imdauth/handshake.hpp"

#include <algorithm>
#include <stdexcept>

namespace imdauth::dtls {

namespace {

constexpr std::string_view kClientFinished = "client finished";
constexpr std::string_view kServerFinished = "server finished";

// State the engine keeps besides the PSK, identity and the stored flight:
// two randoms, SHA-256 state (32 chaining + 64 block + 16 length/counters),
// master secret, key block, verify-data scratch, sequence counters and the
// replay window.
constexpr std::size_t kFixedStateBytes = 2 * kRandomSize + 112 + kMasterSecretSize + 40 + kVerifyDataSize + 32;

Bytes build_aad(std::uint16_t epoch, std::uint64_t sequence, ContentType type, std::size_t length) {
  ByteWriter w;
  w.u16(epoch);
  w.u48(sequence);
  w.u8(static_cast<std::uint8_t>(type));
  w.u16(kProtocolVersion);
  w.u16(static_cast<std::uint16_t>(length));
  return std::move(w).take();
}

template <std::size_t N>
Bytes concat(const std::array<std::uint8_t, N>& a, const std::array<std::uint8_t, N>& b) {
  Bytes out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

std::uint64_t hmac_cost(std::size_t key_len, std::size_t message_len) {
  std::uint64_t blocks = crypto::hmac_sha256_blocks(message_len);
  if (key_len > crypto::kSha256BlockSize) blocks += crypto::sha256_blocks(key_len);
  return blocks;
}

std::optional<AlertDescription> alert_for(Failure reason) {
  switch (reason) {
    case Failure::unknown_psk_identity: return AlertDescription::unknown_psk_identity;
    case Failure::bad_finished: return AlertDescription::bad_record_mac;
    case Failure::unexpected_message:
    case Failure::budget_exceeded:
    case Failure::negotiation_failed:
    case Failure::decode_error: return AlertDescription::handshake_failure;
    case Failure::none:
    case Failure::peer_alert:
    case Failure::timeout:
    case Failure::aborted: return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Start: return "Start";
    case Phase::AwaitServerHello: return "AwaitServerHello";
    case Phase::AwaitServerHelloDone: return "AwaitServerHelloDone";
    case Phase::AwaitCCSFinished: return "AwaitCCSFinished";
    case Phase::AwaitClientKeyExchange: return "AwaitClientKeyExchange";
    case Phase::AwaitClientCCSFinished: return "AwaitClientCCSFinished";
    case Phase::Established: return "Established";
    case Phase::Failed: return "Failed";
  }
  return "?";
}

std::string_view to_string(Failure failure) {
  switch (failure) {
    case Failure::none: return "none";
    case Failure::unknown_psk_identity: return "unknown_psk_identity";
    case Failure::bad_finished: return "bad_finished";
    case Failure::unexpected_message: return "unexpected_message";
    case Failure::budget_exceeded: return "budget_exceeded";
    case Failure::negotiation_failed: return "negotiation_failed";
    case Failure::decode_error: return "decode_error";
    case Failure::peer_alert: return "peer_alert";
    case Failure::timeout: return "timeout";
    case Failure::aborted: return "aborted";
  }
  return "?";
}

std::string_view to_string(OpenStatus status) {
  switch (status) {
    case OpenStatus::ok: return "ok";
    case OpenStatus::auth_failure: return "auth_failure";
    case OpenStatus::replay_detected: return "replay_detected";
  }
  return "?";
}

bool operator==(const SessionKeys& a, const SessionKeys& b) noexcept {
  return a.client_write_key == b.client_write_key && a.server_write_key == b.server_write_key &&
         constant_time_equal(a.client_salt, b.client_salt) && constant_time_equal(a.server_salt, b.server_salt) &&
         constant_time_equal(a.master_secret, b.master_secret);
}

Bytes psk_premaster(BytesView psk) {
  ByteWriter w;
  w.u16(static_cast<std::uint16_t>(psk.size()));
  for (std::size_t i = 0; i < psk.size(); ++i) w.u8(0);
  w.u16(static_cast<std::uint16_t>(psk.size()));
  w.bytes(psk);
  return std::move(w).take();
}

MasterSecret derive_master_secret(BytesView psk, const Random& client_random, const Random& server_random) {
  if (psk.size() < kMinPskSize || psk.size() > kMaxPskSize) throw std::invalid_argument("psk must be 16..32 bytes");
  const Bytes out =
      crypto::tls_prf_sha256(psk_premaster(psk), "master secret", concat(client_random, server_random), 48);
  MasterSecret m{};
  std::copy(out.begin(), out.end(), m.begin());
  return m;
}

SessionKeys derive_key_block(const MasterSecret& master, const Random& client_random, const Random& server_random) {
  const Bytes block = crypto::tls_prf_sha256(master, "key expansion", concat(server_random, client_random), 40);
  const BytesView v(block);
  SessionKeys keys;
  keys.client_write_key = crypto::Key128::from(v.subspan(0, 16));
  keys.server_write_key = crypto::Key128::from(v.subspan(16, 16));
  std::copy_n(v.begin() + 32, 4, keys.client_salt.begin());
  std::copy_n(v.begin() + 36, 4, keys.server_salt.begin());
  keys.master_secret = master;
  return keys;
}

VerifyData finished_verify_data(const MasterSecret& master, const crypto::Digest256& transcript_digest,
                                std::string_view label) {
  const Bytes out = crypto::tls_prf_sha256(master, label, transcript_digest.view(), kVerifyDataSize);
  VerifyData v{};
  std::copy(out.begin(), out.end(), v.begin());
  return v;
}

Record channel_seal(const SessionKeys& keys, Direction direction, std::uint64_t sequence, ContentType type,
                    BytesView payload) {
  const bool c2s = direction == Direction::client_to_server;
  const auto& key = c2s ? keys.client_write_key : keys.server_write_key;
  const auto& salt = c2s ? keys.client_salt : keys.server_salt;
  const auto nonce = crypto::Nonce96::for_record(salt, 1, sequence);
  const auto sealed = crypto::aead_seal(key, nonce, build_aad(1, sequence, type, payload.size()), payload);

  Record r;
  r.type = type;
  r.epoch = 1;
  r.sequence = sequence;
  r.payload.reserve(kSealOverhead + payload.size());
  append(r.payload, nonce.explicit_part);
  append(r.payload, sealed.ciphertext);
  append(r.payload, sealed.tag);
  return r;
}

OpenResult channel_open(const SessionKeys& keys, Direction direction, ReplayWindow& window, const Record& record) {
  if (record.epoch != 1 || record.payload.size() < kSealOverhead) return {OpenStatus::auth_failure, {}};
  if (!window.is_fresh(record.sequence)) return {OpenStatus::replay_detected, {}};

  const bool c2s = direction == Direction::client_to_server;
  const auto& key = c2s ? keys.client_write_key : keys.server_write_key;
  const auto& salt = c2s ? keys.client_salt : keys.server_salt;

  const BytesView p(record.payload);
  crypto::Nonce96 nonce;
  nonce.salt = salt;
  std::copy_n(p.begin(), crypto::kExplicitNonceSize, nonce.explicit_part.begin());
  crypto::AeadSealed sealed;
  const auto body = p.subspan(crypto::kExplicitNonceSize, p.size() - kSealOverhead);
  sealed.ciphertext.assign(body.begin(), body.end());
  std::copy_n(p.end() - crypto::kTagSize, crypto::kTagSize, sealed.tag.begin());

  auto plain = crypto::aead_open(key, nonce, build_aad(1, record.sequence, record.type, body.size()), sealed);
  if (!plain) return {OpenStatus::auth_failure, {}};
  window.mark(record.sequence);
  return {OpenStatus::ok, std::move(*plain)};
}

// ---------------------------------------------------------------------------

Endpoint::Endpoint(Role role, Rng rng) : role_(role), rng_(std::move(rng)) {}

Endpoint Endpoint::client(Bytes psk_identity, Bytes psk, Rng rng) {
  if (psk_identity.size() > kMaxIdentitySize) throw std::invalid_argument("psk identity longer than 32 bytes");
  if (psk.size() < kMinPskSize || psk.size() > kMaxPskSize) throw std::invalid_argument("psk must be 16..32 bytes");
  Endpoint e(Role::client, std::move(rng));
  e.identity_ = std::move(psk_identity);
  e.psk_ = std::move(psk);
  e.update_buffer(0);
  return e;
}

Endpoint Endpoint::server(PskLookup lookup, Rng rng) {
  if (!lookup) throw std::invalid_argument("server endpoint needs a PSK lookup");
  Endpoint e(Role::server, std::move(rng));
  e.lookup_ = std::move(lookup);
  e.phase_ = Phase::Start;
  e.update_buffer(0);
  return e;
}

void Endpoint::update_buffer(std::size_t incoming) {
  std::size_t flight_bytes = 0;
  for (const auto& f : flight_) flight_bytes += f.plaintext.size();
  buffer_used_ = kFixedStateBytes + psk_.size() + identity_.size() + flight_bytes + incoming;
  high_water_ = std::max(high_water_, buffer_used_);
}

void Endpoint::add_transcript(const HandshakeMessage& m) {
  const Bytes encoded = encode_handshake(m);
  const std::uint64_t before = transcript_.bytes_absorbed();
  usage_.sha_blocks += (before + encoded.size()) / crypto::kSha256BlockSize - before / crypto::kSha256BlockSize;
  transcript_.update(encoded);
}

crypto::Digest256 Endpoint::transcript_digest() {
  const std::uint64_t pending = transcript_.bytes_absorbed() % crypto::kSha256BlockSize;
  usage_.sha_blocks += pending + 9 > crypto::kSha256BlockSize ? 2 : 1;
  return transcript_.peek();
}

Bytes Endpoint::metered_prf(BytesView secret, std::string_view label, BytesView seed, std::size_t n) {
  const std::size_t label_seed = label.size() + seed.size();
  const std::uint64_t rounds = (n + crypto::kDigestSize - 1) / crypto::kDigestSize;
  usage_.sha_blocks += hmac_cost(secret.size(), label_seed) + (rounds - 1) * hmac_cost(secret.size(), 32) +
                       rounds * hmac_cost(secret.size(), 32 + label_seed);
  return crypto::tls_prf_sha256(secret, label, seed, n);
}

void Endpoint::meter_aead(std::size_t plaintext_len, std::size_t aad_len) {
  usage_.aes_blocks += (plaintext_len + 15) / 16 + 1;
  usage_.aes_bits += (plaintext_len + aad_len) * 8;
}

void Endpoint::derive_keys(BytesView psk) {
  const Bytes premaster = psk_premaster(psk);
  const Bytes ms = metered_prf(premaster, "master secret", concat(client_random_, server_random_), 48);
  MasterSecret master{};
  std::copy(ms.begin(), ms.end(), master.begin());
  // Same split as derive_key_block(); metered here.
  const Bytes kb = metered_prf(master, "key expansion", concat(server_random_, client_random_), 40);
  const BytesView v(kb);
  SessionKeys keys;
  keys.client_write_key = crypto::Key128::from(v.subspan(0, 16));
  keys.server_write_key = crypto::Key128::from(v.subspan(16, 16));
  std::copy_n(v.begin() + 32, 4, keys.client_salt.begin());
  std::copy_n(v.begin() + 36, 4, keys.server_salt.begin());
  keys.master_secret = master;
  keys_ = keys;
}

VerifyData Endpoint::verify_data(std::string_view label) {
  const auto digest = transcript_digest();
  const Bytes out = metered_prf(keys_->master_secret, label, digest.view(), kVerifyDataSize);
  VerifyData v{};
  std::copy(out.begin(), out.end(), v.begin());
  return v;
}

HandshakeMessage Endpoint::next_message(HandshakeType type, Bytes body) {
  return HandshakeMessage{type, next_send_seq_++, std::move(body)};
}

std::vector<Record> Endpoint::encode_flight() {
  std::vector<Record> out;
  const Direction dir = role_ == Role::client ? Direction::client_to_server : Direction::server_to_client;
  for (const auto& entry : flight_) {
    Record r;
    if (entry.epoch == 0) {
      r = Record{entry.type, 0, record_seq_[0]++, entry.plaintext};
    } else {
      r = channel_seal(*keys_, dir, record_seq_[1]++, entry.type, entry.plaintext);
      meter_aead(entry.plaintext.size(), 13);
    }
    sent_.records += 1;
    sent_.payload_bytes += r.payload.size();
    sent_.wire_bytes += r.wire_size();
    out.push_back(std::move(r));
  }
  return out;
}

StepResult Endpoint::fail(Failure reason) {
  phase_ = Phase::Failed;
  failure_ = reason;
  flight_.clear();
  StepResult result;
  result.event = HandshakeEvent::failed;
  if (const auto alert = alert_for(reason)) {
    Record r{ContentType::alert, 0, record_seq_[0]++, Bytes{2, static_cast<std::uint8_t>(*alert)}};
    sent_.records += 1;
    sent_.payload_bytes += r.payload.size();
    sent_.wire_bytes += r.wire_size();
    result.out.push_back(std::move(r));
  }
  return result;
}

void Endpoint::abort(Failure reason) {
  if (phase_ == Phase::Failed) return;
  phase_ = Phase::Failed;
  failure_ = reason;
  flight_.clear();
}

StepResult Endpoint::resend_flight() {
  StepResult r;
  r.out = encode_flight();
  r.retransmitted = true;
  return r;
}

std::vector<Record> Endpoint::start() {
  if (role_ != Role::client || phase_ != Phase::Start) throw std::logic_error("start() requires a client in Start");
  fill_random(rng_, client_random_);

  ByteWriter body;
  body.u16(kProtocolVersion);
  body.bytes(client_random_);
  body.u8(0);  // session_id
  body.u8(0);  // cookie
  body.u16(2);
  body.u16(kCipherSuite);
  body.u8(1);
  body.u8(0);  // null compression
  const auto hello = next_message(HandshakeType::client_hello, std::move(body).take());
  add_transcript(hello);

  flight_ = {FlightEntry{ContentType::handshake, 0, encode_handshake(hello)}};
  phase_ = Phase::AwaitServerHello;
  update_buffer(0);
  return encode_flight();
}

std::vector<Record> Endpoint::retransmit() {
  if (phase_ == Phase::Failed || flight_.empty()) return {};
  return encode_flight();
}

StepResult Endpoint::on_record(const Record& record) {
  if (phase_ == Phase::Failed) return {};
  update_buffer(record.wire_size());
  if (buffer_used_ > kBufferBudget) return fail(Failure::budget_exceeded);

  StepResult result;
  switch (record.type) {
    case ContentType::alert: {
      if (record.epoch == 0) {
        result = fail(Failure::peer_alert);
      } else if (keys_) {
        if (open(record).status == OpenStatus::ok) result = fail(Failure::peer_alert);
      }
      break;
    }
    case ContentType::change_cipher_spec: {
      const bool well_formed = record.epoch == 0 && record.payload == Bytes{1};
      const bool expecting = phase_ == Phase::AwaitCCSFinished || phase_ == Phase::AwaitClientCCSFinished;
      if (well_formed && expecting) {
        peer_ccs_ = true;
      } else if (!(well_formed && (peer_ccs_ || phase_ == Phase::Established))) {
        result = fail(Failure::unexpected_message);
      }
      break;
    }
    case ContentType::handshake: {
      if (record.epoch == 0) {
        std::vector<HandshakeMessage> messages;
        try {
          messages = decode_handshakes(record.payload);
        } catch (const DecodeError&) {
          result = fail(Failure::decode_error);
          break;
        }
        result = on_handshake_messages(std::move(messages), false);
        break;
      }
      if (!keys_ || (!peer_ccs_ && phase_ != Phase::Established)) {
        result = fail(Failure::unexpected_message);
        break;
      }
      const Direction peer = role_ == Role::client ? Direction::server_to_client : Direction::client_to_server;
      meter_aead(record.payload.size() >= kSealOverhead ? record.payload.size() - kSealOverhead : 0, 13);
      auto opened = channel_open(*keys_, peer, epoch1_window_, record);
      if (opened.status == OpenStatus::replay_detected) break;
      if (opened.status == OpenStatus::auth_failure) {
        if (phase_ != Phase::Established) result = fail(Failure::bad_finished);
        break;
      }
      std::vector<HandshakeMessage> messages;
      try {
        messages = decode_handshakes(opened.payload);
      } catch (const DecodeError&) {
        result = fail(Failure::decode_error);
        break;
      }
      result = on_handshake_messages(std::move(messages), true);
      break;
    }
    case ContentType::application_data:
      break;
  }
  update_buffer(0);
  return result;
}

StepResult Endpoint::on_handshake_messages(std::vector<HandshakeMessage> messages, bool from_epoch1) {
  StepResult total;
  for (const auto& m : messages) {
    if (m.message_seq < next_recv_seq_) {
      const bool resend_point = role_ == Role::server && m.message_seq == peer_flight_last_seq_ &&
                                (phase_ == Phase::AwaitClientKeyExchange || phase_ == Phase::Established);
      if (resend_point && !total.retransmitted) {
        auto again = resend_flight();
        for (auto& r : again.out) total.out.push_back(std::move(r));
        total.retransmitted = true;
      }
      continue;
    }
    if (m.message_seq > next_recv_seq_) continue;  // no reassembly buffer; peer retransmits

    StepResult step = role_ == Role::client ? client_message(m, from_epoch1) : server_message(m, from_epoch1);
    for (auto& r : step.out) total.out.push_back(std::move(r));
    if (step.event != HandshakeEvent::none) {
      total.event = step.event;
      if (step.event == HandshakeEvent::failed) break;
    }
  }
  return total;
}

StepResult Endpoint::client_message(const HandshakeMessage& m, bool from_epoch1) {
  switch (phase_) {
    case Phase::AwaitServerHello: {
      if (m.type != HandshakeType::server_hello || from_epoch1) return fail(Failure::unexpected_message);
      try {
        ByteReader in(m.body);
        if (in.u16() != kProtocolVersion) return fail(Failure::negotiation_failed);
        const auto random = in.bytes(kRandomSize);
        std::copy(random.begin(), random.end(), server_random_.begin());
        in.bytes(in.u8());  // session_id
        if (in.u16() != kCipherSuite) return fail(Failure::negotiation_failed);
        if (in.u8() != 0) return fail(Failure::negotiation_failed);
        if (!in.empty()) return fail(Failure::decode_error);
      } catch (const DecodeError&) {
        return fail(Failure::decode_error);
      }
      add_transcript(m);
      ++next_recv_seq_;
      phase_ = Phase::AwaitServerHelloDone;
      return {};
    }
    case Phase::AwaitServerHelloDone: {
      if (m.type != HandshakeType::server_hello_done || from_epoch1 || !m.body.empty())
        return fail(Failure::unexpected_message);
      add_transcript(m);
      ++next_recv_seq_;
      derive_keys(psk_);

      ByteWriter cke_body;
      cke_body.u16(static_cast<std::uint16_t>(identity_.size()));
      cke_body.bytes(identity_);
      const auto cke = next_message(HandshakeType::client_key_exchange, std::move(cke_body).take());
      add_transcript(cke);
      const auto vd = verify_data(kClientFinished);
      const auto fin = next_message(HandshakeType::finished, Bytes(vd.begin(), vd.end()));
      add_transcript(fin);

      flight_ = {FlightEntry{ContentType::handshake, 0, encode_handshake(cke)},
                 FlightEntry{ContentType::change_cipher_spec, 0, Bytes{1}},
                 FlightEntry{ContentType::handshake, 1, encode_handshake(fin)}};
      write_epoch_ = 1;
      phase_ = Phase::AwaitCCSFinished;
      StepResult r;
      r.out = encode_flight();
      return r;
    }
    case Phase::AwaitCCSFinished: {
      if (m.type != HandshakeType::finished || !from_epoch1) return fail(Failure::unexpected_message);
      const auto expected = verify_data(kServerFinished);
      if (!constant_time_equal(expected, m.body)) return fail(Failure::bad_finished);
      add_transcript(m);
      ++next_recv_seq_;
      phase_ = Phase::Established;
      flight_.clear();
      StepResult r;
      r.event = HandshakeEvent::established;
      return r;
    }
    default:
      return fail(Failure::unexpected_message);
  }
}

StepResult Endpoint::server_message(const HandshakeMessage& m, bool from_epoch1) {
  switch (phase_) {
    case Phase::Start: {
      if (m.type != HandshakeType::client_hello || from_epoch1) return fail(Failure::unexpected_message);
      bool suite_offered = false;
      try {
        ByteReader in(m.body);
        if (in.u16() != kProtocolVersion) return fail(Failure::negotiation_failed);
        const auto random = in.bytes(kRandomSize);
        std::copy(random.begin(), random.end(), client_random_.begin());
        in.bytes(in.u8());  // session_id
        in.bytes(in.u8());  // cookie
        const std::uint16_t suites_len = in.u16();
        if (suites_len % 2 != 0) return fail(Failure::decode_error);
        for (std::uint16_t i = 0; i < suites_len / 2; ++i) suite_offered |= in.u16() == kCipherSuite;
        const auto compression = in.bytes(in.u8());
        if (std::find(compression.begin(), compression.end(), 0) == compression.end())
          return fail(Failure::negotiation_failed);
        if (!in.empty()) return fail(Failure::decode_error);
      } catch (const DecodeError&) {
        return fail(Failure::decode_error);
      }
      if (!suite_offered) return fail(Failure::negotiation_failed);
      add_transcript(m);
      next_recv_seq_ = m.message_seq + 1;
      peer_flight_last_seq_ = m.message_seq;
      fill_random(rng_, server_random_);

      ByteWriter sh_body;
      sh_body.u16(kProtocolVersion);
      sh_body.bytes(server_random_);
      sh_body.u8(0);  // session_id
      sh_body.u16(kCipherSuite);
      sh_body.u8(0);
      const auto sh = next_message(HandshakeType::server_hello, std::move(sh_body).take());
      const auto shd = next_message(HandshakeType::server_hello_done, {});
      add_transcript(sh);
      add_transcript(shd);

      Bytes packed = encode_handshake(sh);
      append(packed, encode_handshake(shd));
      flight_ = {FlightEntry{ContentType::handshake, 0, std::move(packed)}};
      phase_ = Phase::AwaitClientKeyExchange;
      StepResult r;
      r.out = encode_flight();
      return r;
    }
    case Phase::AwaitClientKeyExchange: {
      if (m.type != HandshakeType::client_key_exchange || from_epoch1) return fail(Failure::unexpected_message);
      Bytes identity;
      try {
        ByteReader in(m.body);
        const auto id = in.bytes(in.u16());
        if (!in.empty() || id.size() > kMaxIdentitySize) return fail(Failure::decode_error);
        identity.assign(id.begin(), id.end());
      } catch (const DecodeError&) {
        return fail(Failure::decode_error);
      }
      identity_ = identity;
      auto psk = lookup_(identity);
      if (!psk || psk->size() < kMinPskSize || psk->size() > kMaxPskSize)
        return fail(Failure::unknown_psk_identity);
      add_transcript(m);
      ++next_recv_seq_;
      derive_keys(*psk);
      flight_.clear();
      phase_ = Phase::AwaitClientCCSFinished;
      return {};
    }
    case Phase::AwaitClientCCSFinished: {
      if (m.type != HandshakeType::finished || !from_epoch1) return fail(Failure::unexpected_message);
      const auto expected = verify_data(kClientFinished);
      if (!constant_time_equal(expected, m.body)) return fail(Failure::bad_finished);
      add_transcript(m);
      ++next_recv_seq_;
      peer_flight_last_seq_ = m.message_seq;

      const auto vd = verify_data(kServerFinished);
      const auto fin = next_message(HandshakeType::finished, Bytes(vd.begin(), vd.end()));
      add_transcript(fin);
      flight_ = {FlightEntry{ContentType::change_cipher_spec, 0, Bytes{1}},
                 FlightEntry{ContentType::handshake, 1, encode_handshake(fin)}};
      write_epoch_ = 1;
      phase_ = Phase::Established;
      StepResult r;
      r.out = encode_flight();
      r.event = HandshakeEvent::established;
      return r;
    }
    default:
      return fail(Failure::unexpected_message);
  }
}

Record Endpoint::seal(ContentType type, BytesView payload) {
  if (phase_ != Phase::Established) throw std::logic_error("seal() requires an established session");
  const Direction dir = role_ == Role::client ? Direction::client_to_server : Direction::server_to_client;
  meter_aead(payload.size(), 13);
  return channel_seal(*keys_, dir, record_seq_[1]++, type, payload);
}

OpenResult Endpoint::open(const Record& record) {
  if (!keys_ || phase_ == Phase::Failed) return {OpenStatus::auth_failure, {}};
  const Direction peer = role_ == Role::client ? Direction::server_to_client : Direction::client_to_server;
  meter_aead(record.payload.size() >= kSealOverhead ? record.payload.size() - kSealOverhead : 0, 13);
  return channel_open(*keys_, peer, epoch1_window_, record);
}

}  // namespace imdauth::dtls
