#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "imdauth/bytes.hpp"

// DTLS 1.2 record and handshake-message framing. Wire layout is documented
// in docs/wire.md.
namespace imdauth::dtls {

inline constexpr std::uint16_t kProtocolVersion = 0xFEFD;
inline constexpr std::uint16_t kCipherSuite = 0x00A8;  // TLS_PSK_WITH_AES_128_GCM_SHA256
inline constexpr std::size_t kRecordHeaderSize = 13;
inline constexpr std::size_t kHandshakeHeaderSize = 12;
inline constexpr std::uint64_t kMaxSequence = 0xffffffffffffULL;

enum class ContentType : std::uint8_t {
  change_cipher_spec = 20,
  alert = 21,
  handshake = 22,
  application_data = 23,
};

enum class HandshakeType : std::uint8_t {
  client_hello = 1,
  server_hello = 2,
  server_hello_done = 14,
  client_key_exchange = 16,
  finished = 20,
};

enum class AlertDescription : std::uint8_t {
  bad_record_mac = 20,
  handshake_failure = 40,
  unknown_psk_identity = 115,
};

std::string_view to_string(ContentType type);
std::string_view to_string(AlertDescription alert);

struct Record {
  ContentType type = ContentType::handshake;
  std::uint16_t epoch = 0;
  std::uint64_t sequence = 0;  // 48 bits on the wire
  Bytes payload;

  std::size_t wire_size() const { return kRecordHeaderSize + payload.size(); }
  friend bool operator==(const Record&, const Record&) = default;
};

void encode_record(ByteWriter& out, const Record& record);
Bytes encode_datagram(std::span<const Record> records);

/// Splits a datagram into records. Throws DecodeError on any framing
/// problem (bad version, unknown content type, truncated length).
std::vector<Record> decode_datagram(BytesView datagram);

struct HandshakeMessage {
  HandshakeType type = HandshakeType::client_hello;
  std::uint16_t message_seq = 0;
  Bytes body;
};

void encode_handshake(ByteWriter& out, const HandshakeMessage& message);
Bytes encode_handshake(const HandshakeMessage& message);

/// Parses the handshake messages packed into one record payload.
/// Fragmented messages are rejected.
std::vector<HandshakeMessage> decode_handshakes(BytesView payload);

}  // namespace imdauth::dtls
