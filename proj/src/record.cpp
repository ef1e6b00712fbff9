#include "imdauth/record.hpp"

namespace imdauth::dtls {

std::string_view to_string(ContentType type) {
  switch (type) {
    case ContentType::change_cipher_spec: return "ccs";
    case ContentType::alert: return "alert";
    case ContentType::handshake: return "handshake";
    case ContentType::application_data: return "appdata";
  }
  return "unknown";
}

std::string_view to_string(AlertDescription alert) {
  switch (alert) {
    case AlertDescription::bad_record_mac: return "bad_record_mac";
    case AlertDescription::handshake_failure: return "handshake_failure";
    case AlertDescription::unknown_psk_identity: return "unknown_psk_identity";
  }
  return "unknown";
}

void encode_record(ByteWriter& out, const Record& record) {
  if (record.payload.size() > 0xffff) throw std::length_error("record payload too large");
  out.u8(static_cast<std::uint8_t>(record.type));
  out.u16(kProtocolVersion);
  out.u16(record.epoch);
  out.u48(record.sequence & kMaxSequence);
  out.u16(static_cast<std::uint16_t>(record.payload.size()));
  out.bytes(record.payload);
}

Bytes encode_datagram(std::span<const Record> records) {
  ByteWriter out;
  for (const auto& r : records) encode_record(out, r);
  return std::move(out).take();
}

namespace {
bool known_content_type(std::uint8_t t) {
  return t == 20 || t == 21 || t == 22 || t == 23;
}
bool known_handshake_type(std::uint8_t t) {
  return t == 1 || t == 2 || t == 14 || t == 16 || t == 20;
}
}  // namespace

std::vector<Record> decode_datagram(BytesView datagram) {
  ByteReader in(datagram);
  std::vector<Record> records;
  while (!in.empty()) {
    const std::uint8_t type = in.u8();
    if (!known_content_type(type)) throw DecodeError("unknown content type");
    if (in.u16() != kProtocolVersion) throw DecodeError("unsupported record version");
    Record r;
    r.type = static_cast<ContentType>(type);
    r.epoch = in.u16();
    r.sequence = in.u48();
    const std::uint16_t len = in.u16();
    const auto payload = in.bytes(len);
    r.payload.assign(payload.begin(), payload.end());
    records.push_back(std::move(r));
  }
  return records;
}

void encode_handshake(ByteWriter& out, const HandshakeMessage& message) {
  const auto len = static_cast<std::uint32_t>(message.body.size());
  out.u8(static_cast<std::uint8_t>(message.type));
  out.u24(len);
  out.u16(message.message_seq);
  out.u24(0);    // fragment_offset
  out.u24(len);  // fragment_length
  out.bytes(message.body);
}

Bytes encode_handshake(const HandshakeMessage& message) {
  ByteWriter out;
  encode_handshake(out, message);
  return std::move(out).take();
}

std::vector<HandshakeMessage> decode_handshakes(BytesView payload) {
  ByteReader in(payload);
  std::vector<HandshakeMessage> messages;
  while (!in.empty()) {
    const std::uint8_t type = in.u8();
    if (!known_handshake_type(type)) throw DecodeError("unknown handshake type");
    const std::uint32_t len = in.u24();
    HandshakeMessage m;
    m.type = static_cast<HandshakeType>(type);
    m.message_seq = in.u16();
    const std::uint32_t frag_offset = in.u24();
    const std::uint32_t frag_len = in.u24();
    if (frag_offset != 0 || frag_len != len) throw DecodeError("fragmented handshake message");
    const auto body = in.bytes(len);
    m.body.assign(body.begin(), body.end());
    messages.push_back(std::move(m));
  }
  if (messages.empty()) throw DecodeError("empty handshake record");
  return messages;
}

}  // namespace imdauth::dtls
