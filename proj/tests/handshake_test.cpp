#include <gtest/gtest.h>

#include <set>

#include "imdauth/handshake.hpp"
#include "test_util.hpp"

using namespace imdauth;
using namespace imdauth::dtls;

namespace {

const Bytes kIdentity = to_bytes("imd-0001");
const Bytes kPsk = from_hex("00112233445566778899aabbccddeeff");

PskLookup lookup_for(Bytes identity, Bytes psk) {
  return [identity, psk](BytesView id) -> std::optional<Bytes> {
    if (Bytes(id.begin(), id.end()) == identity) return psk;
    return std::nullopt;
  };
}

// Round-trips records through the datagram codec, as the network would.
std::vector<Record> wire(const std::vector<Record>& records) {
  return decode_datagram(encode_datagram(records));
}

struct Pair {
  Endpoint client;
  Endpoint server;
};

Pair make_pair(std::uint64_t seed, Bytes client_psk = kPsk, Bytes server_psk = kPsk) {
  return {Endpoint::client(kIdentity, std::move(client_psk), Rng(seed)),
          Endpoint::server(lookup_for(kIdentity, std::move(server_psk)), Rng(seed ^ 0xabcdef))};
}

// Drives both endpoints until neither has anything left to send.
void run(Pair& p) {
  auto to_server = wire(p.client.start());
  std::vector<Record> to_client;
  for (int round = 0; round < 10 && (!to_server.empty() || !to_client.empty()); ++round) {
    to_client.clear();
    for (const auto& r : to_server) {
      auto step = p.server.on_record(r);
      for (auto& o : step.out) to_client.push_back(std::move(o));
    }
    to_client = wire(to_client);
    to_server.clear();
    for (const auto& r : to_client) {
      auto step = p.client.on_record(r);
      for (auto& o : step.out) to_server.push_back(std::move(o));
    }
    to_server = wire(to_server);
  }
}

}  // namespace

TEST(KeySchedule, MatchesOracleVectors) {
  const auto v = test::load_vectors("psk_key_schedule.vec").at(0);
  const Bytes psk = test::hex_field(v, "Psk");
  Random cr{}, sr{};
  const auto crb = test::hex_field(v, "ClientRandom");
  const auto srb = test::hex_field(v, "ServerRandom");
  std::copy(crb.begin(), crb.end(), cr.begin());
  std::copy(srb.begin(), srb.end(), sr.begin());

  EXPECT_EQ(to_hex(psk_premaster(psk)), v.at("Premaster"));
  const auto master = derive_master_secret(psk, cr, sr);
  EXPECT_EQ(to_hex(master), v.at("Master"));
  EXPECT_EQ(master.size(), 48u);

  const auto keys = derive_key_block(master, cr, sr);
  EXPECT_EQ(to_hex(keys.client_write_key.view()), v.at("ClientWriteKey"));
  EXPECT_EQ(to_hex(keys.server_write_key.view()), v.at("ServerWriteKey"));
  EXPECT_EQ(to_hex(keys.client_salt), v.at("ClientSalt"));
  EXPECT_EQ(to_hex(keys.server_salt), v.at("ServerSalt"));
  EXPECT_TRUE(keys == derive_key_block(master, cr, sr));

  const auto digest = crypto::Digest256::from(test::hex_field(v, "TranscriptDigest"));
  EXPECT_EQ(to_hex(finished_verify_data(master, digest, "client finished")), v.at("ClientFinished"));
  EXPECT_EQ(to_hex(finished_verify_data(master, digest, "server finished")), v.at("ServerFinished"));
}

TEST(KeySchedule, ServerRandomChangesMaster) {
  Random cr{}, sr1{}, sr2{};
  cr.fill(1);
  sr1.fill(2);
  sr2.fill(3);
  EXPECT_NE(derive_master_secret(kPsk, cr, sr1), derive_master_secret(kPsk, cr, sr2));
  EXPECT_THROW(derive_master_secret(Bytes(15, 1), cr, sr1), std::invalid_argument);
}

TEST(KeySchedule, FreshRandomsGiveDistinctKeys) {
  Rng rng(11);
  std::set<Bytes> client_keys, server_keys, client_salts, server_salts;
  for (int i = 0; i < 1000; ++i) {
    Random cr{}, sr{};
    fill_random(rng, cr);
    fill_random(rng, sr);
    const auto keys = derive_key_block(derive_master_secret(kPsk, cr, sr), cr, sr);
    client_keys.insert(Bytes(keys.client_write_key.view().begin(), keys.client_write_key.view().end()));
    server_keys.insert(Bytes(keys.server_write_key.view().begin(), keys.server_write_key.view().end()));
    client_salts.insert(Bytes(keys.client_salt.begin(), keys.client_salt.end()));
    server_salts.insert(Bytes(keys.server_salt.begin(), keys.server_salt.end()));
  }
  EXPECT_EQ(client_keys.size(), 1000u);
  EXPECT_EQ(server_keys.size(), 1000u);
  EXPECT_EQ(client_salts.size(), 1000u);
  EXPECT_EQ(server_salts.size(), 1000u);
}

TEST(FinishedVerifyData, EveryTranscriptByteMatters) {
  MasterSecret master{};
  master.fill(0x5a);
  Rng rng(12);
  Bytes transcript(200);
  fill_random(rng, transcript);
  const auto base = finished_verify_data(master, crypto::sha256(transcript), "client finished");
  for (std::size_t i = 0; i < transcript.size(); ++i) {
    auto t = transcript;
    t[i] ^= 0x01;
    EXPECT_NE(finished_verify_data(master, crypto::sha256(t), "client finished"), base) << i;
  }
  EXPECT_NE(finished_verify_data(master, crypto::sha256(transcript), "server finished"), base);
}

TEST(ClientStart, SingleCompactClientHello) {
  auto client = Endpoint::client(kIdentity, kPsk, Rng(1));
  const auto flight = client.start();
  ASSERT_EQ(flight.size(), 1u);
  EXPECT_EQ(flight[0].type, ContentType::handshake);
  const auto msgs = decode_handshakes(flight[0].payload);
  ASSERT_EQ(msgs.size(), 1u);
  EXPECT_EQ(msgs[0].type, HandshakeType::client_hello);
  EXPECT_LE(msgs[0].body.size(), 60u);
  EXPECT_EQ(client.phase(), Phase::AwaitServerHello);
  EXPECT_THROW(client.start(), std::logic_error);
}

TEST(ClientStart, DeterministicUnderSeedAndFreshAcrossSeeds) {
  auto a = Endpoint::client(kIdentity, kPsk, Rng(7));
  auto b = Endpoint::client(kIdentity, kPsk, Rng(7));
  auto c = Endpoint::client(kIdentity, kPsk, Rng(8));
  EXPECT_EQ(encode_datagram(a.start()), encode_datagram(b.start()));
  c.start();
  EXPECT_NE(a.client_random(), c.client_random());
}

TEST(Handshake, FullExchangeAgreesOnKeys) {
  auto p = make_pair(21);
  run(p);
  ASSERT_TRUE(p.client.established());
  ASSERT_TRUE(p.server.established());
  EXPECT_TRUE(*p.client.keys() == *p.server.keys());
  EXPECT_EQ(p.server.psk_identity(), kIdentity);

  const std::size_t payload = p.client.sent().payload_bytes + p.server.sent().payload_bytes;
  const std::size_t on_wire = p.client.sent().wire_bytes + p.server.sent().wire_bytes;
  EXPECT_LE(payload, 320u);
  RecordProperty("handshake_payload_bytes", static_cast<int>(payload));
  RecordProperty("handshake_wire_bytes", static_cast<int>(on_wire));
  EXPECT_LE(p.client.buffer_high_water(), kBufferBudget);
  EXPECT_LE(p.server.buffer_high_water(), kBufferBudget);
}

TEST(Handshake, KeyAgreementOverRandomPsksAndSeeds) {
  Rng rng(99);
  for (int i = 0; i < 200; ++i) {
    Bytes psk(16 + uniform_below(rng, 17));
    fill_random(rng, psk);
    auto p = make_pair(rng(), psk, psk);
    run(p);
    ASSERT_TRUE(p.client.established() && p.server.established()) << i;
    ASSERT_TRUE(*p.client.keys() == *p.server.keys()) << i;
    ASSERT_LE(std::max(p.client.buffer_high_water(), p.server.buffer_high_water()), kBufferBudget);
  }
}

TEST(Handshake, MismatchedPskFailsAtFirstFinished) {
  auto p = make_pair(3, kPsk, from_hex("ffeeddccbbaa99887766554433221100"));
  run(p);
  EXPECT_EQ(p.server.phase(), Phase::Failed);
  EXPECT_EQ(p.server.failure(), Failure::bad_finished);
  EXPECT_FALSE(p.client.established());
  EXPECT_EQ(p.client.failure(), Failure::peer_alert);
}

TEST(Handshake, UnknownIdentityIsRejectedWithAlert) {
  auto client = Endpoint::client(to_bytes("stranger"), kPsk, Rng(4));
  auto server = Endpoint::server(lookup_for(kIdentity, kPsk), Rng(5));
  auto flight2 = server.on_record(client.start()[0]).out;
  std::vector<Record> flight3;
  for (const auto& r : flight2) {
    for (auto& o : client.on_record(r).out) flight3.push_back(std::move(o));
  }
  ASSERT_EQ(flight3.size(), 3u);
  const auto step = server.on_record(flight3[0]);
  EXPECT_EQ(step.event, HandshakeEvent::failed);
  EXPECT_EQ(server.failure(), Failure::unknown_psk_identity);
  ASSERT_EQ(step.out.size(), 1u);
  EXPECT_EQ(step.out[0].type, ContentType::alert);
  EXPECT_EQ(step.out[0].payload[1], static_cast<std::uint8_t>(AlertDescription::unknown_psk_identity));
}

TEST(Handshake, UnexpectedMessageFailsAndFailedContextIsSilent) {
  auto server = Endpoint::server(lookup_for(kIdentity, kPsk), Rng(6));
  Record ccs{ContentType::change_cipher_spec, 0, 0, Bytes{1}};
  EXPECT_EQ(server.on_record(ccs).event, HandshakeEvent::failed);
  EXPECT_EQ(server.failure(), Failure::unexpected_message);

  auto client = Endpoint::client(kIdentity, kPsk, Rng(6));
  const auto hello = client.start();
  EXPECT_TRUE(server.on_record(hello[0]).out.empty());
  EXPECT_TRUE(server.retransmit().empty());
}

TEST(Handshake, OversizedRecordExceedsBudget) {
  auto server = Endpoint::server(lookup_for(kIdentity, kPsk), Rng(7));
  HandshakeMessage big{HandshakeType::client_hello, 0, Bytes(3000, 0)};
  const auto step = server.on_record(Record{ContentType::handshake, 0, 0, encode_handshake(big)});
  EXPECT_EQ(step.event, HandshakeEvent::failed);
  EXPECT_EQ(server.failure(), Failure::budget_exceeded);
}

TEST(Handshake, RejectsClientWithoutTheSuite) {
  auto server = Endpoint::server(lookup_for(kIdentity, kPsk), Rng(8));
  ByteWriter body;
  body.u16(kProtocolVersion);
  body.bytes(Bytes(32, 7));
  body.u8(0);
  body.u8(0);
  body.u16(2);
  body.u16(0x008C);  // TLS_PSK_WITH_AES_128_CBC_SHA
  body.u8(1);
  body.u8(0);
  HandshakeMessage hello{HandshakeType::client_hello, 0, std::move(body).take()};
  server.on_record(Record{ContentType::handshake, 0, 0, encode_handshake(hello)});
  EXPECT_EQ(server.failure(), Failure::negotiation_failed);
}

TEST(Handshake, ForgedFinishedNeverAuthenticates) {
  // An adversary that knows the identity but not the PSK plays client.
  Rng rng(13);
  for (int i = 0; i < 300; ++i) {
    Bytes guess(16);
    fill_random(rng, guess);
    auto p = make_pair(rng(), guess, kPsk);
    run(p);
    EXPECT_FALSE(p.server.established());
    EXPECT_EQ(p.server.failure(), Failure::bad_finished);
  }
  // Replaying a Finished captured from another session fails too.
  auto donor = make_pair(100);
  std::vector<Record> donor_flight3;
  {
    auto f2 = donor.server.on_record(donor.client.start()[0]).out;
    for (const auto& r : f2)
      for (auto& o : donor.client.on_record(r).out) donor_flight3.push_back(std::move(o));
  }
  auto victim = make_pair(101);
  auto f2 = victim.server.on_record(victim.client.start()[0]).out;
  std::vector<Record> genuine;
  for (const auto& r : f2)
    for (auto& o : victim.client.on_record(r).out) genuine.push_back(std::move(o));
  victim.server.on_record(genuine[0]);
  victim.server.on_record(genuine[1]);
  victim.server.on_record(donor_flight3[2]);
  EXPECT_EQ(victim.server.failure(), Failure::bad_finished);
}

TEST(Handshake, LostServerFlightIsRecoveredByRetransmission) {
  auto p = make_pair(30);
  const auto hello = p.client.start();
  (void)p.server.on_record(hello[0]);  // flight 2 lost
  const auto again = p.client.retransmit();
  ASSERT_EQ(again.size(), 1u);
  EXPECT_NE(again[0].sequence, hello[0].sequence);
  const auto resend = p.server.on_record(again[0]);
  EXPECT_TRUE(resend.retransmitted);
  ASSERT_FALSE(resend.out.empty());

  std::vector<Record> flight3;
  for (const auto& r : resend.out)
    for (auto& o : p.client.on_record(r).out) flight3.push_back(std::move(o));
  for (const auto& r : flight3) (void)p.server.on_record(r);  // flight 4 lost
  ASSERT_TRUE(p.server.established());

  const auto flight3_again = p.client.retransmit();
  ASSERT_EQ(flight3_again.size(), 3u);
  std::vector<Record> flight4;
  bool retransmitted = false;
  for (const auto& r : flight3_again) {
    auto step = p.server.on_record(r);
    retransmitted |= step.retransmitted;
    for (auto& o : step.out) flight4.push_back(std::move(o));
  }
  EXPECT_TRUE(retransmitted);
  for (const auto& r : flight4) (void)p.client.on_record(r);
  EXPECT_TRUE(p.client.established());
  EXPECT_TRUE(*p.client.keys() == *p.server.keys());
}

TEST(Channel, SealOpenReplayAndTamper) {
  auto p = make_pair(40);
  run(p);
  ASSERT_TRUE(p.client.established());
  const auto& keys = *p.server.keys();

  Bytes challenge(32);
  Rng rng(41);
  fill_random(rng, challenge);
  const auto record = channel_seal(keys, Direction::server_to_client, 5, ContentType::application_data, challenge);
  EXPECT_EQ(record.epoch, 1);

  ReplayWindow window;
  auto opened = channel_open(keys, Direction::server_to_client, window, record);
  ASSERT_EQ(opened.status, OpenStatus::ok);
  EXPECT_EQ(opened.payload, challenge);
  EXPECT_EQ(channel_open(keys, Direction::server_to_client, window, record).status, OpenStatus::replay_detected);

  const auto stale = channel_seal(keys, Direction::server_to_client, 4, ContentType::application_data, challenge);
  EXPECT_EQ(channel_open(keys, Direction::server_to_client, window, stale).status, OpenStatus::replay_detected);

  // wrong direction key
  ReplayWindow other;
  EXPECT_EQ(channel_open(keys, Direction::client_to_server, other, record).status, OpenStatus::auth_failure);

  for (std::size_t bit = crypto::kExplicitNonceSize * 8; bit < record.payload.size() * 8; ++bit) {
    auto tampered = record;
    tampered.payload[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    ReplayWindow w;
    EXPECT_EQ(channel_open(keys, Direction::server_to_client, w, tampered).status, OpenStatus::auth_failure) << bit;
  }
  for (std::size_t bit = 0; bit < crypto::kExplicitNonceSize * 8; ++bit) {
    auto tampered = record;
    tampered.payload[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    ReplayWindow w;
    EXPECT_EQ(channel_open(keys, Direction::server_to_client, w, tampered).status, OpenStatus::auth_failure) << bit;
  }
  // header fields are bound through the additional data
  auto retyped = record;
  retyped.type = ContentType::alert;
  ReplayWindow w1;
  EXPECT_EQ(channel_open(keys, Direction::server_to_client, w1, retyped).status, OpenStatus::auth_failure);
  auto resequenced = record;
  resequenced.sequence = 6;
  ReplayWindow w2;
  EXPECT_EQ(channel_open(keys, Direction::server_to_client, w2, resequenced).status, OpenStatus::auth_failure);
}

TEST(Channel, EndpointSealOpenAfterEstablishment) {
  auto p = make_pair(50);
  EXPECT_THROW(p.client.seal(ContentType::application_data, Bytes{1}), std::logic_error);
  run(p);
  const auto rec = p.server.seal(ContentType::application_data, as_view("dose=12"));
  const auto opened = p.client.open(wire({rec})[0]);
  ASSERT_EQ(opened.status, OpenStatus::ok);
  EXPECT_EQ(opened.payload, to_bytes("dose=12"));
  EXPECT_EQ(p.client.open(rec).status, OpenStatus::replay_detected);
}

TEST(Records, DatagramCodecRejectsGarbage) {
  EXPECT_THROW(decode_datagram(from_hex("16fefd00")), DecodeError);
  EXPECT_THROW(decode_datagram(from_hex("16feff00000000000000000000")), DecodeError);
  EXPECT_THROW(decode_datagram(from_hex("63fefd00000000000000000000")), DecodeError);
  const Record r{ContentType::application_data, 1, 0x0000123456789aULL, Bytes{1, 2, 3}};
  const auto encoded = encode_datagram(std::vector<Record>{r});
  EXPECT_EQ(to_hex(encoded), "17fefd000100123456789a0003010203");
  EXPECT_EQ(decode_datagram(encoded).at(0), r);
}
