// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fail.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <string>

#include "imdauth/crypto.hpp"
#include "imdauth/handshake.hpp"
#include "imdauth/scenario.hpp"
#include "test_util.hpp"

using namespace imdauth;
namespace fs = std::filesystem;

namespace {

struct Line {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const char* name, const std::function<Line()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Line l;
  try {
    l = body();
  } catch (const std::exception& e) {
    l = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!l.pass) ++failures;
  std::printf("%s %-22s %s (%.2f s)\n", l.pass ? "PASS" : "FAIL", name, l.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

scenario::Scenario load(const std::string& name, const std::vector<std::string>& overrides = {}) {
  return scenario::load(test::source_path("scenarios/" + name + ".scn"), overrides);
}

bool within(double got, double want, double rel) { return std::abs(got - want) <= rel * want; }

dtls::PskLookup lookup_for(Bytes identity, Bytes psk) {
  return [identity, psk](BytesView id) -> std::optional<Bytes> {
    if (Bytes(id.begin(), id.end()) == identity) return psk;
    return std::nullopt;
  };
}

struct Pair {
  dtls::Endpoint client;
  dtls::Endpoint server;
};

void handshake(Pair& p) {
  auto wire = [](const std::vector<dtls::Record>& r) { return dtls::decode_datagram(dtls::encode_datagram(r)); };
  auto to_server = wire(p.client.start());
  for (int round = 0; round < 10 && !to_server.empty(); ++round) {
    std::vector<dtls::Record> to_client;
    for (const auto& r : to_server)
      for (auto& o : p.server.on_record(r).out) to_client.push_back(std::move(o));
    to_server.clear();
    for (const auto& r : wire(to_client))
      for (auto& o : p.client.on_record(r).out) to_server.push_back(std::move(o));
    to_server = wire(to_server);
  }
}

Line handshake_bytes() {
  std::size_t worst_payload = 0, worst_wire = 0;
  for (const char* name : {"first_factor_only", "happy_dual_factor"}) {
    const auto r = scenario::run(load(name));
    worst_payload = std::max(worst_payload, r.report["handshake"]["payload_bytes"].get<std::size_t>());
    worst_wire = std::max(worst_wire, r.report["handshake"]["wire_bytes"].get<std::size_t>());
  }
  return {worst_payload <= 320, fmt("payload %zu B (with record headers %zu B), budget 320 B, reference ~200 B",
                                    worst_payload, worst_wire)};
}

Line first_factor_latency() {
  const auto r = scenario::run(load("first_factor_only"));
  const double s = r.report["latency"]["total_s"].get<double>();
  return {within(s, 0.66, 0.20), fmt("%.6f s, target 0.66 s +/-20%%", s)};
}

Line first_factor_energy() {
  const auto r = scenario::run(load("first_factor_only"));
  const double uj = r.report["energy"]["active_pj"].get<double>() / 1e6;
  return {within(uj, 5.28, 0.01), fmt("%.6f uJ active, target 5.28 uJ +/-1%%", uj)};
}

Line dual_latency() {
  const auto r = scenario::run(load("happy_dual_factor"));
  const double s = r.report["latency"]["total_s"].get<double>();
  return {within(s, 12.0, 0.10), fmt("%.4f s, target 12 s +/-10%%", s)};
}

Line idle_and_spam() {
  auto quiet = load("wake_spam", {"adversary.mode=honest"});
  auto spam = load("wake_spam");
  simnet::World a(quiet.world), b(spam.world);
  a.run(quiet.run_until);
  b.run(spam.run_until);
  a.device().settle();
  b.device().settle();
  const auto idle_pj = device::to_picojoules(a.device().ledger().total_joules());
  const auto spam_pj = device::to_picojoules(b.device().ledger().total_joules());
  const bool ledgers_equal = a.device().ledger() == b.device().ledger();
  const auto ignored = b.device().stats().frames_ignored_idle;
  return {idle_pj == 2'646'000 && spam_pj == idle_pj && ledgers_equal && ignored == 10000,
          fmt("1 h idle %lld pJ (want 2646000), %llu spam frames, delta %lld pJ", static_cast<long long>(idle_pj),
              static_cast<unsigned long long>(ignored), static_cast<long long>(spam_pj - idle_pj))};
}

Line crypto_vectors() {
  std::size_t ok = 0, total = 0;
  auto check = [&](bool b) {
    ++total;
    ok += b;
  };
  for (const auto& v : test::load_vectors("sha256.vec"))
    check(crypto::sha256(test::hex_field(v, "Msg")).hex() == v.at("Digest"));
  for (const auto& v : test::load_vectors("hmac_sha256.vec"))
    check(crypto::hmac_sha256(test::hex_field(v, "Key"), test::hex_field(v, "Msg")).hex() == v.at("Mac"));
  for (const auto& v : test::load_vectors("tls12_prf.vec")) {
    const auto label = test::hex_field(v, "Label");
    const auto& want = v.at("Output");
    check(to_hex(crypto::tls_prf_sha256(test::hex_field(v, "Secret"), std::string(label.begin(), label.end()),
                                        test::hex_field(v, "Seed"), want.size() / 2)) == want);
  }
  for (const auto& v : test::load_vectors("aes128gcm.vec")) {
    const auto key = crypto::Key128::from(test::hex_field(v, "Key"));
    const auto nonce = crypto::Nonce96::from(test::hex_field(v, "Nonce"));
    const auto aad = test::hex_field(v, "Aad");
    const auto sealed = crypto::aead_seal(key, nonce, aad, test::hex_field(v, "Plaintext"));
    const auto opened = crypto::aead_open(key, nonce, aad, sealed);
    check(to_hex(sealed.ciphertext) == v.at("Ciphertext") && to_hex(sealed.tag) == v.at("Tag") && opened &&
          to_hex(*opened) == v.at("Plaintext"));
  }
  for (const auto& v : test::load_vectors("psk_key_schedule.vec")) {
    const auto psk = test::hex_field(v, "Psk");
    dtls::Random cr{}, sr{};
    const auto crb = test::hex_field(v, "ClientRandom");
    const auto srb = test::hex_field(v, "ServerRandom");
    std::copy(crb.begin(), crb.end(), cr.begin());
    std::copy(srb.begin(), srb.end(), sr.begin());
    const auto master = dtls::derive_master_secret(psk, cr, sr);
    const auto keys = dtls::derive_key_block(master, cr, sr);
    const auto digest = crypto::Digest256::from(test::hex_field(v, "TranscriptDigest"));
    check(to_hex(dtls::psk_premaster(psk)) == v.at("Premaster") && to_hex(master) == v.at("Master") &&
          to_hex(keys.client_write_key.view()) == v.at("ClientWriteKey") &&
          to_hex(keys.server_write_key.view()) == v.at("ServerWriteKey") &&
          to_hex(keys.client_salt) == v.at("ClientSalt") && to_hex(keys.server_salt) == v.at("ServerSalt") &&
          to_hex(dtls::finished_verify_data(master, digest, "client finished")) == v.at("ClientFinished") &&
          to_hex(dtls::finished_verify_data(master, digest, "server finished")) == v.at("ServerFinished"));
  }
  return {ok == total && total > 0, fmt("%zu/%zu vectors bit-exact", ok, total)};
}

Line key_agreement() {
  Rng rng(20240601);
  std::set<Bytes> seen;
  std::size_t agreed = 0;
  for (int i = 0; i < 1000; ++i) {
    Bytes psk(16 + uniform_below(rng, 17));
    fill_random(rng, psk);
    Bytes identity(1 + uniform_below(rng, 32));
    fill_random(rng, identity);
    Pair p{dtls::Endpoint::client(identity, psk, Rng(rng())), dtls::Endpoint::server(lookup_for(identity, psk), Rng(rng()))};
    handshake(p);
    if (p.client.established() && p.server.established() && p.client.keys() && p.server.keys() &&
        *p.client.keys() == *p.server.keys())
      ++agreed;
    if (p.client.keys()) {
      const auto& k = *p.client.keys();
      Bytes id(k.master_secret.begin(), k.master_secret.end());
      append(id, k.client_write_key.view());
      append(id, k.server_write_key.view());
      seen.insert(id);
    }
  }
  return {agreed == 1000 && seen.size() == 1000,
          fmt("%zu/1000 agree, %zu distinct session keys", agreed, seen.size())};
}

Line adversary() {
  const auto base = load("happy_dual_factor").world;
  std::string detail;
  bool ok = true;
  for (auto mode : {simnet::AdversaryMode::tamper, simnet::AdversaryMode::replay, simnet::AdversaryMode::inject}) {
    simnet::AdversaryConfig a;
    a.mode = mode;
    a.rate = 0.5;
    const auto r = simnet::run_campaign(base, a, 10'000);
    ok = ok && r.attempts >= 10'000 && r.forgeries == 0;
    detail += fmt("%s %llu attempts/%llu sessions/%llu genuine executions/%llu forged; ",
                  std::string(to_string(mode)).c_str(), static_cast<unsigned long long>(r.attempts),
                  static_cast<unsigned long long>(r.sessions), static_cast<unsigned long long>(r.executions),
                  static_cast<unsigned long long>(r.forgeries));
  }

  // Exhaustive single-bit flips over one sealed record as it goes on the wire.
  Pair p{dtls::Endpoint::client(to_bytes("alice"), Bytes(16, 7), Rng(1)),
         dtls::Endpoint::server(lookup_for(to_bytes("alice"), Bytes(16, 7)), Rng(2))};
  handshake(p);
  const auto& keys = *p.client.keys();
  const auto record = dtls::channel_seal(keys, dtls::Direction::server_to_client, 3, dtls::ContentType::application_data,
                                         msg::encode(msg::Challenge{{1, 2, 3, 4, 5, 6, 7, 8}, 5, "T.T-T"}));
  const auto wire = dtls::encode_datagram(std::span<const dtls::Record>(&record, 1));
  dtls::ReplayWindow fresh;
  const bool genuine = dtls::channel_open(keys, dtls::Direction::server_to_client, fresh, record).status ==
                       dtls::OpenStatus::ok;
  std::size_t detected = 0;
  for (std::size_t bit = 0; bit < wire.size() * 8; ++bit) {
    auto w = wire;
    w[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    try {
      const auto recs = dtls::decode_datagram(w);
      dtls::ReplayWindow window;
      bool opened = false;
      for (const auto& r : recs)
        opened = opened ||
                 dtls::channel_open(keys, dtls::Direction::server_to_client, window, r).status == dtls::OpenStatus::ok;
      detected += !opened;
    } catch (const DecodeError&) {
      ++detected;
    }
  }
  ok = ok && genuine && detected == wire.size() * 8;
  detail += fmt("bit flips detected %zu/%zu", detected, wire.size() * 8);
  return {ok, detail};
}

Line tapcode_equivalence() {
  const tapcode::DetectorConfig cfg;
  const tapcode::ClockConfig clock;
  const auto render = tapcode::default_render(cfg);
  std::size_t round_trips = 0;
  const auto patterns = tapcode::enumerate_patterns(5);
  for (const auto& p : patterns) {
    const auto w = tapcode::render_waveform(p, render, cfg);
    const auto edges = tapcode::edges_from_waveform(w, clock);
    const auto sampled = tapcode::quantize_edges(edges, clock, w.size());
    const auto back = tapcode::detect_patterns(sampled, cfg);
    round_trips += sampled == w && back.size() == 1 && back[0] == p;
  }

  Rng rng(4242);
  std::size_t debounce_ok = 0, jitter_ok = 0;
  for (int i = 0; i < 5000; ++i) {
    tapcode::DetectorConfig dc;
    dc.debounce_ticks = 1 + static_cast<std::uint32_t>(uniform_below(rng, 4));
    std::vector<bool> w;
    const auto runs = 2 + uniform_below(rng, 20);
    for (std::uint64_t r = 0; r < runs; ++r) {
      w.insert(w.end(), 1 + uniform_below(rng, 6), true);
      w.insert(w.end(), 1 + uniform_below(rng, 30), false);
    }
    std::size_t expected = 0, run = 0;
    for (bool s : w) {
      if (s) {
        ++run;
      } else {
        expected += run >= dc.debounce_ticks;
        run = 0;
      }
    }
    tapcode::Detector d(dc);
    std::size_t taps = 0;
    bool short_press = false;
    for (std::size_t k = 0; k < w.size(); ++k) {
      auto e = d.sample(w[k], k);
      if (auto* t = std::get_if<tapcode::TapEvent>(&e)) {
        ++taps;
        short_press = short_press || t->press_ticks < dc.debounce_ticks;
      }
    }
    debounce_ok += taps == expected && !short_press;
  }
  for (int i = 0; i < 5000; ++i) {
    const std::size_t taps = 2 + uniform_below(rng, 5);
    tapcode::TapPattern expected{taps, {}};
    std::vector<bool> w(1, false);
    for (std::size_t t = 0; t < taps; ++t) {
      if (t > 0) {
        const std::uint32_t short_lo = cfg.tolerance_ticks + 1;
        const std::uint32_t short_hi = cfg.gap_threshold_ticks - 1 - cfg.tolerance_ticks;
        const std::uint32_t long_lo = cfg.gap_threshold_ticks + cfg.tolerance_ticks;
        const std::uint32_t long_hi = cfg.pattern_timeout_ticks - 1 - cfg.tolerance_ticks;
        const bool is_long = uniform_below(rng, 2) == 1;
        const auto gap = is_long ? long_lo + static_cast<std::uint32_t>(uniform_below(rng, long_hi - long_lo + 1))
                                 : short_lo + static_cast<std::uint32_t>(uniform_below(rng, short_hi - short_lo + 1));
        expected.gaps.push_back(is_long ? tapcode::Gap::Long : tapcode::Gap::Short);
        const auto jitter = static_cast<int>(uniform_below(rng, 2 * cfg.tolerance_ticks + 1)) -
                            static_cast<int>(cfg.tolerance_ticks);
        w.insert(w.end(), static_cast<std::size_t>(static_cast<int>(gap) + jitter), false);
      }
      w.insert(w.end(), 1 + uniform_below(rng, 5), true);
    }
    w.insert(w.end(), cfg.pattern_timeout_ticks, false);
    const auto detected = tapcode::detect_patterns(w, cfg);
    jitter_ok += detected.size() == 1 && detected[0] == expected;
  }
  return {round_trips == patterns.size() && debounce_ok == 5000 && jitter_ok == 5000,
          fmt("round trip %zu/%zu patterns, debounce %zu/5000, jitter %zu/5000", round_trips, patterns.size(),
              debounce_ok, jitter_ok)};
}

Line determinism() {
  std::size_t same = 0, total = 0;
  for (const auto& e : fs::directory_iterator(test::source_path("scenarios"))) {
    if (e.path().extension() != ".scn") continue;
    const auto s = scenario::load(e.path().string());
    const auto a = scenario::run(s);
    const auto b = scenario::run(s);
    ++total;
    same += a.trace == b.trace && a.report.dump() == b.report.dump();
  }
  return {same == total && total > 0, fmt("%zu/%zu scenarios byte-identical across two runs", same, total)};
}

}  // namespace

int main() {
  criterion("handshake_bytes", handshake_bytes);
  criterion("first_factor_latency", first_factor_latency);
  criterion("first_factor_energy", first_factor_energy);
  criterion("dual_factor_latency", dual_latency);
  criterion("idle_power_and_spam", idle_and_spam);
  criterion("crypto_conformance", crypto_vectors);
  criterion("key_agreement", key_agreement);
  criterion("adversary_suite", adversary);
  criterion("tapcode_equivalence", tapcode_equivalence);
  criterion("determinism", determinism);
  std::printf("%s: %d failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
