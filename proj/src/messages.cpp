#include "imdauth/messages.hpp"

namespace imdauth::msg {
namespace {

enum Tag : std::uint8_t {
  kChallenge = 0x01,
  kCommand = 0x02,
  kAuthResult = 0x03,
  kAck = 0x04,
  kReady = 0xA0,
  kGo = 0xA1,
  kAbort = 0xA2,
  kLogin = 0xB0,
  kLoginOk = 0xB1,
  kLoginDenied = 0xB2,
};

Nonce read_nonce(ByteReader& r) {
  Nonce n{};
  const auto b = r.bytes(n.size());
  std::copy(b.begin(), b.end(), n.begin());
  return n;
}

Verdict read_verdict(ByteReader& r) {
  const auto v = r.u8();
  if (v > 2) throw DecodeError("bad verdict");
  return static_cast<Verdict>(v);
}

std::string read_string(ByteReader& r) {
  const auto n = r.u8();
  const auto b = r.bytes(n);
  return std::string(b.begin(), b.end());
}

void write_string(ByteWriter& w, const std::string& s) {
  if (s.size() > 255) throw std::invalid_argument("string field longer than 255 bytes");
  w.u8(static_cast<std::uint8_t>(s.size()));
  w.bytes(as_view(s));
}

void finish(const ByteReader& r) {
  if (!r.empty()) throw DecodeError("trailing bytes");
}

}  // namespace

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::reject: return "reject";
    case Verdict::accept: return "accept";
    case Verdict::timeout: return "timeout";
  }
  return "?";
}

std::string_view to_string(DenyReason r) {
  switch (r) {
    case DenyReason::bad_credentials: return "bad_credentials";
    case DenyReason::policy_violation: return "policy_violation";
    case DenyReason::busy: return "busy";
    case DenyReason::unknown_identity: return "unknown_identity";
  }
  return "?";
}

Bytes encode(const AppMessage& m) {
  ByteWriter w;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Challenge>) {
          w.u8(kChallenge);
          w.bytes(v.nonce);
          w.u32(v.dose);
          write_string(w, v.pattern);
        } else if constexpr (std::is_same_v<T, Command>) {
          w.u8(kCommand);
          w.bytes(v.nonce);
          w.u32(v.dose);
        } else if constexpr (std::is_same_v<T, AuthResult>) {
          w.u8(kAuthResult);
          w.bytes(v.nonce);
          w.u8(static_cast<std::uint8_t>(v.verdict));
        } else {
          w.u8(kAck);
          w.bytes(v.nonce);
          w.u8(static_cast<std::uint8_t>(v.verdict));
        }
      },
      m);
  return std::move(w).take();
}

AppMessage decode_app(BytesView data) {
  ByteReader r(data);
  AppMessage out;
  switch (r.u8()) {
    case kChallenge: {
      Challenge c;
      c.nonce = read_nonce(r);
      c.dose = r.u32();
      c.pattern = read_string(r);
      out = c;
      break;
    }
    case kCommand: {
      Command c;
      c.nonce = read_nonce(r);
      c.dose = r.u32();
      out = c;
      break;
    }
    case kAuthResult: {
      AuthResult a;
      a.nonce = read_nonce(r);
      a.verdict = read_verdict(r);
      out = a;
      break;
    }
    case kAck: {
      Ack a;
      a.nonce = read_nonce(r);
      a.verdict = read_verdict(r);
      out = a;
      break;
    }
    default:
      throw DecodeError("unknown application message");
  }
  finish(r);
  return out;
}

Bytes encode(const Control& c) {
  ByteWriter w;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Ready>) {
          w.u8(kReady);
        } else if constexpr (std::is_same_v<T, Go>) {
          w.u8(kGo);
        } else if constexpr (std::is_same_v<T, Abort>) {
          w.u8(kAbort);
          w.u8(v.reason);
        } else if constexpr (std::is_same_v<T, Login>) {
          w.u8(kLogin);
          w.u32(v.login_id);
          write_string(w, v.identity);
          write_string(w, v.credential);
          w.u32(v.dose);
        } else if constexpr (std::is_same_v<T, LoginOk>) {
          w.u8(kLoginOk);
          w.u32(v.login_id);
        } else {
          w.u8(kLoginDenied);
          w.u32(v.login_id);
          w.u8(static_cast<std::uint8_t>(v.reason));
        }
      },
      c);
  return std::move(w).take();
}

Control decode_control(BytesView data) {
  ByteReader r(data);
  Control out;
  switch (r.u8()) {
    case kReady: out = Ready{}; break;
    case kGo: out = Go{}; break;
    case kAbort: out = Abort{r.u8()}; break;
    case kLogin: {
      Login l;
      l.login_id = r.u32();
      l.identity = read_string(r);
      l.credential = read_string(r);
      l.dose = r.u32();
      out = l;
      break;
    }
    case kLoginOk: out = LoginOk{r.u32()}; break;
    case kLoginDenied: {
      LoginDenied d;
      d.login_id = r.u32();
      const auto reason = r.u8();
      if (reason < 1 || reason > 4) throw DecodeError("bad deny reason");
      d.reason = static_cast<DenyReason>(reason);
      out = d;
      break;
    }
    default:
      throw DecodeError("unknown control frame");
  }
  finish(r);
  return out;
}

bool is_dtls(BytesView frame) { return !frame.empty() && frame[0] >= 20 && frame[0] <= 23; }

}  // namespace imdauth::msg
