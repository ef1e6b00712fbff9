#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>

#include "imdauth/bytes.hpp"

// Application messages carried inside sealed records, and the plaintext
// control frames exchanged on each relay hop. Layouts in docs/wire.md.
namespace imdauth::msg {

using Nonce = std::array<std::uint8_t, 8>;

enum class Verdict : std::uint8_t { reject = 0, accept = 1, timeout = 2 };
std::string_view to_string(Verdict v);

struct Challenge {
  Nonce nonce{};
  std::uint32_t dose = 0;
  std::string pattern;  // tap text, e.g. "T.T-T"
  friend bool operator==(const Challenge&, const Challenge&) = default;
};

/// Execute without a second factor.
struct Command {
  Nonce nonce{};
  std::uint32_t dose = 0;
  friend bool operator==(const Command&, const Command&) = default;
};

struct AuthResult {
  Nonce nonce{};
  Verdict verdict = Verdict::reject;
  friend bool operator==(const AuthResult&, const AuthResult&) = default;
};

struct Ack {
  Nonce nonce{};
  Verdict verdict = Verdict::reject;
  friend bool operator==(const Ack&, const Ack&) = default;
};

using AppMessage = std::variant<Challenge, Command, AuthResult, Ack>;

Bytes encode(const AppMessage& m);
/// Throws DecodeError on unknown tags, truncation or trailing bytes.
AppMessage decode_app(BytesView data);

// Control frames never start with a DTLS content type (20..23).

/// Device -> phone: radio is up and the auth unit is waiting for GO.
struct Ready {};
/// Phone -> device: the server accepted the login, start the handshake.
struct Go {};
/// Phone -> device: give up and power down.
struct Abort {
  std::uint8_t reason = 0;
};

struct Login {
  std::uint32_t login_id = 0;
  std::string identity;
  std::string credential;
  std::uint32_t dose = 0;
};

enum class DenyReason : std::uint8_t {
  bad_credentials = 1,
  policy_violation = 2,
  busy = 3,
  unknown_identity = 4,
};
std::string_view to_string(DenyReason r);

struct LoginOk {
  std::uint32_t login_id = 0;
};
struct LoginDenied {
  std::uint32_t login_id = 0;
  DenyReason reason = DenyReason::policy_violation;
};

using Control = std::variant<Ready, Go, Abort, Login, LoginOk, LoginDenied>;

Bytes encode(const Control& c);
Control decode_control(BytesView data);

/// True if the frame starts with a DTLS record content type.
bool is_dtls(BytesView frame);

}  // namespace imdauth::msg
