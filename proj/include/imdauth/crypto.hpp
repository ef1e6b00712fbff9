#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>

#include "imdauth/bytes.hpp"

// Symmetric primitives for the TLS_PSK_WITH_AES_128_GCM_SHA256 suite.
// SHA-256, HMAC and AES-GCM run on OpenSSL's libcrypto; the TLS 1.2 PRF is
// built here on top of HMAC.
namespace imdauth::crypto {

inline constexpr std::size_t kDigestSize = 32;
inline constexpr std::size_t kKeySize = 16;
inline constexpr std::size_t kTagSize = 16;
inline constexpr std::size_t kSaltSize = 4;
inline constexpr std::size_t kExplicitNonceSize = 8;
inline constexpr std::size_t kSha256BlockSize = 64;

class Digest256 {
 public:
  Digest256() = default;
  explicit Digest256(const std::array<std::uint8_t, kDigestSize>& bytes) : bytes_(bytes) {}
  static Digest256 from(BytesView bytes);

  BytesView view() const { return bytes_; }
  const std::array<std::uint8_t, kDigestSize>& bytes() const { return bytes_; }
  std::string hex() const { return to_hex(bytes_); }

  friend bool operator==(const Digest256& a, const Digest256& b) noexcept {
    return constant_time_equal(a.bytes_, b.bytes_);
  }

 private:
  std::array<std::uint8_t, kDigestSize> bytes_{};
};

/// 128-bit secret key. Equality is constant-time.
class Key128 {
 public:
  Key128() = default;
  explicit Key128(const std::array<std::uint8_t, kKeySize>& bytes) : bytes_(bytes) {}
  static Key128 from(BytesView bytes);

  BytesView view() const { return bytes_; }

  friend bool operator==(const Key128& a, const Key128& b) noexcept {
    return constant_time_equal(a.bytes_, b.bytes_);
  }

 private:
  std::array<std::uint8_t, kKeySize> bytes_{};
};

/// GCM nonce: 4-byte implicit salt from the key block followed by the
/// 8-byte explicit part carried in each record (epoch || sequence).
struct Nonce96 {
  std::array<std::uint8_t, kSaltSize> salt{};
  std::array<std::uint8_t, kExplicitNonceSize> explicit_part{};

  static Nonce96 from(BytesView twelve_bytes);
  static Nonce96 for_record(const std::array<std::uint8_t, kSaltSize>& salt, std::uint16_t epoch,
                            std::uint64_t sequence);
  std::array<std::uint8_t, 12> bytes() const;
};

struct AeadSealed {
  Bytes ciphertext;
  std::array<std::uint8_t, kTagSize> tag{};
};

Digest256 sha256(BytesView message);

/// Incremental SHA-256. Copyable so a running transcript hash can be
/// snapshotted without finalizing it.
class Sha256 {
 public:
  Sha256();
  Sha256(const Sha256& other);
  Sha256& operator=(const Sha256& other);
  Sha256(Sha256&&) noexcept;
  Sha256& operator=(Sha256&&) noexcept;
  ~Sha256();

  void update(BytesView data);
  /// Digest of everything absorbed so far; the running state is untouched.
  Digest256 peek() const;
  std::uint64_t bytes_absorbed() const { return absorbed_; }

 private:
  struct State;
  std::unique_ptr<State> state_;
  std::uint64_t absorbed_ = 0;
};

Digest256 hmac_sha256(BytesView key, BytesView message);

/// RFC 5246 PRF with P_SHA256: first out_len bytes of
/// P_SHA256(secret, label || seed).
Bytes tls_prf_sha256(BytesView secret, std::string_view label, BytesView seed, std::size_t out_len);

AeadSealed aead_seal(const Key128& key, const Nonce96& nonce, BytesView aad, BytesView plaintext);

/// Returns the plaintext only when the tag verifies; nullopt is the
/// authentication failure and no partial plaintext is released.
std::optional<Bytes> aead_open(const Key128& key, const Nonce96& nonce, BytesView aad,
                               const AeadSealed& sealed);

/// Compression-function invocations for hashing a message of the given
/// length (padding included).
constexpr std::uint64_t sha256_blocks(std::uint64_t message_len) {
  return (message_len + 9 + kSha256BlockSize - 1) / kSha256BlockSize;
}

/// Compression-function invocations for one HMAC-SHA256 with a key of at
/// most 64 bytes.
constexpr std::uint64_t hmac_sha256_blocks(std::uint64_t message_len) {
  return sha256_blocks(kSha256BlockSize + message_len) + sha256_blocks(kSha256BlockSize + kDigestSize);
}

/// HMAC invocations made by tls_prf_sha256 for a given output length.
constexpr std::uint64_t prf_hmac_calls(std::uint64_t out_len) {
  const std::uint64_t rounds = (out_len + kDigestSize - 1) / kDigestSize;
  return 2 * rounds;
}

}  // namespace imdauth::crypto
