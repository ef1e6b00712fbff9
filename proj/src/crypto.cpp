#include "imdauth/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <stdexcept>

namespace imdauth::crypto {

namespace {

[[noreturn]] void openssl_failure(const char* what) {
  throw std::runtime_error(std::string("libcrypto failure: ") + what);
}

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

CipherCtx new_gcm_ctx(const Key128& key, const Nonce96& nonce, bool encrypt) {
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx) openssl_failure("EVP_CIPHER_CTX_new");
  const auto iv = nonce.bytes();
  const int ok = encrypt ? EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, key.view().data(), iv.data())
                         : EVP_DecryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, key.view().data(), iv.data());
  if (ok != 1) openssl_failure("gcm init");
  return ctx;
}

}  // namespace

Digest256 Digest256::from(BytesView bytes) {
  if (bytes.size() != kDigestSize) throw std::invalid_argument("Digest256 needs 32 bytes");
  std::array<std::uint8_t, kDigestSize> a{};
  std::copy(bytes.begin(), bytes.end(), a.begin());
  return Digest256(a);
}

Key128 Key128::from(BytesView bytes) {
  if (bytes.size() != kKeySize) throw std::invalid_argument("Key128 needs 16 bytes");
  std::array<std::uint8_t, kKeySize> a{};
  std::copy(bytes.begin(), bytes.end(), a.begin());
  return Key128(a);
}

Nonce96 Nonce96::from(BytesView twelve_bytes) {
  if (twelve_bytes.size() != kSaltSize + kExplicitNonceSize) throw std::invalid_argument("Nonce96 needs 12 bytes");
  Nonce96 n;
  std::copy_n(twelve_bytes.begin(), kSaltSize, n.salt.begin());
  std::copy_n(twelve_bytes.begin() + kSaltSize, kExplicitNonceSize, n.explicit_part.begin());
  return n;
}

Nonce96 Nonce96::for_record(const std::array<std::uint8_t, kSaltSize>& salt, std::uint16_t epoch,
                            std::uint64_t sequence) {
  Nonce96 n;
  n.salt = salt;
  const std::uint64_t seq = (static_cast<std::uint64_t>(epoch) << 48) | (sequence & 0xffffffffffffULL);
  for (int i = 0; i < 8; ++i) n.explicit_part[i] = static_cast<std::uint8_t>(seq >> (56 - 8 * i));
  return n;
}

std::array<std::uint8_t, 12> Nonce96::bytes() const {
  std::array<std::uint8_t, 12> out{};
  std::copy(salt.begin(), salt.end(), out.begin());
  std::copy(explicit_part.begin(), explicit_part.end(), out.begin() + kSaltSize);
  return out;
}

Digest256 sha256(BytesView message) {
  std::array<std::uint8_t, kDigestSize> out{};
  unsigned int len = 0;
  if (EVP_Digest(message.data(), message.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != kDigestSize)
    openssl_failure("EVP_Digest");
  return Digest256(out);
}

struct Sha256::State {
  EVP_MD_CTX* ctx = nullptr;
  State() : ctx(EVP_MD_CTX_new()) {
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) openssl_failure("digest init");
  }
  State(const State& other) : ctx(EVP_MD_CTX_new()) {
    if (!ctx || EVP_MD_CTX_copy_ex(ctx, other.ctx) != 1) openssl_failure("digest copy");
  }
  State& operator=(const State&) = delete;
  ~State() { EVP_MD_CTX_free(ctx); }
};

Sha256::Sha256() : state_(std::make_unique<State>()) {}
Sha256::Sha256(const Sha256& other) : state_(std::make_unique<State>(*other.state_)), absorbed_(other.absorbed_) {}
Sha256& Sha256::operator=(const Sha256& other) {
  if (this != &other) {
    state_ = std::make_unique<State>(*other.state_);
    absorbed_ = other.absorbed_;
  }
  return *this;
}
Sha256::Sha256(Sha256&&) noexcept = default;
Sha256& Sha256::operator=(Sha256&&) noexcept = default;
Sha256::~Sha256() = default;

void Sha256::update(BytesView data) {
  if (EVP_DigestUpdate(state_->ctx, data.data(), data.size()) != 1) openssl_failure("digest update");
  absorbed_ += data.size();
}

Digest256 Sha256::peek() const {
  State copy(*state_);
  std::array<std::uint8_t, kDigestSize> out{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(copy.ctx, out.data(), &len) != 1) openssl_failure("digest final");
  return Digest256(out);
}

Digest256 hmac_sha256(BytesView key, BytesView message) {
  std::array<std::uint8_t, kDigestSize> out{};
  unsigned int len = 0;
  static const std::uint8_t kEmpty = 0;
  const std::uint8_t* key_ptr = key.empty() ? &kEmpty : key.data();
  if (HMAC(EVP_sha256(), key_ptr, static_cast<int>(key.size()), message.data(), message.size(), out.data(), &len) ==
          nullptr ||
      len != kDigestSize)
    openssl_failure("HMAC");
  return Digest256(out);
}

Bytes tls_prf_sha256(BytesView secret, std::string_view label, BytesView seed, std::size_t out_len) {
  if (out_len == 0) throw std::invalid_argument("tls_prf_sha256: out_len must be at least 1");
  Bytes label_seed = to_bytes(label);
  append(label_seed, seed);

  // A(0) = label || seed, A(i) = HMAC(secret, A(i-1))
  Bytes a = label_seed;
  Bytes out;
  out.reserve(out_len + kDigestSize);
  while (out.size() < out_len) {
    const Digest256 next_a = hmac_sha256(secret, a);
    a.assign(next_a.view().begin(), next_a.view().end());
    Bytes block_input = a;
    append(block_input, label_seed);
    append(out, hmac_sha256(secret, block_input).view());
  }
  out.resize(out_len);
  return out;
}

AeadSealed aead_seal(const Key128& key, const Nonce96& nonce, BytesView aad, BytesView plaintext) {
  auto ctx = new_gcm_ctx(key, nonce, true);
  int len = 0;
  if (!aad.empty() && EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
    openssl_failure("gcm aad");
  AeadSealed sealed;
  sealed.ciphertext.resize(plaintext.size());
  if (!plaintext.empty() && EVP_EncryptUpdate(ctx.get(), sealed.ciphertext.data(), &len, plaintext.data(),
                                              static_cast<int>(plaintext.size())) != 1)
    openssl_failure("gcm encrypt");
  std::uint8_t tail[16];
  if (EVP_EncryptFinal_ex(ctx.get(), tail, &len) != 1) openssl_failure("gcm final");
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagSize, sealed.tag.data()) != 1)
    openssl_failure("gcm tag");
  return sealed;
}

std::optional<Bytes> aead_open(const Key128& key, const Nonce96& nonce, BytesView aad, const AeadSealed& sealed) {
  auto ctx = new_gcm_ctx(key, nonce, false);
  int len = 0;
  if (!aad.empty() && EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
    openssl_failure("gcm aad");
  Bytes plaintext(sealed.ciphertext.size());
  if (!sealed.ciphertext.empty() &&
      EVP_DecryptUpdate(ctx.get(), plaintext.data(), &len, sealed.ciphertext.data(),
                        static_cast<int>(sealed.ciphertext.size())) != 1)
    openssl_failure("gcm decrypt");
  auto tag = sealed.tag;
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagSize, tag.data()) != 1) openssl_failure("gcm set tag");
  std::uint8_t tail[16];
  if (EVP_DecryptFinal_ex(ctx.get(), tail, &len) != 1) {
    std::fill(plaintext.begin(), plaintext.end(), 0);
    return std::nullopt;
  }
  return plaintext;
}

}  // namespace imdauth::crypto
