#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace imdauth {

using Bytes = std::vector<std::uint8_t>;
using BytesView = std::span<const std::uint8_t>;

/// Deterministic generator used everywhere randomness is needed. The
/// simulation must be reproducible from a seed, so this is not a CSPRNG.
using Rng = std::mt19937_64;

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string to_hex(BytesView data);
Bytes from_hex(std::string_view hex);

inline Bytes to_bytes(std::string_view text) { return Bytes(text.begin(), text.end()); }

inline BytesView as_view(std::string_view text) {
  return {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()};
}

inline void append(Bytes& out, BytesView data) { out.insert(out.end(), data.begin(), data.end()); }

/// Compares two buffers without an early exit on the first differing byte.
bool constant_time_equal(BytesView a, BytesView b) noexcept;

void fill_random(Rng& rng, std::span<std::uint8_t> out);

/// Uniform integer in [0, bound) by rejection sampling on raw 64-bit draws,
/// so results do not depend on the standard library's distributions.
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound);

/// Expands a user seed into independent stream seeds (SplitMix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

/// Big-endian writer for wire encodings.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put_be(v, 2); }
  void u24(std::uint32_t v) { put_be(v, 3); }
  void u32(std::uint32_t v) { put_be(v, 4); }
  void u48(std::uint64_t v) { put_be(v, 6); }
  void u64(std::uint64_t v) { put_be(v, 8); }
  void bytes(BytesView data) { append(buf_, data); }

  const Bytes& data() const& { return buf_; }
  Bytes take() && { return std::move(buf_); }
  std::size_t size() const { return buf_.size(); }

 private:
  void put_be(std::uint64_t v, int width) {
    for (int i = width - 1; i >= 0; --i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  Bytes buf_;
};

/// Big-endian reader; every accessor throws DecodeError on underrun.
class ByteReader {
 public:
  explicit ByteReader(BytesView data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get_be(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get_be(2)); }
  std::uint32_t u24() { return static_cast<std::uint32_t>(get_be(3)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_be(4)); }
  std::uint64_t u48() { return get_be(6); }
  std::uint64_t u64() { return get_be(8); }

  BytesView bytes(std::size_t n) {
    need(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool empty() const { return remaining() == 0; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw DecodeError("truncated input");
  }
  std::uint64_t get_be(std::size_t width) {
    need(width);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v = (v << 8) | data_[pos_ + i];
    pos_ += width;
    return v;
  }

  BytesView data_;
  std::size_t pos_ = 0;
};

}  // namespace imdauth
