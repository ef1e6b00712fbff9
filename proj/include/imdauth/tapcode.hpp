#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "imdauth/bytes.hpp"

// Tap patterns: touch-level sampling on the low-frequency clock, gap
// classification, OTP generation and matching. Text grammar in
// docs/tapcode.md.
namespace imdauth::tapcode {

struct ClockConfig {
  double lclk_hz = 20.15;
  double cka_hz = 10.07;
  double hf_hz = 660'000.0;

  void validate() const;
  double lclk_period_ms() const { return 1000.0 / lclk_hz; }
  /// Time of LCLK tick k since clock start.
  std::chrono::nanoseconds tick_time(std::uint64_t tick) const;
  /// Whole LCLK ticks in a duration (rounded down).
  std::uint64_t ticks_in(std::chrono::nanoseconds d) const;
};

enum class Gap : std::uint8_t { Short, Long };

class PatternError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tap count plus the short/long class of each gap between taps. Press
/// durations carry no information.
struct TapPattern {
  std::size_t tap_count = 1;
  std::vector<Gap> gaps;

  bool valid() const { return tap_count >= 1 && gaps.size() == tap_count - 1; }
  /// `T` per tap, `.` for a short gap, `-` for a long one.
  std::string to_text() const;
  static TapPattern parse(std::string_view text);
  static TapPattern uniform(std::size_t taps, Gap gap = Gap::Short);

  friend bool operator==(const TapPattern&, const TapPattern&) = default;
};

struct TapEvent {
  std::uint32_t press_ticks = 0;
  std::uint32_t gap_ticks = 0;
  friend bool operator==(const TapEvent&, const TapEvent&) = default;
};

struct DetectorConfig {
  std::uint32_t debounce_ticks = 1;
  std::uint32_t gap_threshold_ticks = 12;    // ~0.6 s
  std::uint32_t pattern_timeout_ticks = 101;  // ~5 s
  std::uint32_t tolerance_ticks = 2;

  void validate() const;
};

Gap classify_gap(std::uint32_t gap_ticks, const DetectorConfig& config);

using Emission = std::variant<std::monostate, TapEvent, TapPattern>;

/// Debounces a sampled touch level into taps and finalizes a pattern after
/// pattern_timeout_ticks of silence.
class Detector {
 public:
  explicit Detector(DetectorConfig config = {});

  /// Ticks must advance by exactly one between calls.
  Emission sample(bool level, std::uint64_t tick);
  void reset();

  const DetectorConfig& config() const { return config_; }
  std::size_t taps_so_far() const { return tap_count_; }

 private:
  DetectorConfig config_;
  bool has_tick_ = false;
  std::uint64_t last_tick_ = 0;
  std::uint64_t high_run_ = 0;
  std::uint64_t low_run_ = 0;
  std::uint64_t gap_before_ = 0;
  std::size_t tap_count_ = 0;
  std::vector<Gap> gaps_;
};

/// Runs a fresh detector over a sampled waveform and collects the patterns.
std::vector<TapPattern> detect_patterns(const std::vector<bool>& samples, const DetectorConfig& config);

struct LengthBounds {
  std::size_t min = 3;
  std::size_t max = 6;
};

inline constexpr std::size_t kNonceSize = 8;

struct OtpChallenge {
  TapPattern pattern;
  std::array<std::uint8_t, kNonceSize> nonce{};
  std::uint64_t expiry_ticks = 0;
  bool consumed = false;
};

/// Uniform tap count within bounds, uniform gap symbols, fresh nonce.
OtpChallenge generate_otp(Rng& rng, LengthBounds bounds = {}, std::uint64_t expiry_ticks = 0);

/// Number of distinct patterns with a tap count inside the bounds.
std::uint64_t pattern_space_size(LengthBounds bounds);
/// Every pattern with 1..max_taps taps.
std::vector<TapPattern> enumerate_patterns(std::size_t max_taps);

enum class MatchResult { accept, reject };

MatchResult match(const TapPattern& observed, const TapPattern& expected);
/// Wake matching that only looks at the tap count.
MatchResult match_count(const TapPattern& observed, const TapPattern& expected);
/// Single-use verification: the challenge is consumed whatever the outcome,
/// and a consumed challenge always rejects.
MatchResult verify_once(OtpChallenge& challenge, const TapPattern& observed);

struct RenderConfig {
  std::uint32_t lead_ticks = 1;
  std::uint32_t press_ticks = 2;
  std::uint32_t short_gap_ticks = 6;
  std::uint32_t long_gap_ticks = 24;
  std::uint32_t trail_ticks = 101;
};

RenderConfig default_render(const DetectorConfig& detector);

/// Ideal sampled waveform for a pattern. Throws std::invalid_argument when
/// the render settings would not classify back to the same pattern.
std::vector<bool> render_waveform(const TapPattern& pattern, const RenderConfig& render,
                                  const DetectorConfig& detector);

/// Touch edge as reported by a client, in milliseconds on the session clock.
struct TapEdge {
  double t_ms = 0.0;
  bool down = false;
};

/// Level seen at each of the first n_ticks LCLK samples for a stream of
/// alternating down/up edges.
std::vector<bool> quantize_edges(std::span<const TapEdge> edges, const ClockConfig& clock, std::uint64_t n_ticks);

/// Edges placed half a tick before each sampled level change, the inverse
/// of quantize_edges for a sampled waveform.
std::vector<TapEdge> edges_from_waveform(const std::vector<bool>& samples, const ClockConfig& clock);

}  // namespace imdauth::tapcode
