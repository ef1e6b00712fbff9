#include "imdauth/tapcode.hpp"

#include <algorithm>
#include <cmath>

namespace imdauth::tapcode {

void ClockConfig::validate() const {
  if (!(lclk_hz > 0) || !(cka_hz > 0) || !(hf_hz > 0)) throw std::invalid_argument("clock rates must be positive");
}

std::chrono::nanoseconds ClockConfig::tick_time(std::uint64_t tick) const {
  return std::chrono::nanoseconds(static_cast<std::int64_t>(std::llround(static_cast<double>(tick) * 1e9 / lclk_hz)));
}

std::uint64_t ClockConfig::ticks_in(std::chrono::nanoseconds d) const {
  if (d.count() <= 0) return 0;
  return static_cast<std::uint64_t>(std::floor(static_cast<double>(d.count()) * lclk_hz / 1e9 + 1e-9));
}

std::string TapPattern::to_text() const {
  if (!valid()) throw PatternError("invalid tap pattern");
  std::string out = "T";
  for (const Gap g : gaps) {
    out.push_back(g == Gap::Short ? '.' : '-');
    out.push_back('T');
  }
  return out;
}

TapPattern TapPattern::parse(std::string_view text) {
  if (text.empty() || text.front() != 'T' || text.size() % 2 == 0)
    throw PatternError("tap pattern must match T([.-]T)*");
  TapPattern p;
  p.tap_count = 1;
  for (std::size_t i = 1; i < text.size(); i += 2) {
    const char g = text[i];
    if ((g != '.' && g != '-') || text[i + 1] != 'T') throw PatternError("tap pattern must match T([.-]T)*");
    p.gaps.push_back(g == '.' ? Gap::Short : Gap::Long);
    ++p.tap_count;
  }
  return p;
}

TapPattern TapPattern::uniform(std::size_t taps, Gap gap) {
  if (taps == 0) throw PatternError("pattern needs at least one tap");
  return TapPattern{taps, std::vector<Gap>(taps - 1, gap)};
}

void DetectorConfig::validate() const {
  if (debounce_ticks < 1) throw std::invalid_argument("debounce_ticks must be >= 1");
  if (gap_threshold_ticks <= debounce_ticks) throw std::invalid_argument("gap_threshold_ticks must exceed debounce");
  if (pattern_timeout_ticks <= gap_threshold_ticks)
    throw std::invalid_argument("pattern_timeout_ticks must exceed gap_threshold_ticks");
}

Gap classify_gap(std::uint32_t gap_ticks, const DetectorConfig& config) {
  return gap_ticks < config.gap_threshold_ticks ? Gap::Short : Gap::Long;
}

Detector::Detector(DetectorConfig config) : config_(config) { config_.validate(); }

void Detector::reset() {
  has_tick_ = false;
  high_run_ = low_run_ = gap_before_ = 0;
  tap_count_ = 0;
  gaps_.clear();
}

Emission Detector::sample(bool level, std::uint64_t tick) {
  if (has_tick_ && tick != last_tick_ + 1) throw std::logic_error("detector ticks must advance by one");
  has_tick_ = true;
  last_tick_ = tick;

  if (level) {
    if (high_run_ == 0) gap_before_ = low_run_;
    ++high_run_;
    return {};
  }

  if (high_run_ > 0) {
    if (high_run_ >= config_.debounce_ticks) {
      TapEvent ev{static_cast<std::uint32_t>(high_run_),
                  tap_count_ > 0 ? static_cast<std::uint32_t>(gap_before_) : 0U};
      if (tap_count_ > 0) gaps_.push_back(classify_gap(ev.gap_ticks, config_));
      ++tap_count_;
      high_run_ = 0;
      low_run_ = 1;
      return ev;
    }
    // glitch: fold it back into the surrounding silence
    low_run_ = gap_before_ + high_run_ + 1;
    high_run_ = 0;
  } else {
    ++low_run_;
  }

  if (tap_count_ > 0 && low_run_ >= config_.pattern_timeout_ticks) {
    TapPattern done{tap_count_, std::move(gaps_)};
    gaps_.clear();
    tap_count_ = 0;
    low_run_ = 0;
    return done;
  }
  return {};
}

std::vector<TapPattern> detect_patterns(const std::vector<bool>& samples, const DetectorConfig& config) {
  Detector d(config);
  std::vector<TapPattern> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto e = d.sample(samples[i], i);
    if (auto* p = std::get_if<TapPattern>(&e)) out.push_back(std::move(*p));
  }
  return out;
}

OtpChallenge generate_otp(Rng& rng, LengthBounds bounds, std::uint64_t expiry_ticks) {
  if (bounds.min < 1 || bounds.max < bounds.min) throw std::invalid_argument("invalid OTP length bounds");
  OtpChallenge c;
  c.pattern.tap_count = bounds.min + uniform_below(rng, bounds.max - bounds.min + 1);
  for (std::size_t i = 0; i + 1 < c.pattern.tap_count; ++i)
    c.pattern.gaps.push_back(uniform_below(rng, 2) == 0 ? Gap::Short : Gap::Long);
  fill_random(rng, c.nonce);
  c.expiry_ticks = expiry_ticks;
  return c;
}

std::uint64_t pattern_space_size(LengthBounds bounds) {
  std::uint64_t total = 0;
  for (std::size_t k = bounds.min; k <= bounds.max; ++k) total += std::uint64_t{1} << (k - 1);
  return total;
}

std::vector<TapPattern> enumerate_patterns(std::size_t max_taps) {
  std::vector<TapPattern> out;
  for (std::size_t taps = 1; taps <= max_taps; ++taps) {
    const std::uint64_t combos = std::uint64_t{1} << (taps - 1);
    for (std::uint64_t bits = 0; bits < combos; ++bits) {
      TapPattern p{taps, {}};
      for (std::size_t g = 0; g + 1 < taps; ++g) p.gaps.push_back((bits >> g) & 1 ? Gap::Long : Gap::Short);
      out.push_back(std::move(p));
    }
  }
  return out;
}

MatchResult match(const TapPattern& observed, const TapPattern& expected) {
  return observed.tap_count == expected.tap_count && observed.gaps == expected.gaps ? MatchResult::accept
                                                                                    : MatchResult::reject;
}

MatchResult match_count(const TapPattern& observed, const TapPattern& expected) {
  return observed.tap_count == expected.tap_count ? MatchResult::accept : MatchResult::reject;
}

MatchResult verify_once(OtpChallenge& challenge, const TapPattern& observed) {
  if (challenge.consumed) return MatchResult::reject;
  challenge.consumed = true;
  return match(observed, challenge.pattern);
}

RenderConfig default_render(const DetectorConfig& detector) {
  RenderConfig r;
  r.press_ticks = std::max<std::uint32_t>(2, detector.debounce_ticks);
  r.short_gap_ticks = std::max<std::uint32_t>(1, detector.gap_threshold_ticks / 2);
  r.long_gap_ticks = detector.gap_threshold_ticks * 2;
  r.trail_ticks = detector.pattern_timeout_ticks;
  return r;
}

std::vector<bool> render_waveform(const TapPattern& pattern, const RenderConfig& render,
                                  const DetectorConfig& detector) {
  if (!pattern.valid()) throw std::invalid_argument("invalid tap pattern");
  if (render.press_ticks < detector.debounce_ticks) throw std::invalid_argument("press shorter than debounce");
  if (render.short_gap_ticks < 1 || classify_gap(render.short_gap_ticks, detector) != Gap::Short)
    throw std::invalid_argument("short gap does not classify as short");
  if (classify_gap(render.long_gap_ticks, detector) != Gap::Long ||
      render.long_gap_ticks >= detector.pattern_timeout_ticks)
    throw std::invalid_argument("long gap must be >= threshold and below the pattern timeout");
  if (render.trail_ticks < detector.pattern_timeout_ticks) throw std::invalid_argument("trail shorter than timeout");

  std::vector<bool> out(render.lead_ticks, false);
  for (std::size_t i = 0; i < pattern.tap_count; ++i) {
    if (i > 0) {
      const auto gap = pattern.gaps[i - 1] == Gap::Short ? render.short_gap_ticks : render.long_gap_ticks;
      out.insert(out.end(), gap, false);
    }
    out.insert(out.end(), render.press_ticks, true);
  }
  out.insert(out.end(), render.trail_ticks, false);
  return out;
}

std::vector<bool> quantize_edges(std::span<const TapEdge> edges, const ClockConfig& clock, std::uint64_t n_ticks) {
  std::vector<bool> out(n_ticks, false);
  const double period = clock.lclk_period_ms();
  bool level = false;
  std::size_t next = 0;
  for (std::uint64_t k = 0; k < n_ticks; ++k) {
    const double t = static_cast<double>(k) * period;
    while (next < edges.size() && edges[next].t_ms <= t) level = edges[next++].down;
    out[k] = level;
  }
  return out;
}

std::vector<TapEdge> edges_from_waveform(const std::vector<bool>& samples, const ClockConfig& clock) {
  std::vector<TapEdge> edges;
  const double period = clock.lclk_period_ms();
  bool level = false;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (samples[k] != level) {
      level = samples[k];
      edges.push_back({(static_cast<double>(k) - 0.5) * period, level});
    }
  }
  return edges;
}

}  // namespace imdauth::tapcode
