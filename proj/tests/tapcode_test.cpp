#include <gtest/gtest.h>

#include <set>

#include "imdauth/tapcode.hpp"

using namespace imdauth;
using namespace imdauth::tapcode;

namespace {

constexpr const char* kGoldenSeed42Pattern = "T.T.T.T-T";
constexpr const char* kGoldenSeed42Nonce = "7c4f7f9c62dc1418";

std::vector<bool> waveform(std::initializer_list<std::pair<bool, int>> runs) {
  std::vector<bool> out;
  for (auto [level, n] : runs) out.insert(out.end(), n, level);
  return out;
}

// Run-length oracle: number of high runs of at least `debounce` samples
// that are followed by a low sample.
std::size_t qualifying_presses(const std::vector<bool>& w, std::uint32_t debounce) {
  std::size_t count = 0, run = 0;
  for (bool s : w) {
    if (s) {
      ++run;
    } else {
      if (run >= debounce) ++count;
      run = 0;
    }
  }
  return count;
}

}  // namespace

TEST(Detector, FourShortTapsThenSilence) {
  const auto w = waveform({{false, 1},
                           {true, 2}, {false, 5}, {true, 2}, {false, 5},
                           {true, 2}, {false, 5}, {true, 2}, {false, 101}});
  const auto patterns = detect_patterns(w, DetectorConfig{});
  ASSERT_EQ(patterns.size(), 1u);
  EXPECT_EQ(patterns[0], (TapPattern{4, {Gap::Short, Gap::Short, Gap::Short}}));
  EXPECT_EQ(patterns[0].to_text(), "T.T.T.T");
}

TEST(Detector, EmitsTapEventsWithPressAndGap) {
  Detector d;
  std::vector<TapEvent> events;
  const auto w = waveform({{false, 3}, {true, 3}, {false, 14}, {true, 1}, {false, 1}});
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto e = d.sample(w[i], i);
    if (auto* t = std::get_if<TapEvent>(&e)) events.push_back(*t);
  }
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0], (TapEvent{3, 0}));
  EXPECT_EQ(events[1], (TapEvent{1, 14}));
}

TEST(Detector, SilenceCompletesOnlyAtTimeout) {
  const auto almost = waveform({{true, 2}, {false, 100}});
  EXPECT_TRUE(detect_patterns(almost, DetectorConfig{}).empty());
  const auto exact = waveform({{true, 2}, {false, 101}});
  EXPECT_EQ(detect_patterns(exact, DetectorConfig{}).size(), 1u);
}

TEST(Detector, ConstantLowNeverEmits) {
  Detector d;
  for (std::uint64_t t = 0; t < 5000; ++t) {
    EXPECT_TRUE(std::holds_alternative<std::monostate>(d.sample(false, t)));
  }
}

TEST(Detector, GlitchShorterThanDebounceIsAbsorbed) {
  DetectorConfig cfg;
  cfg.debounce_ticks = 2;
  const auto w = waveform({{false, 4}, {true, 1}, {false, 200}});
  EXPECT_TRUE(detect_patterns(w, cfg).empty());
}

TEST(Detector, GlitchInsideGapDoesNotSplitIt) {
  DetectorConfig cfg;
  cfg.debounce_ticks = 2;
  // 8 lows, 1-tick glitch, 8 lows: one 17-tick gap => Long
  const auto w = waveform({{true, 2}, {false, 8}, {true, 1}, {false, 8}, {true, 2}, {false, 101}});
  const auto p = detect_patterns(w, cfg);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0], (TapPattern{2, {Gap::Long}}));
}

TEST(Detector, TicksMustBeConsecutive) {
  Detector d;
  d.sample(false, 10);
  EXPECT_THROW(d.sample(false, 12), std::logic_error);
  d.reset();
  EXPECT_NO_THROW(d.sample(false, 12));
}

TEST(Detector, ConfigValidation) {
  EXPECT_THROW(Detector(DetectorConfig{0, 12, 101, 2}), std::invalid_argument);
  EXPECT_THROW(Detector(DetectorConfig{3, 3, 101, 2}), std::invalid_argument);
  EXPECT_THROW(Detector(DetectorConfig{1, 12, 12, 2}), std::invalid_argument);
}

TEST(Detector, DebouncePropertyOverRandomWaveforms) {
  Rng rng(77);
  for (int i = 0; i < 2000; ++i) {
    DetectorConfig cfg;
    cfg.debounce_ticks = 1 + static_cast<std::uint32_t>(uniform_below(rng, 4));
    std::vector<bool> w;
    const auto runs = 2 + uniform_below(rng, 20);
    for (std::uint64_t r = 0; r < runs; ++r) {
      w.insert(w.end(), 1 + uniform_below(rng, 6), true);
      w.insert(w.end(), 1 + uniform_below(rng, 30), false);
    }
    Detector d(cfg);
    std::size_t taps = 0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      auto e = d.sample(w[k], k);
      if (auto* t = std::get_if<TapEvent>(&e)) {
        ++taps;
        ASSERT_GE(t->press_ticks, cfg.debounce_ticks);
      }
    }
    ASSERT_EQ(taps, qualifying_presses(w, cfg.debounce_ticks)) << i;
  }
}

TEST(Detector, JitterWithinToleranceKeepsClassification) {
  Rng rng(78);
  const DetectorConfig cfg;
  for (int i = 0; i < 2000; ++i) {
    const std::size_t taps = 2 + uniform_below(rng, 5);
    std::vector<std::uint32_t> gaps;
    TapPattern expected{taps, {}};
    for (std::size_t g = 0; g + 1 < taps; ++g) {
      // nominal gaps at least tolerance+1 away from every class boundary
      const std::uint32_t short_lo = cfg.tolerance_ticks + 1;
      const std::uint32_t short_hi = cfg.gap_threshold_ticks - 1 - cfg.tolerance_ticks;
      const std::uint32_t long_lo = cfg.gap_threshold_ticks + cfg.tolerance_ticks;
      const std::uint32_t long_hi = cfg.pattern_timeout_ticks - 1 - cfg.tolerance_ticks;
      const std::uint32_t gap =
          uniform_below(rng, 2) == 0 ? short_lo + static_cast<std::uint32_t>(uniform_below(rng, short_hi - short_lo + 1))
                                     : long_lo + static_cast<std::uint32_t>(uniform_below(rng, long_hi - long_lo + 1));
      gaps.push_back(gap);
      expected.gaps.push_back(classify_gap(gap, cfg));
    }
    std::vector<bool> w(1, false);
    for (std::size_t t = 0; t < taps; ++t) {
      if (t > 0) {
        const auto jitter = static_cast<int>(uniform_below(rng, 2 * cfg.tolerance_ticks + 1)) -
                            static_cast<int>(cfg.tolerance_ticks);
        w.insert(w.end(), static_cast<std::size_t>(static_cast<int>(gaps[t - 1]) + jitter), false);
      }
      w.insert(w.end(), 1 + uniform_below(rng, 5), true);
    }
    w.insert(w.end(), cfg.pattern_timeout_ticks, false);
    const auto detected = detect_patterns(w, cfg);
    ASSERT_EQ(detected.size(), 1u);
    ASSERT_EQ(detected[0], expected) << i;
  }
}

TEST(PatternText, FormatAndParse) {
  const TapPattern p{3, {Gap::Short, Gap::Long}};
  EXPECT_EQ(p.to_text(), "T.T-T");
  EXPECT_EQ(TapPattern::parse("T.T-T"), p);
  EXPECT_EQ(TapPattern::parse("T"), (TapPattern{1, {}}));
  for (const auto* bad : {"", "T.", ".T", "TT", "T..T", "T.t", "T-T-"}) {
    EXPECT_THROW(TapPattern::parse(bad), PatternError) << bad;
  }
  for (const auto& q : enumerate_patterns(6)) EXPECT_EQ(TapPattern::parse(q.to_text()), q);
}

TEST(Otp, GoldenPatternForSeed42) {
  Rng rng(42);
  const auto c = generate_otp(rng);
  EXPECT_EQ(c.pattern.to_text(), kGoldenSeed42Pattern);
  EXPECT_EQ(to_hex(c.nonce), kGoldenSeed42Nonce);
  EXPECT_FALSE(c.consumed);
}

TEST(Otp, DegenerateBoundsGiveSingleTap) {
  Rng rng(1);
  const auto c = generate_otp(rng, {1, 1});
  EXPECT_EQ(c.pattern, (TapPattern{1, {}}));
  EXPECT_THROW(generate_otp(rng, {0, 2}), std::invalid_argument);
  EXPECT_THROW(generate_otp(rng, {4, 3}), std::invalid_argument);
}

TEST(Otp, DrawsCoverTheSmallPatternSpace) {
  Rng rng(5);
  std::set<std::string> seen;
  std::set<std::string> nonces;
  for (int i = 0; i < 10000; ++i) {
    const auto c = generate_otp(rng);
    ASSERT_GE(c.pattern.tap_count, 3u);
    ASSERT_LE(c.pattern.tap_count, 6u);
    ASSERT_TRUE(c.pattern.valid());
    if (c.pattern.tap_count <= 4) seen.insert(c.pattern.to_text());
    nonces.insert(to_hex(c.nonce));
  }
  EXPECT_EQ(seen.size(), 4u + 8u);
  EXPECT_EQ(nonces.size(), 10000u);
}

TEST(Otp, PatternSpaceSize) {
  EXPECT_EQ(pattern_space_size({3, 6}), 60u);
  std::size_t in_bounds = 0;
  for (const auto& p : enumerate_patterns(6)) in_bounds += p.tap_count >= 3;
  EXPECT_EQ(in_bounds, 60u);
}

TEST(Match, IdentityCountAndExhaustiveRejection) {
  const TapPattern p{4, {Gap::Long, Gap::Short, Gap::Long}};
  EXPECT_EQ(match(p, p), MatchResult::accept);
  EXPECT_EQ(match(TapPattern{3, {Gap::Long, Gap::Short}}, p), MatchResult::reject);

  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto expected = generate_otp(rng).pattern;
    std::size_t accepted = 0;
    for (const auto& candidate : enumerate_patterns(6)) {
      const auto r = match(candidate, expected);
      if (candidate == expected) {
        EXPECT_EQ(r, MatchResult::accept);
      } else {
        EXPECT_EQ(r, MatchResult::reject) << candidate.to_text() << " vs " << expected.to_text();
      }
      accepted += r == MatchResult::accept;
    }
    EXPECT_EQ(accepted, 1u);
  }
}

TEST(Match, CountOnlyIgnoresGaps) {
  EXPECT_EQ(match_count(TapPattern::parse("T-T-T-T"), TapPattern::parse("T.T.T.T")), MatchResult::accept);
  EXPECT_EQ(match_count(TapPattern::parse("T-T-T"), TapPattern::parse("T.T.T.T")), MatchResult::reject);
}

TEST(Match, ChallengeIsSingleUse) {
  Rng rng(3);
  auto c = generate_otp(rng);
  const auto pattern = c.pattern;
  EXPECT_EQ(verify_once(c, pattern), MatchResult::accept);
  EXPECT_TRUE(c.consumed);
  EXPECT_EQ(verify_once(c, pattern), MatchResult::reject);

  auto d = generate_otp(rng);
  EXPECT_EQ(verify_once(d, TapPattern{1, {}}), MatchResult::reject);
  EXPECT_EQ(verify_once(d, d.pattern), MatchResult::reject);
}

TEST(Render, RoundTripsEveryPatternUpToFiveTaps) {
  const DetectorConfig cfg;
  const auto render = default_render(cfg);
  std::size_t checked = 0;
  for (const auto& p : enumerate_patterns(5)) {
    const auto w = render_waveform(p, render, cfg);
    const auto back = detect_patterns(w, cfg);
    ASSERT_EQ(back.size(), 1u) << p.to_text();
    EXPECT_EQ(back[0], p);
    ++checked;
  }
  EXPECT_EQ(checked, 31u);
}

TEST(Render, SingleTapIsOnePress) {
  const DetectorConfig cfg;
  const auto w = render_waveform(TapPattern{1, {}}, default_render(cfg), cfg);
  EXPECT_EQ(qualifying_presses(w, 1), 1u);
}

TEST(Render, RejectsInvalidConfig) {
  DetectorConfig cfg;
  cfg.debounce_ticks = 3;
  RenderConfig r = default_render(cfg);
  r.press_ticks = 2;
  EXPECT_THROW(render_waveform(TapPattern{2, {Gap::Short}}, r, cfg), std::invalid_argument);
  r = default_render(cfg);
  r.short_gap_ticks = cfg.gap_threshold_ticks;
  EXPECT_THROW(render_waveform(TapPattern{2, {Gap::Short}}, r, cfg), std::invalid_argument);
  r = default_render(cfg);
  r.long_gap_ticks = cfg.pattern_timeout_ticks;
  EXPECT_THROW(render_waveform(TapPattern{2, {Gap::Long}}, r, cfg), std::invalid_argument);
}

TEST(Quantize, EdgesFromWaveformQuantizeBackExactly) {
  const ClockConfig clock;
  const DetectorConfig cfg;
  for (const auto& p : enumerate_patterns(5)) {
    const auto w = render_waveform(p, default_render(cfg), cfg);
    const auto edges = edges_from_waveform(w, clock);
    EXPECT_EQ(quantize_edges(edges, clock, w.size()), w) << p.to_text();
  }
}

TEST(Clock, TickTimes) {
  const ClockConfig clock;
  EXPECT_NEAR(clock.lclk_period_ms(), 49.6278, 1e-3);
  EXPECT_EQ(clock.tick_time(0).count(), 0);
  EXPECT_EQ(clock.tick_time(2015).count(), 100'000'000'000LL);
  EXPECT_EQ(clock.ticks_in(std::chrono::seconds(100)), 2015u);
}
