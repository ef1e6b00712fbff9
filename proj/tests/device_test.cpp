#include <gtest/gtest.h>

#include <map>
#include <set>

#include "imdauth/device.hpp"
#include "imdauth/world.hpp"

using namespace imdauth;
using namespace imdauth::device;
using namespace std::chrono_literals;

namespace {

DeviceConfig config() {
  DeviceConfig c;
  c.psk_identity = to_bytes("alice");
  c.psk = from_hex("3f1c9a7e52d04b8861aa0c7d19e4f2b6");
  return c;
}

// Every simple path from Idle to Executing through the transition table.
void paths(const std::vector<std::pair<State, State>>& table, State at, std::vector<State>& path,
           std::vector<std::vector<State>>& out) {
  if (at == State::Executing) {
    out.push_back(path);
    return;
  }
  for (const auto& [from, to] : table) {
    if (from != at || std::find(path.begin(), path.end(), to) != path.end()) continue;
    path.push_back(to);
    paths(table, to, path, out);
    path.pop_back();
  }
}

std::vector<std::vector<State>> executing_paths(bool second_factor) {
  std::vector<std::vector<State>> out;
  std::vector<State> path{State::Idle};
  paths(transition_table(second_factor), State::Idle, path, out);
  return out;
}

bool contains(const std::vector<State>& path, State s) { return std::find(path.begin(), path.end(), s) != path.end(); }

struct Bench {
  sim::Simulator sim;
  std::vector<Bytes> sent;
  Device dev;

  explicit Bench(DeviceConfig c = config()) : dev(sim, std::move(c), Rng(1), [this](Bytes b) { sent.push_back(b); }) {}

  void tap(const tapcode::TapPattern& p, SimTime at) {
    simnet::schedule_taps(sim, dev, at, p, tapcode::default_render(dev.config().detector));
  }
};

}  // namespace

TEST(Transitions, ExecutingNeedsVerifyingWhenSecondFactorIsOn) {
  const auto all = executing_paths(true);
  ASSERT_FALSE(all.empty());
  for (const auto& p : all) {
    EXPECT_TRUE(contains(p, State::FirstFactor));
    EXPECT_TRUE(contains(p, State::AwaitSecondFactor));
    EXPECT_TRUE(contains(p, State::Verifying));
  }
}

TEST(Transitions, FirstFactorOnlySkipsTheOtpStates) {
  const auto all = executing_paths(false);
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0], (std::vector<State>{State::Idle, State::Woken, State::FirstFactor, State::Notifying,
                                        State::Executing}));
  for (const auto& [from, to] : transition_table(false)) {
    EXPECT_NE(to, State::AwaitSecondFactor);
    EXPECT_NE(to, State::Verifying);
  }
}

TEST(Transitions, EveryStateReturnsToIdle) {
  for (bool sf : {true, false}) {
    for (State s : kAllStates) {
      if (!sf && (s == State::AwaitSecondFactor || s == State::Verifying)) continue;
      std::set<State> seen{s};
      std::vector<State> frontier{s};
      while (!frontier.empty()) {
        const State at = frontier.back();
        frontier.pop_back();
        for (const auto& [from, to] : transition_table(sf))
          if (from == at && seen.insert(to).second) frontier.push_back(to);
      }
      EXPECT_TRUE(seen.count(State::Idle)) << to_string(s);
    }
  }
  EXPECT_FALSE(transition_allowed(State::Idle, State::Executing, true));
  EXPECT_FALSE(transition_allowed(State::FirstFactor, State::Notifying, true));
  EXPECT_TRUE(transition_allowed(State::FirstFactor, State::Notifying, false));
}

TEST(StateNames, RoundTrip) {
  for (State s : kAllStates) EXPECT_EQ(state_from_string(to_string(s)), s);
  EXPECT_FALSE(state_from_string("Sleeping"));
}

TEST(Ledger, OneYearIdle) {
  EnergyLedger l;
  l.accrue(State::Idle, std::chrono::hours(24 * 365));
  EXPECT_NEAR(l.total_joules(), 23.18e-3, 0.01e-3);
  EXPECT_EQ(l.active_joules(), 0.0);
}

TEST(Ledger, OneHourIdleIsExact) {
  EnergyLedger l;
  l.accrue(State::Idle, 1h);
  EXPECT_EQ(to_picojoules(l.total_joules()), 2'646'000);
}

TEST(Ledger, ZeroIntervalAddsNothing) {
  EnergyLedger l;
  l.accrue(State::FirstFactor, 0ns);
  EXPECT_EQ(l.total_joules(), 0.0);
  EXPECT_EQ(l, EnergyLedger{});
}

TEST(Ledger, ActiveStatesUseActivePower) {
  EnergyLedger l;
  l.accrue(State::FirstFactor, 660ms);
  EXPECT_EQ(to_picojoules(l.active_joules()), 5'280'000);
  l.debit_bits(Primitive::aes, 1000);
  EXPECT_NEAR(l.primitive_joules(Primitive::aes), 14.1e-9, 1e-15);
  EXPECT_EQ(to_picojoules(l.total_joules()), 5'280'000);
}

TEST(Ledger, RejectsBadPowerParams) {
  PowerParams p;
  p.idle_w = -1;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Cost, ComputeTimeScalesWithBlocks) {
  CostModel m;
  dtls::CryptoUsage u;
  EXPECT_EQ(m.compute_time(u), 0ns);
  u.aes_blocks = 660;
  EXPECT_EQ(m.cycles(u), 660u * 12u);
  EXPECT_EQ(m.compute_time(u), 12ms);
}

TEST(Wake, MatchingPatternWakesAndAnnounces) {
  Bench b;
  b.tap(tapcode::TapPattern::uniform(4), 1s);
  b.sim.run_until(10s);
  EXPECT_EQ(b.dev.stats().wakes, 1u);
  ASSERT_FALSE(b.sent.empty());
  EXPECT_TRUE(std::holds_alternative<msg::Ready>(msg::decode_control(b.sent.front())));
  // No GO ever comes: READY is resent, then the device gives up.
  b.sim.run();
  EXPECT_EQ(b.dev.state(), State::Idle);
  EXPECT_EQ(b.sent.size(), 1u + b.dev.config().max_retransmits);
}

TEST(Wake, WrongPatternStaysIdle) {
  Bench b;
  b.tap(tapcode::TapPattern::parse("T.T-T.T"), 1s);
  b.tap(tapcode::TapPattern::uniform(3), 10s);
  b.sim.run();
  EXPECT_EQ(b.dev.stats().wakes, 0u);
  EXPECT_EQ(b.dev.stats().wake_mismatches, 2u);
  EXPECT_TRUE(b.sent.empty());
  EXPECT_EQ(b.dev.ledger().active_joules(), 0.0);
}

TEST(Wake, CountMatchIgnoresGapClasses) {
  auto c = config();
  c.wake_match = WakeMatch::count;
  Bench b(c);
  b.tap(tapcode::TapPattern::parse("T-T.T-T"), 1s);
  b.sim.run_until(12s);
  EXPECT_EQ(b.dev.stats().wakes, 1u);
}

TEST(Wake, TouchIsNotSampledOnceWoken) {
  Bench b;
  std::vector<State> states;
  b.dev.on_transition([&](State, State to) { states.push_back(to); });
  b.tap(tapcode::TapPattern::uniform(4), 1s);
  // Pattern completes at ~7.6 s; READY retries keep it Woken to ~11.8 s.
  b.tap(tapcode::TapPattern::uniform(4), 9s);
  b.sim.run();
  EXPECT_EQ(b.dev.stats().wakes, 1u);
  EXPECT_EQ(states, (std::vector<State>{State::Woken, State::Idle}));
}

TEST(Radio, FramesInIdleCostNothing) {
  Bench quiet;
  quiet.sim.run_until(1h);
  quiet.dev.settle();

  Bench spammed;
  for (int i = 0; i < 1000; ++i)
    spammed.sim.schedule_at(SimTime(i * 3'600'000'000LL), [&, i] { spammed.dev.on_radio(Bytes(40, std::uint8_t(i))); });
  spammed.sim.run_until(1h);
  spammed.dev.settle();

  EXPECT_EQ(spammed.dev.stats().frames_ignored_idle, 1000u);
  EXPECT_EQ(spammed.dev.ledger(), quiet.dev.ledger());
  EXPECT_EQ(to_picojoules(spammed.dev.ledger().total_joules()), 2'646'000);
}

TEST(Radio, AblationPaysForEveryFrame) {
  auto c = config();
  c.radio_on_in_idle = true;
  Bench b(c);
  for (int i = 0; i < 1000; ++i) b.sim.schedule_at(SimTime(i * 1'000'000'000LL), [&] { b.dev.on_radio(Bytes(40)); });
  b.sim.run_until(1h);
  b.dev.settle();
  EXPECT_EQ(b.dev.stats().radio_wakes, 1000u);
  EXPECT_GT(b.dev.ledger().active_joules(), 0.0);
  EXPECT_EQ(b.dev.stats().executions, 0u);
  EXPECT_EQ(b.dev.state(), State::Idle);
}

TEST(Config, Validation) {
  auto c = config();
  c.psk = Bytes(8);
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = config();
  c.psk_identity.clear();
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = config();
  c.max_failed_attempts = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_NO_THROW(config().validate());
}
