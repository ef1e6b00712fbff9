#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

#include "imdauth/handshake.hpp"
#include "imdauth/sim.hpp"

// Device lifecycle states, power parameters, the time-based energy ledger
// and the compute-latency cost model.
namespace imdauth::device {

using sim::SimTime;

enum class State : std::uint8_t {
  Idle,
  Woken,
  FirstFactor,
  AwaitSecondFactor,
  Verifying,
  Executing,
  Notifying,
  Lockout,
};

inline constexpr std::array<State, 8> kAllStates = {
    State::Idle,      State::Woken,     State::FirstFactor, State::AwaitSecondFactor,
    State::Verifying, State::Executing, State::Notifying,   State::Lockout,
};

std::string_view to_string(State s);
std::optional<State> state_from_string(std::string_view name);

struct PowerParams {
  double idle_w = 735e-12;
  double active_w = 8e-6;
  double aes_j_per_bit = 14.1e-12;
  double sha_j_per_bit = 5.3e-12;
  double spi_bps = 125'000.0;
  double vdd = 2.5;
  double vdc = 0.87;

  void validate() const;
};

enum class Primitive : std::uint8_t { aes, sha, spi };
std::string_view to_string(Primitive p);

/// Energy is power x time per state. Time is kept in integer nanoseconds so
/// totals are exact sums; primitive counters attribute part of the active
/// energy and are not added on top of it.
class EnergyLedger {
 public:
  explicit EnergyLedger(PowerParams power = {});

  void accrue(State state, SimTime dt);
  void debit_bits(Primitive primitive, std::uint64_t bits);

  SimTime time_in(State state) const { return time_[static_cast<std::size_t>(state)]; }
  SimTime sim_time() const;
  std::uint64_t bits(Primitive p) const { return bits_[static_cast<std::size_t>(p)]; }

  double state_joules(State state) const;
  double total_joules() const;
  double active_joules() const;
  double primitive_joules(Primitive p) const;

  const PowerParams& power() const { return power_; }

  friend bool operator==(const EnergyLedger& a, const EnergyLedger& b) {
    return a.time_ == b.time_ && a.bits_ == b.bits_;
  }

 private:
  PowerParams power_;
  std::array<SimTime, kAllStates.size()> time_{};
  std::array<std::uint64_t, 3> bits_{};
};

std::int64_t to_picojoules(double joules);

/// Calibrated fixed overhead per session: radio bring-up plus BLE
/// connection, charged in Woken before the device announces itself.
/// Produced by `imdauth calibrate`.
inline constexpr SimTime kCalibratedOverhead{211'820'505};

struct CostModel {
  double hf_hz = 660'000.0;
  std::uint32_t sha_cycles_per_block = 65;
  std::uint32_t aes_cycles_per_block = 12;
  SimTime overhead = kCalibratedOverhead;

  void validate() const;
  std::uint64_t cycles(const dtls::CryptoUsage& work) const;
  SimTime compute_time(const dtls::CryptoUsage& work) const;
};

}  // namespace imdauth::device
