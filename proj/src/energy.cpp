#include "imdauth/energy.hpp"

#include <cmath>
#include <stdexcept>

namespace imdauth::device {

std::string_view to_string(State s) {
  switch (s) {
    case State::Idle: return "Idle";
    case State::Woken: return "Woken";
    case State::FirstFactor: return "FirstFactor";
    case State::AwaitSecondFactor: return "AwaitSecondFactor";
    case State::Verifying: return "Verifying";
    case State::Executing: return "Executing";
    case State::Notifying: return "Notifying";
    case State::Lockout: return "Lockout";
  }
  return "?";
}

std::optional<State> state_from_string(std::string_view name) {
  for (State s : kAllStates)
    if (to_string(s) == name) return s;
  return std::nullopt;
}

std::string_view to_string(Primitive p) {
  switch (p) {
    case Primitive::aes: return "aes";
    case Primitive::sha: return "sha";
    case Primitive::spi: return "spi";
  }
  return "?";
}

void PowerParams::validate() const {
  for (double v : {idle_w, active_w, aes_j_per_bit, sha_j_per_bit, spi_bps, vdd, vdc})
    if (!(v > 0.0)) throw std::invalid_argument("power parameters must be positive");
  if (!(active_w > idle_w)) throw std::invalid_argument("active power must exceed idle power");
}

EnergyLedger::EnergyLedger(PowerParams power) : power_(power) { power_.validate(); }

void EnergyLedger::accrue(State state, SimTime dt) {
  if (dt.count() < 0) throw std::invalid_argument("accrue: negative duration");
  time_[static_cast<std::size_t>(state)] += dt;
}

void EnergyLedger::debit_bits(Primitive primitive, std::uint64_t bits) { bits_[static_cast<std::size_t>(primitive)] += bits; }

SimTime EnergyLedger::sim_time() const {
  SimTime t{0};
  for (auto v : time_) t += v;
  return t;
}

double EnergyLedger::state_joules(State state) const {
  const double w = state == State::Idle ? power_.idle_w : power_.active_w;
  return w * static_cast<double>(time_in(state).count()) * 1e-9;
}

double EnergyLedger::total_joules() const {
  double sum = 0.0;
  for (State s : kAllStates) sum += state_joules(s);
  return sum;
}

double EnergyLedger::active_joules() const {
  double sum = 0.0;
  for (State s : kAllStates)
    if (s != State::Idle) sum += state_joules(s);
  return sum;
}

double EnergyLedger::primitive_joules(Primitive p) const {
  const auto b = static_cast<double>(bits(p));
  switch (p) {
    case Primitive::aes: return b * power_.aes_j_per_bit;
    case Primitive::sha: return b * power_.sha_j_per_bit;
    case Primitive::spi: return b / power_.spi_bps * power_.active_w;
  }
  return 0.0;
}

std::int64_t to_picojoules(double joules) { return static_cast<std::int64_t>(std::llround(joules * 1e12)); }

void CostModel::validate() const {
  if (!(hf_hz > 0.0)) throw std::invalid_argument("cost model clock must be positive");
  if (overhead.count() < 0) throw std::invalid_argument("cost model overhead must be >= 0");
}

std::uint64_t CostModel::cycles(const dtls::CryptoUsage& work) const {
  return work.sha_blocks * sha_cycles_per_block + work.aes_blocks * aes_cycles_per_block;
}

SimTime CostModel::compute_time(const dtls::CryptoUsage& work) const {
  return sim::from_seconds(static_cast<double>(cycles(work)) / hf_hz);
}

}  // namespace imdauth::device
