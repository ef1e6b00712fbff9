#pragma once

#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "imdauth/world.hpp"

// Scenario files (INI, format in docs/formats.md), expectations, and the
// versioned run report.
namespace imdauth::scenario {

using json = nlohmann::ordered_json;

inline constexpr std::string_view kReportFormat = "imdauth-report/1";

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Expectations {
  std::optional<std::string> outcome;
  std::optional<std::vector<std::string>> outcomes;
  std::optional<std::uint64_t> executions;
  std::optional<double> latency_s;
  double latency_tol = 0.1;
  std::optional<double> active_energy_uj;
  double energy_tol = 0.01;
  std::optional<std::int64_t> total_energy_pj;
  std::optional<std::int64_t> total_energy_pj_min;
  std::optional<std::string> final_state;
  std::optional<std::uint64_t> log_records;
  std::optional<std::uint64_t> device_auth_failures;
  std::optional<std::uint64_t> lockouts;
  std::optional<std::uint64_t> handshake_payload_max;
  std::optional<std::uint64_t> sms_refused;
};

struct Scenario {
  std::string name;
  std::string path;
  simnet::WorldConfig world;
  /// Fixed end time; runs to quiescence when unset.
  std::optional<sim::SimTime> run_until;
  Expectations expect;
};

/// `overrides` are "section.key=value" strings applied on top of the file.
/// Relative paths inside the file resolve against `base_dir`.
Scenario parse(const std::string& text, const std::string& base_dir, const std::vector<std::string>& overrides = {});
Scenario load(const std::string& path, const std::vector<std::string>& overrides = {});
/// Accepts a file path, or a path without the .scn suffix.
std::string resolve_path(const std::string& path);

struct Check {
  std::string name;
  std::string expected;
  std::string actual;
  bool pass = false;
};

struct RunResult {
  json report;
  std::string trace;
  std::vector<Check> checks;
  bool pass = false;
};

/// Builds the world, runs it, and evaluates the expectations.
RunResult run(const Scenario& s);
/// Report for a finished world (exposed for the live service).
json build_report(simnet::World& w, const std::string& name, std::optional<std::vector<Check>> checks = {});
std::vector<Check> evaluate(simnet::World& w, const Expectations& e);

/// Human-readable rendering of a report.
std::string format_text(const json& report);

/// Runs `s` with zero overhead and returns the constant that puts the first
/// session's Woken-to-Executing time at `target`.
sim::SimTime calibrate_overhead(Scenario s, sim::SimTime target);

}  // namespace imdauth::scenario
