// imdauth: run scenarios, suites, calibration, and the live tap service.
#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "imdauth/scenario.hpp"
#include "imdauth/service.hpp"

namespace fs = std::filesystem;
using namespace imdauth;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitParse = 2;

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

int cmd_run(const std::string& path, std::optional<std::uint64_t> seed, const std::vector<std::string>& overrides,
            const std::string& report_path, const std::string& format, const std::string& trace_path) {
  scenario::Scenario s;
  try {
    s = scenario::load(path, overrides);
  } catch (const scenario::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  }
  if (seed) s.world.seed = *seed;
  const auto result = scenario::run(s);
  if (!report_path.empty()) write_file(report_path, result.report.dump(2) + "\n");
  if (!trace_path.empty()) write_file(trace_path, result.trace);
  if (format == "machine") {
    std::cout << result.report.dump() << "\n";
  } else {
    std::cout << scenario::format_text(result.report);
  }
  return result.pass ? kExitOk : kExitFailed;
}

int cmd_suite(const std::string& dir, const std::string& format, const std::string& report_dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".scn") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    std::cerr << "no .scn files in " << dir << "\n";
    return kExitParse;
  }
  if (!report_dir.empty()) fs::create_directories(report_dir);

  scenario::json summary = scenario::json::array();
  bool all_pass = true;
  bool parse_failed = false;
  for (const auto& f : files) {
    scenario::json row;
    row["scenario"] = f.stem().string();
    try {
      const auto s = scenario::load(f.string());
      const auto r = scenario::run(s);
      row["outcome"] = r.report["outcome"];
      row["latency_s"] = r.report["latency"].is_null() ? scenario::json(nullptr) : r.report["latency"]["total_s"];
      row["active_pj"] = r.report["energy"]["active_pj"];
      row["pass"] = r.pass;
      all_pass = all_pass && r.pass;
      if (!report_dir.empty()) write_file((fs::path(report_dir) / (f.stem().string() + ".json")).string(), r.report.dump(2) + "\n");
    } catch (const scenario::ParseError& e) {
      row["outcome"] = "parse_error";
      row["error"] = e.what();
      row["pass"] = false;
      parse_failed = true;
    }
    summary.push_back(row);
  }

  if (format == "machine") {
    std::cout << summary.dump() << "\n";
  } else {
    std::printf("%-22s %-18s %10s %12s  %s\n", "scenario", "outcome", "latency_s", "active_pJ", "result");
    for (const auto& row : summary) {
      const std::string latency = row.contains("latency_s") && !row["latency_s"].is_null()
                                      ? std::to_string(row["latency_s"].get<double>())
                                      : "-";
      const std::string active = row.contains("active_pj") ? std::to_string(row["active_pj"].get<std::int64_t>()) : "-";
      std::printf("%-22s %-18s %10s %12s  %s\n", row["scenario"].get<std::string>().c_str(),
                  row["outcome"].get<std::string>().c_str(), latency.c_str(), active.c_str(),
                  row["pass"].get<bool>() ? "PASS" : "FAIL");
    }
  }
  if (parse_failed) return kExitParse;
  return all_pass ? kExitOk : kExitFailed;
}

int cmd_calibrate(const std::string& path, double target_ms) {
  try {
    const auto s = scenario::load(path);
    const auto overhead = scenario::calibrate_overhead(s, sim::from_millis(target_ms));
    std::cout << "overhead_ns " << overhead.count() << "\n";
    std::cout << "frozen_ns   " << device::kCalibratedOverhead.count() << "\n";
    return overhead == device::kCalibratedOverhead ? kExitOk : kExitFailed;
  } catch (const scenario::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-factor implant authentication simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string report_path, trace_path, format = "text";
  auto* run = app.add_subcommand("run", "Run one scenario and report");
  run->add_option("scenario", scenario_path, "Scenario file (.scn suffix optional)")->required();
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--override", overrides, "section.key=value, repeatable");
  run->add_option("--report", report_path, "Write the JSON report here");
  run->add_option("--trace", trace_path, "Write the event trace here");
  run->add_option("--format", format, "text or machine")->check(CLI::IsMember({"text", "machine"}));

  std::string suite_dir = "scenarios", report_dir;
  auto* suite = app.add_subcommand("suite", "Run every scenario in a directory");
  suite->add_option("dir", suite_dir, "Directory of .scn files");
  suite->add_option("--format", format, "text or machine")->check(CLI::IsMember({"text", "machine"}));
  suite->add_option("--report-dir", report_dir, "Write one JSON report per scenario here");

  std::string bind;
  std::string serve_dir = "scenarios";
  auto* serve = app.add_subcommand("serve", "Serve live sessions over HTTP and WebSocket");
  serve->add_option("--bind", bind, "host:port (default $IMDAUTH_BIND or 127.0.0.1:8750)");
  serve->add_option("--scenarios", serve_dir, "Directory sessions are started from");

  std::string cal_path = "scenarios/first_factor_only";
  double target_ms = 660.0;
  auto* calibrate = app.add_subcommand("calibrate", "Fit the fixed overhead to a latency target");
  calibrate->add_option("scenario", cal_path, "Scenario without second factor");
  calibrate->add_option("--target-ms", target_ms, "Woken to Executing target");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitParse;
  }

  try {
    if (*run) return cmd_run(scenario_path, seed, overrides, report_path, format, trace_path);
    if (*suite) return cmd_suite(suite_dir, format, report_dir);
    if (*calibrate) return cmd_calibrate(cal_path, target_ms);
    if (*serve) {
      if (bind.empty()) {
        const char* env = std::getenv("IMDAUTH_BIND");
        bind = env ? env : "127.0.0.1:8750";
      }
      service::ServiceConfig cfg;
      cfg.scenario_dir = serve_dir;
      std::tie(cfg.host, cfg.port) = service::parse_bind(bind);
      return service::serve(cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  }
  return kExitParse;
}
