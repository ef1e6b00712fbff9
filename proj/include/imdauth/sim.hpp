#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "imdauth/bytes.hpp"

// Discrete-event core: virtual nanosecond clock, (time, insertion) ordered
// queue, event trace, and datagram links.
namespace imdauth::sim {

using SimTime = std::chrono::nanoseconds;
using EventId = std::uint64_t;

SimTime from_seconds(double s);
SimTime from_millis(double ms);
double to_seconds(SimTime t);

class Simulator {
 public:
  using Action = std::function<void()>;

  SimTime now() const { return now_; }

  /// Throws std::invalid_argument when `at` is in the past.
  EventId schedule_at(SimTime at, Action action);
  EventId schedule_in(SimTime delay, Action action) { return schedule_at(now_ + delay, std::move(action)); }
  void cancel(EventId id);

  /// Fires the next event. False when the queue is empty.
  bool step();
  /// Fires every event with time <= end, then sets the clock to end.
  std::size_t run_until(SimTime end);
  /// Runs to quiescence, or until max_events have fired.
  std::size_t run(std::size_t max_events = SIZE_MAX);

  std::optional<SimTime> next_time();
  bool empty();
  std::uint64_t events_fired() const { return fired_; }

  void set_tracing(bool on) { tracing_ = on; }
  bool tracing() const { return tracing_; }
  /// Appends "<now_ns> <source> <text>" to the trace.
  void trace(std::string_view source, std::string_view text);
  const std::vector<std::string>& trace_lines() const { return trace_; }
  std::string trace_text() const;

 private:
  struct Entry {
    SimTime at;
    EventId seq;
    Action action;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  void drop_cancelled();

  SimTime now_{0};
  EventId next_seq_ = 1;
  std::uint64_t fired_ = 0;
  std::priority_queue<Entry, std::vector<Entry>, Later> queue_;
  std::unordered_set<EventId> cancelled_;
  bool tracing_ = true;
  std::vector<std::string> trace_;
};

struct LinkConfig {
  double loss_rate = 0.0;
  SimTime delay{0};
  SimTime jitter{0};
  double bandwidth_bps = 125'000.0;

  void validate() const;
};

struct LinkStats {
  std::uint64_t frames = 0;
  std::uint64_t dropped = 0;
  std::uint64_t bytes = 0;
};

/// One-way datagram pipe: FIFO serialization at bandwidth_bps, then
/// propagation delay plus uniform jitter in [0, jitter]. Loss is silent.
class Link {
 public:
  using Deliver = std::function<void(Bytes)>;

  Link(Simulator& sim, std::string name, LinkConfig config, Rng rng);

  void send(Bytes frame, Deliver deliver);
  /// Time the sender's interface is busy putting `bytes` on the link.
  SimTime serialization_time(std::size_t bytes) const;

  const LinkConfig& config() const { return config_; }
  const LinkStats& stats() const { return stats_; }
  const std::string& name() const { return name_; }

 private:
  Simulator& sim_;
  std::string name_;
  LinkConfig config_;
  Rng rng_;
  SimTime busy_until_{0};
  LinkStats stats_;
};

}  // namespace imdauth::sim
