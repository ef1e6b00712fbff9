#include "imdauth/sim.hpp"

#include <cmath>
#include <stdexcept>

namespace imdauth::sim {

SimTime from_seconds(double s) { return SimTime(static_cast<std::int64_t>(std::llround(s * 1e9))); }
SimTime from_millis(double ms) { return SimTime(static_cast<std::int64_t>(std::llround(ms * 1e6))); }
double to_seconds(SimTime t) { return static_cast<double>(t.count()) / 1e9; }

EventId Simulator::schedule_at(SimTime at, Action action) {
  if (at < now_) throw std::invalid_argument("cannot schedule an event in the past");
  const EventId id = next_seq_++;
  queue_.push(Entry{at, id, std::move(action)});
  return id;
}

void Simulator::cancel(EventId id) { cancelled_.insert(id); }

void Simulator::drop_cancelled() {
  while (!queue_.empty() && cancelled_.count(queue_.top().seq)) {
    cancelled_.erase(queue_.top().seq);
    queue_.pop();
  }
}

bool Simulator::step() {
  drop_cancelled();
  if (queue_.empty()) return false;
  // priority_queue::top is const; the action is moved out before pop.
  Entry e = std::move(const_cast<Entry&>(queue_.top()));
  queue_.pop();
  now_ = e.at;
  ++fired_;
  e.action();
  return true;
}

std::size_t Simulator::run_until(SimTime end) {
  std::size_t n = 0;
  for (;;) {
    drop_cancelled();
    if (queue_.empty() || queue_.top().at > end) break;
    step();
    ++n;
  }
  if (end > now_) now_ = end;
  return n;
}

std::size_t Simulator::run(std::size_t max_events) {
  std::size_t n = 0;
  while (n < max_events && step()) ++n;
  return n;
}

std::optional<SimTime> Simulator::next_time() {
  drop_cancelled();
  if (queue_.empty()) return std::nullopt;
  return queue_.top().at;
}

bool Simulator::empty() {
  drop_cancelled();
  return queue_.empty();
}

void Simulator::trace(std::string_view source, std::string_view text) {
  if (!tracing_) return;
  std::string line = std::to_string(now_.count());
  line.push_back(' ');
  line.append(source);
  line.push_back(' ');
  line.append(text);
  trace_.push_back(std::move(line));
}

std::string Simulator::trace_text() const {
  std::string out;
  for (const auto& l : trace_) {
    out += l;
    out.push_back('\n');
  }
  return out;
}

void LinkConfig::validate() const {
  if (!(loss_rate >= 0.0 && loss_rate < 1.0)) throw std::invalid_argument("link loss_rate must be in [0, 1)");
  if (!(bandwidth_bps > 0.0)) throw std::invalid_argument("link bandwidth must be positive");
  if (delay.count() < 0 || jitter.count() < 0) throw std::invalid_argument("link delay and jitter must be >= 0");
}

Link::Link(Simulator& sim, std::string name, LinkConfig config, Rng rng)
    : sim_(sim), name_(std::move(name)), config_(config), rng_(rng) {
  config_.validate();
}

SimTime Link::serialization_time(std::size_t bytes) const {
  return from_seconds(static_cast<double>(bytes) * 8.0 / config_.bandwidth_bps);
}

void Link::send(Bytes frame, Deliver deliver) {
  ++stats_.frames;
  stats_.bytes += frame.size();
  const SimTime start = std::max(sim_.now(), busy_until_);
  busy_until_ = start + serialization_time(frame.size());

  // Both draws happen on every send so the stream does not depend on the
  // loss outcome.
  const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  const std::uint64_t j = config_.jitter.count() > 0
                              ? uniform_below(rng_, static_cast<std::uint64_t>(config_.jitter.count()) + 1)
                              : (rng_(), 0);
  if (u < config_.loss_rate) {
    ++stats_.dropped;
    sim_.trace(name_, "drop len=" + std::to_string(frame.size()));
    return;
  }
  const SimTime at = busy_until_ + config_.delay + SimTime(static_cast<std::int64_t>(j));
  sim_.schedule_at(at, [deliver = std::move(deliver), frame = std::move(frame)]() mutable { deliver(std::move(frame)); });
}

}  // namespace imdauth::sim
