#pragma once

#include <chrono>
#include <compare>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace vhil {

using NodeId = std::uint32_t;

/// Simulation time in integer microseconds since the start of a run.
/// Also used for non-negative durations.
struct SimTime {
  std::int64_t us = 0;

  static constexpr SimTime micros(std::int64_t v) { return SimTime{v}; }
  static constexpr SimTime millis(std::int64_t v) { return SimTime{v * 1000}; }
  static constexpr SimTime seconds(std::int64_t v) { return SimTime{v * 1'000'000}; }
  /// Rounds to the nearest microsecond.
  static SimTime from_seconds(double s);

  constexpr double to_seconds() const { return static_cast<double>(us) / 1e6; }

  constexpr auto operator<=>(const SimTime&) const = default;
  constexpr SimTime operator+(SimTime o) const { return SimTime{us + o.us}; }
  constexpr SimTime operator-(SimTime o) const { return SimTime{us - o.us}; }
  constexpr SimTime& operator+=(SimTime o) {
    us += o.us;
    return *this;
  }
};

std::string to_string(SimTime t);

class SchedulingInPast : public std::logic_error {
 public:
  SchedulingInPast(SimTime fire_time, SimTime clock);
};

class WrongKernelMode : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class KernelMode { Virtual, RealTime };

/// A unit of work for the kernel. `seq` is assigned by Kernel::schedule.
struct SimEvent {
  SimTime fire_time;
  NodeId target = 0;
  std::uint32_t tag = 0;
  std::function<void()> action;
};

struct EventHandle {
  std::uint64_t seq = 0;
};

/// One dispatched event, as recorded when tracing is enabled.
struct TraceEntry {
  SimTime fire_time;
  std::uint64_t seq;
  NodeId target;
  std::uint32_t tag;

  bool operator==(const TraceEntry&) const = default;
};

struct RunStats {
  std::uint64_t events_dispatched = 0;
  SimTime final_clock;
  // Real-time runs only.
  SimTime max_drift;
  std::uint64_t overloads = 0;
  std::uint64_t injections = 0;
  std::chrono::nanoseconds wall_duration{0};
};

/// Single-threaded discrete-event engine.
///
/// Events are dispatched in (fire_time, seq) order. In RealTime mode the
/// clock is paced to the host steady clock and work posted with inject()
/// from other threads is admitted between dispatches, stamped with the
/// current virtual time.
class Kernel {
 public:
  explicit Kernel(KernelMode mode = KernelMode::Virtual,
                  SimTime drift_budget = SimTime::millis(5));

  Kernel(const Kernel&) = delete;
  Kernel& operator=(const Kernel&) = delete;

  KernelMode mode() const { return mode_; }
  SimTime drift_budget() const { return drift_budget_; }

  /// Real-time pacing: waits longer than this sleep until the window
  /// remains, then yield-spin. Host sleeps can overshoot by milliseconds,
  /// so the default spins through every wait. Zero always sleeps.
  void set_spin_window(std::optional<SimTime> window) { spin_window_ = window; }
  std::optional<SimTime> spin_window() const { return spin_window_; }
  SimTime now() const { return clock_; }

  EventHandle schedule(SimEvent event);
  EventHandle schedule_at(SimTime at, NodeId target, std::function<void()> action,
                          std::uint32_t tag = 0);
  EventHandle schedule_in(SimTime delay, NodeId target, std::function<void()> action,
                          std::uint32_t tag = 0);

  /// Returns true if the event was still pending. Re-cancelling, or
  /// cancelling an event that already fired, is a no-op returning false.
  bool cancel(EventHandle handle);
  bool is_pending(EventHandle handle) const;
  std::size_t pending() const { return actions_.size(); }

  /// Virtual mode only. Dispatches every event with fire_time <= t_end
  /// (inclusive) and leaves the clock at t_end.
  RunStats run_until(SimTime t_end);

  /// RealTime mode only. Paces dispatch to wall-clock time from the call
  /// instant and returns once wall time reaches t_end.
  RunStats run_realtime(SimTime t_end);

  /// Thread-safe. The action runs on the kernel thread as an event stamped
  /// with the virtual time at which it was drained.
  void inject(std::function<void()> action, NodeId target = 0, std::uint32_t tag = 0);
  std::size_t injected_backlog() const;

  /// Makes a blocked run_realtime return at the next opportunity.
  void request_stop();

  void enable_trace(bool on) { tracing_ = on; }
  const std::vector<TraceEntry>& trace() const { return trace_; }

 private:
  struct Key {
    SimTime fire_time;
    std::uint64_t seq;
    bool operator>(const Key& o) const {
      return fire_time != o.fire_time ? fire_time > o.fire_time : seq > o.seq;
    }
  };
  struct Pending {
    NodeId target;
    std::uint32_t tag;
    std::function<void()> action;
  };
  struct Injection {
    NodeId target;
    std::uint32_t tag;
    std::function<void()> action;
  };

  bool pop_next(Key& key, Pending& out);
  const Key* peek_live();
  void dispatch(const Key& key, Pending& ev);
  std::size_t drain_injections(SimTime stamp);

  KernelMode mode_;
  SimTime drift_budget_;
  std::optional<SimTime> spin_window_;
  SimTime clock_{};
  std::uint64_t next_seq_ = 1;
  std::priority_queue<Key, std::vector<Key>, std::greater<>> heap_;
  std::unordered_map<std::uint64_t, Pending> actions_;
  bool tracing_ = false;
  std::vector<TraceEntry> trace_;

  mutable std::mutex inject_mu_;
  std::condition_variable inject_cv_;
  std::vector<Injection> injected_;
  bool stop_requested_ = false;
};

}  // namespace vhil
