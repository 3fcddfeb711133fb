#include "vhil/sim_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace vhil {

SimTime SimTime::from_seconds(double s) {
  return SimTime{static_cast<std::int64_t>(std::llround(s * 1e6))};
}

std::string to_string(SimTime t) {
  return std::to_string(t.us) + "us";
}

SchedulingInPast::SchedulingInPast(SimTime fire_time, SimTime clock)
    : std::logic_error("event scheduled at " + to_string(fire_time) +
                       " which is before the current clock " + to_string(clock)) {}

Kernel::Kernel(KernelMode mode, SimTime drift_budget)
    : mode_(mode), drift_budget_(drift_budget) {}

EventHandle Kernel::schedule(SimEvent event) {
  if (event.fire_time < clock_) {
    throw SchedulingInPast(event.fire_time, clock_);
  }
  const std::uint64_t seq = next_seq_++;
  heap_.push(Key{event.fire_time, seq});
  actions_.emplace(seq, Pending{event.target, event.tag, std::move(event.action)});
  return EventHandle{seq};
}

EventHandle Kernel::schedule_at(SimTime at, NodeId target, std::function<void()> action,
                                std::uint32_t tag) {
  return schedule(SimEvent{at, target, tag, std::move(action)});
}

EventHandle Kernel::schedule_in(SimTime delay, NodeId target, std::function<void()> action,
                                std::uint32_t tag) {
  return schedule(SimEvent{clock_ + delay, target, tag, std::move(action)});
}

bool Kernel::cancel(EventHandle handle) {
  return actions_.erase(handle.seq) > 0;
}

bool Kernel::is_pending(EventHandle handle) const {
  return actions_.contains(handle.seq);
}

const Kernel::Key* Kernel::peek_live() {
  // Cancelled events stay in the heap until they surface here.
  while (!heap_.empty() && !actions_.contains(heap_.top().seq)) {
    heap_.pop();
  }
  return heap_.empty() ? nullptr : &heap_.top();
}

bool Kernel::pop_next(Key& key, Pending& out) {
  if (peek_live() == nullptr) {
    return false;
  }
  key = heap_.top();
  heap_.pop();
  auto it = actions_.find(key.seq);
  out = std::move(it->second);
  actions_.erase(it);
  return true;
}

void Kernel::dispatch(const Key& key, Pending& ev) {
  clock_ = key.fire_time;
  if (tracing_) {
    trace_.push_back(TraceEntry{key.fire_time, key.seq, ev.target, ev.tag});
  }
  if (ev.action) {
    ev.action();
  }
}

RunStats Kernel::run_until(SimTime t_end) {
  if (mode_ != KernelMode::Virtual) {
    throw WrongKernelMode("run_until requires a Virtual kernel");
  }
  RunStats stats;
  Key key{};
  Pending ev{};
  while (const Key* next = peek_live()) {
    if (next->fire_time > t_end) {
      break;
    }
    pop_next(key, ev);
    dispatch(key, ev);
    ++stats.events_dispatched;
  }
  clock_ = std::max(clock_, t_end);
  stats.final_clock = clock_;
  return stats;
}

void Kernel::inject(std::function<void()> action, NodeId target, std::uint32_t tag) {
  {
    std::lock_guard lock(inject_mu_);
    injected_.push_back(Injection{target, tag, std::move(action)});
  }
  inject_cv_.notify_one();
}

std::size_t Kernel::injected_backlog() const {
  std::lock_guard lock(inject_mu_);
  return injected_.size();
}

void Kernel::request_stop() {
  {
    std::lock_guard lock(inject_mu_);
    stop_requested_ = true;
  }
  inject_cv_.notify_one();
}

std::size_t Kernel::drain_injections(SimTime stamp) {
  std::vector<Injection> batch;
  {
    std::lock_guard lock(inject_mu_);
    batch.swap(injected_);
  }
  for (auto& inj : batch) {
    schedule(SimEvent{stamp, inj.target, inj.tag, std::move(inj.action)});
  }
  return batch.size();
}

RunStats Kernel::run_realtime(SimTime t_end) {
  using Clock = std::chrono::steady_clock;
  if (mode_ != KernelMode::RealTime) {
    throw WrongKernelMode("run_realtime requires a RealTime kernel");
  }
  RunStats stats;
  // Wall offset zero corresponds to the virtual clock at entry.
  const SimTime base = clock_;
  const auto start = Clock::now();
  auto elapsed = [&] {
    return base + SimTime{std::chrono::duration_cast<std::chrono::microseconds>(
                              Clock::now() - start)
                              .count()};
  };

  Key key{};
  Pending ev{};
  for (;;) {
    SimTime wall = elapsed();
    {
      std::lock_guard lock(inject_mu_);
      if (stop_requested_) {
        stop_requested_ = false;
        t_end = std::clamp(wall, clock_, t_end);
        break;
      }
    }
    if (wall <= t_end) {
      stats.injections += drain_injections(std::max(wall, clock_));
    }

    const Key* next = peek_live();
    const bool has_due = next != nullptr && next->fire_time <= t_end;
    const SimTime target = has_due ? next->fire_time : t_end;
    if (wall < target) {
      // Host sleeps overshoot by milliseconds, so sleep only until shortly
      // before the deadline and yield-spin through the remainder.
      const auto deadline = start + std::chrono::microseconds((target - base).us);
      if (spin_window_ && target - wall > *spin_window_) {
        std::unique_lock lock(inject_mu_);
        inject_cv_.wait_until(lock, deadline - std::chrono::microseconds(spin_window_->us),
                              [&] { return !injected_.empty() || stop_requested_; });
      } else {
        std::this_thread::yield();
      }
      continue;
    }
    if (!has_due) {
      break;
    }

    pop_next(key, ev);
    const SimTime drift = std::max(SimTime{}, elapsed() - key.fire_time);
    stats.max_drift = std::max(stats.max_drift, drift);
    if (drift > drift_budget_) {
      ++stats.overloads;
    }
    dispatch(key, ev);
    ++stats.events_dispatched;
  }
  clock_ = std::max(clock_, t_end);
  stats.final_clock = clock_;
  stats.wall_duration = Clock::now() - start;
  return stats;
}

}  // namespace vhil
