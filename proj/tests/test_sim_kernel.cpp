#include <gtest/gtest.h>

#include <chrono>
#include <random>
#include <thread>

#include "vhil/sim_kernel.hpp"

using namespace vhil;
using namespace std::chrono_literals;

TEST(Kernel, DispatchesInTimeOrder) {
  Kernel k;
  std::vector<std::string> order;
  k.schedule_at(SimTime::seconds(3), 0, [] {});
  k.run_until(SimTime::seconds(3));
  k.schedule_at(SimTime::seconds(5), 0, [&] { order.push_back("5s"); });
  k.schedule_at(SimTime::seconds(4), 0, [&] { order.push_back("4s"); });
  k.run_until(SimTime::seconds(10));
  EXPECT_EQ(order, (std::vector<std::string>{"4s", "5s"}));
}

TEST(Kernel, EqualTimesAreFifo) {
  Kernel k;
  std::string order;
  k.schedule_at(SimTime::seconds(4), 0, [&] { order += "A"; });
  k.schedule_at(SimTime::seconds(4), 0, [&] { order += "B"; });
  k.run_until(SimTime::seconds(4));
  EXPECT_EQ(order, "AB");
}

TEST(Kernel, RejectsPastEvents) {
  Kernel k;
  k.run_until(SimTime::seconds(3));
  EXPECT_THROW(k.schedule_at(SimTime::seconds(2), 0, [] {}), SchedulingInPast);
  EXPECT_NO_THROW(k.schedule_at(SimTime::seconds(3), 0, [] {}));
}

TEST(Kernel, EmptyRunAdvancesClock) {
  Kernel k;
  const auto stats = k.run_until(SimTime::seconds(250));
  EXPECT_EQ(stats.events_dispatched, 0u);
  EXPECT_EQ(stats.final_clock, SimTime::seconds(250));
  EXPECT_EQ(k.now(), SimTime::seconds(250));
}

TEST(Kernel, BoundaryIsInclusive) {
  Kernel k;
  for (int s = 1; s <= 3; ++s) k.schedule_at(SimTime::seconds(s), 0, [] {});
  EXPECT_EQ(k.run_until(SimTime::seconds(2)).events_dispatched, 2u);
  EXPECT_EQ(k.pending(), 1u);
}

TEST(Kernel, CancelIsIdempotent) {
  Kernel k;
  int fired = 0;
  auto h = k.schedule_at(SimTime::seconds(1), 0, [&] { ++fired; });
  EXPECT_TRUE(k.is_pending(h));
  EXPECT_TRUE(k.cancel(h));
  EXPECT_FALSE(k.cancel(h));
  EXPECT_FALSE(k.is_pending(h));
  k.run_until(SimTime::seconds(2));
  EXPECT_EQ(fired, 0);
  auto h2 = k.schedule_at(SimTime::seconds(3), 0, [&] { ++fired; });
  k.run_until(SimTime::seconds(3));
  EXPECT_FALSE(k.cancel(h2));
  EXPECT_EQ(fired, 1);
}

TEST(Kernel, ClockNeverGoesBackwards) {
  Kernel k;
  std::mt19937_64 rng(7);
  std::vector<SimTime> seen;
  std::function<void()> spawn = [&] {
    seen.push_back(k.now());
    if (seen.size() < 5000) {
      k.schedule_in(SimTime{static_cast<std::int64_t>(rng() % 1000)}, 0, spawn);
      if (rng() % 3 == 0) k.schedule_in(SimTime{static_cast<std::int64_t>(rng() % 50)}, 1, [] {});
    }
  };
  k.schedule_at(SimTime{}, 0, spawn);
  k.run_until(SimTime::seconds(100));
  EXPECT_TRUE(std::is_sorted(seen.begin(), seen.end()));
}

TEST(Kernel, TraceIsDeterministic) {
  auto trace = [] {
    Kernel k;
    k.enable_trace(true);
    std::mt19937_64 rng(42);
    std::function<void()> tick = [&] {
      if (k.now() < SimTime::seconds(1)) {
        k.schedule_in(SimTime{static_cast<std::int64_t>(rng() % 997) + 1},
                      static_cast<NodeId>(rng() % 4), tick, static_cast<std::uint32_t>(rng() % 9));
        auto h = k.schedule_in(SimTime{5}, 9, [] {});
        if (rng() % 2) k.cancel(h);
      }
    };
    k.schedule_at(SimTime{}, 0, tick);
    k.run_until(SimTime::seconds(2));
    return k.trace();
  };
  const auto a = trace();
  const auto b = trace();
  ASSERT_GT(a.size(), 1000u);
  EXPECT_EQ(a, b);
}

TEST(Kernel, ModeIsChecked) {
  Kernel v(KernelMode::Virtual);
  Kernel r(KernelMode::RealTime);
  EXPECT_THROW(v.run_realtime(SimTime::seconds(1)), WrongKernelMode);
  EXPECT_THROW(r.run_until(SimTime::seconds(1)), WrongKernelMode);
}

TEST(RealTimeKernel, EmptyRunTakesWallDuration) {
  Kernel k(KernelMode::RealTime, SimTime::millis(5));
  const auto stats = k.run_realtime(SimTime::seconds(1));
  EXPECT_GE(stats.wall_duration, 1s);
  EXPECT_LE(stats.wall_duration, 1s + 5ms);
  EXPECT_EQ(stats.final_clock, SimTime::seconds(1));
}

TEST(RealTimeKernel, EventDriftWithinBudget) {
  Kernel k(KernelMode::RealTime, SimTime::millis(5));
  const auto t0 = std::chrono::steady_clock::now();
  std::chrono::steady_clock::duration fired_at{};
  k.schedule_at(SimTime::millis(500), 0,
                [&] { fired_at = std::chrono::steady_clock::now() - t0; });
  const auto stats = k.run_realtime(SimTime::millis(600));
  EXPECT_LE(stats.max_drift, SimTime::millis(5));
  EXPECT_EQ(stats.overloads, 0u);
  EXPECT_GE(fired_at, 500ms);
  EXPECT_LE(fired_at, 505ms);
}

TEST(RealTimeKernel, InjectionIsStampedNearWallTime) {
  Kernel k(KernelMode::RealTime, SimTime::millis(5));
  SimTime stamped{-1};
  std::thread producer([&] {
    std::this_thread::sleep_for(300ms);
    k.inject([&] { stamped = k.now(); });
  });
  const auto stats = k.run_realtime(SimTime::millis(500));
  producer.join();
  EXPECT_EQ(stats.injections, 1u);
  EXPECT_GE(stamped, SimTime::millis(300) - SimTime::millis(5));
  EXPECT_LE(stamped, SimTime::millis(300) + SimTime::millis(5));
}

TEST(RealTimeKernel, RequestStopEndsEarly) {
  Kernel k(KernelMode::RealTime);
  std::thread stopper([&] {
    std::this_thread::sleep_for(100ms);
    k.request_stop();
  });
  const auto stats = k.run_realtime(SimTime::seconds(10));
  stopper.join();
  EXPECT_LT(stats.wall_duration, 2s);
}

TEST(RealTimeKernel, SleepPacingKeepsOrderAndHorizon) {
  Kernel k(KernelMode::RealTime, SimTime::millis(5));
  k.set_spin_window(SimTime{});
  std::vector<int> order;
  for (int i = 0; i < 5; ++i) {
    k.schedule_at(SimTime::millis(40 * (5 - i)), 0, [&order, i] { order.push_back(i); });
  }
  const auto stats = k.run_realtime(SimTime::millis(250));
  EXPECT_EQ(order, (std::vector<int>{4, 3, 2, 1, 0}));
  EXPECT_GE(stats.wall_duration, 250ms);
  EXPECT_EQ(stats.final_clock, SimTime::millis(250));
}
