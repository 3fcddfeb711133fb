#include <benchmark/benchmark.h>

#include <random>

#include "vhil/envelope.hpp"
#include "vhil/qos_agent.hpp"
#include "vhil/scenario.hpp"
#include "vhil/sim_kernel.hpp"

using namespace vhil;

namespace {

// Schedule then drain N events with shuffled timestamps.
void BM_KernelDispatch(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  std::vector<std::int64_t> times(n);
  for (auto& t : times) t = static_cast<std::int64_t>(rng() % 1'000'000);
  std::uint64_t sink = 0;
  for (auto _ : state) {
    Kernel k;
    for (int i = 0; i < n; ++i) k.schedule_at(SimTime::micros(times[i]), 0, [&sink] { ++sink; });
    k.run_until(SimTime::seconds(1));
  }
  benchmark::DoNotOptimize(sink);
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_KernelDispatch)->Arg(1'000)->Arg(100'000);

void BM_EnvelopeRoundTrip(benchmark::State& state) {
  gateway::Envelope e{gateway::EnvelopeKind::ToSim, 42,
                      std::vector<std::uint8_t>(static_cast<std::size_t>(state.range(0)), 0xAB)};
  for (auto _ : state) {
    auto back = gateway::decode(gateway::encode(e));
    benchmark::DoNotOptimize(back.payload.data());
  }
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EnvelopeRoundTrip)->Arg(64)->Arg(1400)->Arg(65'489);

void BM_QUpdate(benchmark::State& state) {
  agent::QTable q(64);
  std::mt19937_64 rng(3);
  for (auto _ : state) {
    const auto s = static_cast<agent::StateId>(rng() % 64);
    const auto a = static_cast<agent::ActionId>(rng() % agent::kActionCount);
    benchmark::DoNotOptimize(q.update(s, a, -0.5, (s + 1) % 64, 0.1, 0.99));
  }
}
BENCHMARK(BM_QUpdate);

// One simulated episode; reports simulated seconds per wall second.
void BM_Episode(benchmark::State& state) {
  scenario::ScenarioConfig cfg;
  cfg.sim_time = SimTime::seconds(20);
  const auto density = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto k = scenario::run_episode(cfg, density, 1, nullptr);
    benchmark::DoNotOptimize(k.throughput_bps);
  }
  state.counters["sim_s"] = benchmark::Counter(20.0 * static_cast<double>(state.iterations()),
                                               benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Episode)->Arg(1)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
