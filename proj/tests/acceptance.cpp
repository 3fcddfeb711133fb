// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure.

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include <unistd.h>

#include "mdp_harness.hpp"
#include "oracles.hpp"
#include "vhil/envelope.hpp"
#include "vhil/gateway.hpp"
#include "vhil/qos_agent.hpp"
#include "vhil/radio.hpp"
#include "vhil/report.hpp"
#include "vhil/scenario.hpp"

using namespace vhil;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void verdict(int id, bool ok, const std::string& what) {
  std::printf("[%s] %d %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void q_learning_oracle() {
  const auto t0 = Clock::now();
  const auto m = oracle::ring_mdp();
  agent::QTable q(m.states, m.actions);
  const auto pi = train_on_mdp(m, q, 400'000, 21);
  const auto vstar = oracle::value_iteration(m);
  const auto vpi = oracle::policy_values(m, pi);
  double err = 0;
  for (std::size_t s = 0; s < m.states; ++s) err = std::max(err, std::abs(vpi[s] - vstar[s]));
  const double secs = seconds_since(t0);
  verdict(1, err <= 1e-3 && secs < 10.0,
          fmt("Q-learning vs value iteration: inf-norm %.3g (tol 1e-3), %.2f s (limit 10 s)", err,
              secs));
}

void update_rule() {
  agent::QTable q(2);
  const double a = q.update(0, 0, 0.0, 1, 0.1, 0.99);
  agent::QTable q2(2);
  const double b = q2.update(0, 0, 1.0, 1, 0.1, 0.99);
  agent::QTable q3(2);
  q3.set(0, 0, 0.5);
  q3.set(1, 3, 1.0);
  const double c = q3.update(0, 0, 0.0, 1, 0.1, 0.99);
  const bool ok = a == 0.0 && b == 0.1 && c == 0.5 + 0.1 * (0.99 - 0.5) &&
                  std::abs(c - 0.549) <= 1e-15;
  verdict(2, ok, fmt("Q update examples: %.17g, %.17g, %.17g (expect 0, 0.1, 0.549)", a, b, c));
}

void collision_oracle() {
  radio::DcfState d;
  d.current_cw = 15;
  radio::Rng rng(2024);
  constexpr int kRounds = 200'000;
  int same = 0;
  for (int i = 0; i < kRounds; ++i) same += radio::draw_backoff(d, rng) == radio::draw_backoff(d, rng);
  const double got = static_cast<double>(same) / kRounds;
  const double expect = oracle::same_slot_probability(15);
  const double rel = std::abs(got - expect) / expect;
  verdict(3, rel <= 0.02,
          fmt("same-slot collision rate %.5f vs enumeration %.5f over %d rounds (rel err %.4f, "
              "tol 0.02)",
              got, expect, kRounds, rel));
}

void density_trend() {
  scenario::ScenarioConfig cfg;
  std::vector<double> delays;
  double worst_wall = 0;
  bool ok = true;
  std::string detail;
  for (std::size_t d : {1, 2, 3, 5}) {
    const auto t0 = Clock::now();
    const auto k = scenario::run_episode(cfg, d, 1, nullptr);
    worst_wall = std::max(worst_wall, seconds_since(t0));
    const double delay = k.mean_delay_s.value_or(NAN);
    detail += fmt("d%zu=%.4f s ", d, delay);
    if (!delays.empty() && !(delay >= delays.back())) ok = false;
    delays.push_back(delay);
  }
  const double ratio = delays.back() / delays.front();
  ok = ok && ratio >= 2.0 && worst_wall < 60.0;
  verdict(4, ok,
          fmt("mean delay %s| d5/d1 = %.2f (need >= 2, nondecreasing), slowest density %.2f s "
              "wall (limit 60 s)",
              detail.c_str(), ratio, worst_wall));
}

void rl_vs_static() {
  scenario::ScenarioConfig cfg;
  cfg.densities = {5};
  cfg.rl_enabled = true;
  const auto rl = scenario::run_scenario(cfg).at(5, cfg.episodes).mean_reward;
  double best = -1e300;
  int best_action = -1;
  std::string detail;
  for (agent::ActionId a = 0; a < agent::kActionCount; ++a) {
    auto s = cfg;
    s.fixed_action = a;
    const auto r = scenario::run_scenario(s).at(5, cfg.episodes).mean_reward;
    detail += fmt("a%u=%.4f ", a, r);
    if (r > best) {
      best = r;
      best_action = static_cast<int>(a);
    }
  }
  const double threshold = best - 0.05 * std::abs(best);
  verdict(5, rl >= threshold,
          fmt("density 5 episode-3 reward: RL %.4f vs best static a%d %.4f (threshold %.4f); "
              "static %s",
              rl, best_action, best, threshold, detail.c_str()));
}

void gateway_transparency() {
  std::mt19937_64 rng(65'489);
  std::uniform_int_distribution<std::size_t> len(1, gateway::kMaxEnvelopePayload);
  int bad = 0;
  for (int i = 0; i < 10'000; ++i) {
    gateway::Envelope e{gateway::EnvelopeKind::ToSim, rng(), {}};
    e.payload.resize(i == 0 ? 1 : i == 1 ? gateway::kMaxEnvelopePayload : len(rng));
    for (auto& b : e.payload) b = static_cast<std::uint8_t>(rng());
    const auto bytes = gateway::encode(e);
    const auto back = gateway::decode(bytes);
    if (!(back == e) || gateway::encode(back) != bytes) ++bad;
  }

  Kernel kernel;
  net::NetworkConfig ncfg;
  ncfg.ideal = true;
  net::Network network(kernel, ncfg, 1);
  network.add_node({100, 50});
  network.add_node({150, 50});
  gateway::Gateway gw(kernel, network, {});
  network.on_delivery([&](NodeId rx, const net::Frame& f) { gw.handle_delivery(rx, f); });
  network.on_loss([&](const net::Frame& f, net::Fate fate) { gw.handle_loss(f, fate); });
  std::vector<std::vector<std::uint8_t>> sent[2], got[2];
  gw.on_egress([&](gateway::PortSide side, const std::vector<std::uint8_t>& p) {
    got[side == gateway::PortSide::Server ? 0 : 1].push_back(p);
  });
  constexpr int kEndToEnd = 1000;
  for (int i = 0; i < kEndToEnd; ++i) {
    kernel.schedule_at(SimTime::micros(i * 100), 0, [&, i] {
      std::vector<std::uint8_t> p(i == 0 ? 1 : i == 1 ? gateway::kMaxEnvelopePayload : len(rng));
      for (auto& b : p) b = static_cast<std::uint8_t>(rng());
      const int dir = static_cast<int>(rng() % 2);
      gw.ingest(gateway::encode({gateway::EnvelopeKind::ToSim, 0, p}),
                dir == 0 ? gateway::PortSide::Vehicle : gateway::PortSide::Server);
      sent[dir].push_back(std::move(p));
    });
  }
  kernel.run_until(SimTime::seconds(1));
  const bool e2e = got[0] == sent[0] && got[1] == sent[1] &&
                   gw.counters().delivered == static_cast<std::uint64_t>(kEndToEnd);
  verdict(6, bad == 0 && e2e,
          fmt("%d/10000 codec round trips differ (lengths 1..%zu); ingest->egress %s for %d "
              "payloads on a lossless channel",
              bad, gateway::kMaxEnvelopePayload, e2e ? "byte-exact" : "MISMATCH", kEndToEnd));
}

// Hypervisor steal time in ms from /proc/stat, when the host exposes it.
std::optional<double> steal_ms() {
  std::ifstream in("/proc/stat");
  std::string cpu;
  std::uint64_t v[8] = {};
  if (!(in >> cpu) || cpu != "cpu") return std::nullopt;
  for (auto& x : v) in >> x;
  if (!in) return std::nullopt;
  return static_cast<double>(v[7]) * 1000.0 / static_cast<double>(sysconf(_SC_CLK_TCK));
}

std::uint16_t free_port() {
  gateway::UdpSocket s(gateway::Endpoint{"127.0.0.1", 0});
  return s.local_port();
}

void realtime_pacing() {
  scenario::ScenarioConfig cfg;
  cfg.mode = KernelMode::RealTime;
  cfg.app = scenario::AppKind::External;
  cfg.sim_time = SimTime::seconds(10);
  cfg.drift_budget = SimTime::millis(5);
  cfg.gateway.vehicle.local = {"127.0.0.1", free_port()};
  cfg.gateway.server.local = {"127.0.0.1", free_port()};
  gateway::UdpSocket sink(gateway::Endpoint{"127.0.0.1", 0});
  cfg.gateway.server.peer = {"127.0.0.1", sink.local_port()};

  std::atomic<bool> done{false};
  std::thread sender([&] {
    gateway::UdpSocket app(gateway::Endpoint{"127.0.0.1", 0});
    std::vector<std::uint8_t> p(1250, 0x5A);
    auto next = Clock::now() + std::chrono::milliseconds(100);
    while (!done) {
      std::this_thread::sleep_until(next);
      app.send_to(gateway::encode({gateway::EnvelopeKind::ToSim, gateway::wall_clock_us(), p}),
                  cfg.gateway.vehicle.local);
      next += std::chrono::milliseconds(10);
    }
  });
  std::thread drain([&] {
    while (!done) sink.receive(20);
  });
  scenario::EpisodeKpi k;
  std::string error;
  const auto steal0 = steal_ms();
  try {
    k = scenario::run_episode(cfg, 3, 1, nullptr);
  } catch (const std::exception& e) {
    error = e.what();
  }
  const auto steal1 = steal_ms();
  const std::string steal =
      steal0 && steal1 ? fmt(", host steal %.0f ms during run", *steal1 - *steal0) : "";
  done = true;
  sender.join();
  drain.join();
  if (!error.empty()) {
    verdict(7, false, "realtime run failed: " + error);
    return;
  }
  const double wall = std::chrono::duration<double>(k.kernel.wall_duration).count();
  const double drift_ms = k.kernel.max_drift.us / 1e3;
  const bool ok = drift_ms <= 5.0 && wall >= 10.0 && wall <= 10.1;
  verdict(7, ok,
          fmt("10 s realtime run (density 3, live traffic %llu datagrams): max drift %.3f ms "
              "(budget 5), wall %.4f s (window [10, 10.1]), %llu events, %llu overloads%s",
              static_cast<unsigned long long>(k.gateway ? k.gateway->ingested : 0), drift_ms,
              wall, static_cast<unsigned long long>(k.kernel.events_dispatched),
              static_cast<unsigned long long>(k.kernel.overloads), steal.c_str()));
}

struct SweepOutput {
  std::filesystem::path dir;
  scenario::KpiReport report;
};

SweepOutput full_sweep(const scenario::ScenarioConfig& cfg, const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  auto report = scenario::run_scenario(cfg, dir / "raw");
  report::emit(report, report::Format::Csv, dir);
  return {dir, std::move(report)};
}

// Reads kpi.csv independently of the library parser.
std::map<std::tuple<std::size_t, std::uint32_t, std::string>, std::string> read_kpi(
    const std::filesystem::path& path) {
  std::map<std::tuple<std::size_t, std::uint32_t, std::string>, std::string> out;
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string d, e, m, v;
    std::getline(ss, d, ',');
    std::getline(ss, e, ',');
    std::getline(ss, m, ',');
    std::getline(ss, v);
    out[{std::stoul(d), static_cast<std::uint32_t>(std::stoul(e)), m}] = v;
  }
  return out;
}

std::optional<double> as_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0;
  std::from_chars(s.data(), s.data() + s.size(), v);
  return v;
}

void recomputation_and_determinism() {
  scenario::ScenarioConfig cfg;
  cfg.rl_enabled = true;
  const auto t0 = Clock::now();
  const auto a = full_sweep(cfg, "vhil_acceptance_a");
  const auto b = full_sweep(cfg, "vhil_acceptance_b");
  const double secs = seconds_since(t0);

  const auto kpi = read_kpi(a.dir / "kpi.csv");
  std::size_t checked = 0, mismatched = 0;
  for (const auto& row : a.report.rows) {
    const auto log =
        oracle::read_packet_log((a.dir / "raw" / scenario::packet_log_name(row.density, row.episode)).string());
    const auto rec = oracle::recompute(log, 0, cfg.sim_time.us, 1'000'000);
    const auto key = [&](const char* m) { return std::make_tuple(row.density, row.episode, std::string(m)); };
    checked += 3;
    mismatched += as_double(kpi.at(key("mean_delay_s"))) != rec.mean_delay_s;
    mismatched += as_double(kpi.at(key("throughput_bps"))) != std::optional(rec.throughput_bps);
    mismatched += as_double(kpi.at(key("delivered_streams"))) != std::optional(rec.stream_count);
  }
  verdict(8, mismatched == 0 && checked == a.report.rows.size() * 3,
          fmt("%zu/%zu reported delay/throughput/stream-count values differ from raw-log "
              "recomputation (%zu density x episode rows)",
              mismatched, checked, a.report.rows.size()));

  bool same = slurp(a.dir / "kpi.csv") == slurp(b.dir / "kpi.csv") &&
              slurp(a.dir / "details.csv") == slurp(b.dir / "details.csv");
  std::size_t logs = 0;
  for (const auto& row : a.report.rows) {
    const auto name = scenario::packet_log_name(row.density, row.episode);
    same = same && slurp(a.dir / "raw" / name) == slurp(b.dir / "raw" / name);
    ++logs;
  }
  verdict(9, same,
          fmt("two full sweeps (densities 1,2,3,5,7,10 x 3 episodes, RL on, seed %llu): kpi.csv, "
              "details.csv and %zu packet logs %s; %.1f s for both",
              static_cast<unsigned long long>(cfg.seed), logs,
              same ? "byte-identical" : "DIFFER", secs));
}

}  // namespace

int main() {
  q_learning_oracle();
  update_rule();
  collision_oracle();
  density_trend();
  rl_vs_static();
  gateway_transparency();
  realtime_pacing();
  recomputation_and_determinism();
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
