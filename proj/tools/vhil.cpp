#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <thread>

#include "CLI11.hpp"
#include "vhil/envelope.hpp"
#include "vhil/gateway.hpp"
#include "vhil/report.hpp"
#include "vhil/scenario.hpp"

namespace {

namespace sc = vhil::scenario;
namespace rp = vhil::report;
namespace gw = vhil::gateway;

constexpr int kExitConfig = 2;
constexpr int kExitGateway = 3;

struct RunArgs {
  std::string config;
  std::string densities;
  std::string rl;
  std::string mode;
  std::string app;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint32_t> episodes;
  std::optional<double> sim_time;
  std::optional<std::uint32_t> fixed_action;
  bool freeze = false;
  std::string qtable_load;
  std::string qtable_save;
  std::string out_dir = "vhil-out";
  std::string format = "csv";
  bool no_packet_logs = false;
  std::vector<std::string> overrides;
};

sc::ScenarioConfig build_config(const RunArgs& a) {
  sc::ScenarioConfig cfg = a.config.empty() ? sc::ScenarioConfig{} : sc::load_config(a.config);
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw sc::ConfigError("--set expects section.key=value, got '" + kv + "'");
    }
    sc::set_option(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!a.densities.empty()) sc::set_option(cfg, "scenario.densities", a.densities);
  if (!a.rl.empty()) sc::set_option(cfg, "scenario.rl", a.rl);
  if (!a.mode.empty()) sc::set_option(cfg, "scenario.mode", a.mode);
  if (!a.app.empty()) sc::set_option(cfg, "scenario.app", a.app);
  if (a.seed) cfg.seed = *a.seed;
  if (a.episodes) sc::set_option(cfg, "scenario.episodes", std::to_string(*a.episodes));
  if (a.sim_time) cfg.sim_time = vhil::SimTime::from_seconds(*a.sim_time);
  if (a.fixed_action) cfg.fixed_action = *a.fixed_action;
  if (a.freeze) cfg.freeze_learning = true;
  if (!a.qtable_load.empty()) cfg.qtable_load = a.qtable_load;
  if (!a.qtable_save.empty()) cfg.qtable_save = a.qtable_save;
  if (a.no_packet_logs) cfg.write_packet_logs = false;
  cfg.validate();
  return cfg;
}

int run(const RunArgs& a) {
  const sc::ScenarioConfig cfg = build_config(a);
  const std::filesystem::path out = a.out_dir;
  const auto report = sc::run_scenario(cfg, out / "raw");
  const auto path = rp::emit(report, a.format == "table" ? rp::Format::Table : rp::Format::Csv, out);
  std::ifstream in(path);
  std::cout << in.rdbuf();
  for (const auto& row : report.rows) {
    if (row.gateway) {
      const auto& g = *row.gateway;
      std::cerr << "gateway: ingested " << g.ingested << " delivered " << g.delivered
                << " collided " << g.collided << " dropped " << g.dropped << " pending "
                << g.pending() << " decode_errors " << g.decode_errors << '\n';
    }
    if (cfg.mode == vhil::KernelMode::RealTime) {
      std::cerr << "kernel: max drift " << row.kernel.max_drift.us << " us, overloads "
                << row.kernel.overloads << '\n';
    }
  }
  return 0;
}

int compare(const std::string& base, const std::string& treat, const std::string& out) {
  const auto cells = rp::compare(rp::load(base), rp::load(treat));
  if (out.empty()) {
    rp::write_percent_csv(std::cout, cells);
  } else {
    std::ofstream f(out);
    rp::write_percent_csv(f, cells);
  }
  return 0;
}

int benchmark(const std::string& kpi) {
  rp::write_percent_csv(std::cout, rp::relative_to_benchmark(rp::load(kpi)));
  return 0;
}

// Sends ToSim envelopes at a constant rate, for driving the gateway by hand.
int probe_send(const std::string& to, const std::string& from, std::uint64_t rate_bps,
               std::size_t size, double duration_s) {
  gw::UdpSocket sock(gw::parse_endpoint(from));
  const gw::Endpoint peer = gw::parse_endpoint(to);
  const auto gap = std::chrono::nanoseconds(
      static_cast<std::int64_t>(static_cast<double>(size) * 8e9 / static_cast<double>(rate_bps)));
  std::mt19937_64 rng(1);
  std::vector<std::uint8_t> payload(size);
  const auto start = std::chrono::steady_clock::now();
  const auto stop = start + std::chrono::duration<double>(duration_s);
  std::uint64_t sent = 0;
  for (auto next = start; next < stop; next += gap) {
    std::this_thread::sleep_until(next);
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
    const auto bytes =
        gw::encode(gw::Envelope{gw::EnvelopeKind::ToSim, gw::wall_clock_us(), payload});
    if (sock.send_to(bytes, peer) == gw::UdpSocket::SendResult::Sent) ++sent;
  }
  std::cout << "sent " << sent << " datagrams\n";
  return 0;
}

int probe_recv(const std::string& listen, double duration_s) {
  gw::UdpSocket sock(gw::parse_endpoint(listen));
  const auto stop = std::chrono::steady_clock::now() + std::chrono::duration<double>(duration_s);
  std::uint64_t data = 0, control = 0, bad = 0, bytes = 0;
  double delay_sum = 0.0;
  while (std::chrono::steady_clock::now() < stop) {
    auto d = sock.receive(50);
    if (!d) continue;
    try {
      const auto env = gw::decode(*d);
      if (env.kind == gw::EnvelopeKind::Control) {
        ++control;
        std::cout << "control: " << std::string(env.payload.begin(), env.payload.end()) << '\n';
      } else {
        ++data;
        bytes += env.payload.size();
        delay_sum += static_cast<double>(gw::wall_clock_us() - env.timestamp_us) / 1e6;
      }
    } catch (const gw::DecodeError&) {
      ++bad;
    }
  }
  std::cout << "received " << data << " data (" << bytes << " bytes), " << control
            << " control, " << bad << " undecodable";
  if (data > 0) std::cout << ", mean one-way delay " << delay_sum / static_cast<double>(data) << " s";
  std::cout << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VANET hardware-in-the-loop testbed"};
  app.require_subcommand(1);

  RunArgs ra;
  auto* run_cmd = app.add_subcommand("run", "Run the density sweep and write KPI reports");
  run_cmd->add_option("--config", ra.config, "ini configuration file")->check(CLI::ExistingFile);
  run_cmd->add_option("--densities", ra.densities, "comma-separated vehicle counts");
  run_cmd->add_option("--rl", ra.rl, "on|off")->check(CLI::IsMember({"on", "off"}));
  run_cmd->add_option("--mode", ra.mode, "virtual|realtime")
      ->check(CLI::IsMember({"virtual", "realtime"}));
  run_cmd->add_option("--app", ra.app, "probe|lidar|video|external");
  run_cmd->add_option("--seed", ra.seed);
  run_cmd->add_option("--episodes", ra.episodes);
  run_cmd->add_option("--sim-time", ra.sim_time, "seconds per episode");
  run_cmd->add_option("--fixed-action", ra.fixed_action, "static action 0..3 instead of learning");
  run_cmd->add_flag("--freeze", ra.freeze, "evaluate without updating the Q-table");
  run_cmd->add_option("--qtable-load", ra.qtable_load);
  run_cmd->add_option("--qtable-save", ra.qtable_save);
  run_cmd->add_option("--out-dir", ra.out_dir);
  run_cmd->add_option("--format", ra.format)->check(CLI::IsMember({"csv", "table"}));
  run_cmd->add_flag("--no-packet-logs", ra.no_packet_logs);
  run_cmd->add_option("--set", ra.overrides, "section.key=value override (repeatable)");

  std::string base, treat, cmp_out;
  auto* cmp_cmd = app.add_subcommand("compare", "Percentage difference between two KPI reports");
  cmp_cmd->add_option("baseline", base)->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("treatment", treat)->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("--out", cmp_out);

  std::string bench_kpi;
  auto* bench_cmd =
      app.add_subcommand("benchmark", "Each density relative to the smallest density");
  bench_cmd->add_option("kpi", bench_kpi)->required()->check(CLI::ExistingFile);

  std::string send_to = "127.0.0.1:5000", send_from = "127.0.0.1:0";
  std::uint64_t send_rate = 1'000'000;
  std::size_t send_size = 1250;
  double send_duration = 10.0;
  auto* send_cmd = app.add_subcommand("probe-send", "Send ToSim envelopes at a constant rate");
  send_cmd->add_option("--to", send_to);
  send_cmd->add_option("--from", send_from);
  send_cmd->add_option("--rate", send_rate, "bit/s");
  send_cmd->add_option("--size", send_size, "payload bytes")
      ->check(CLI::Range(std::size_t{1}, gw::kMaxEnvelopePayload));
  send_cmd->add_option("--duration", send_duration, "seconds");

  std::string recv_listen = "127.0.0.1:6001";
  double recv_duration = 10.0;
  auto* recv_cmd = app.add_subcommand("probe-recv", "Receive and count envelopes");
  recv_cmd->add_option("--listen", recv_listen);
  recv_cmd->add_option("--duration", recv_duration, "seconds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) return run(ra);
    if (*cmp_cmd) return compare(base, treat, cmp_out);
    if (*bench_cmd) return benchmark(bench_kpi);
    if (*send_cmd) return probe_send(send_to, send_from, send_rate, send_size, send_duration);
    if (*recv_cmd) return probe_recv(recv_listen, recv_duration);
  } catch (const sc::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const gw::GatewayUnavailable& e) {
    std::cerr << "gateway unavailable: " << e.what() << '\n';
    return kExitGateway;
  } catch (const rp::MismatchedDensities& e) {
    std::cerr << "compare: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
