#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vhil/gateway.hpp"
#include "vhil/mobility.hpp"
#include "vhil/network.hpp"
#include "vhil/qos_agent.hpp"
#include "vhil/radio.hpp"
#include "vhil/sim_kernel.hpp"
#include "vhil/traffic.hpp"

namespace vhil::scenario {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Application under test on vehicle 0. External means live traffic from
/// the gateway's vehicle port.
enum class AppKind { Probe, Lidar, Video, External };

const char* to_string(AppKind app);

struct TrafficConfig {
  std::uint64_t probe_rate_bps = 22'000'000;
  std::uint32_t probe_packet_size = 1250;
  bool background = true;
  traffic::BackgroundConfig background_cfg;
  double lidar_rate_hz = 10.0;
  std::size_t lidar_scan_bytes = 100'000;
  std::size_t lidar_scans = 50;
  std::size_t lidar_fragment_size = 1400;
  std::string lidar_capture;
  SimTime video_chunk_interval = SimTime::millis(40);
  std::size_t video_chunk_bytes = 5000;
  std::size_t video_chunks = 250;
  std::size_t video_fragment_size = 1400;
  std::string video_capture;
};

struct ScenarioConfig {
  std::vector<std::size_t> densities{1, 2, 3, 5, 7, 10};
  std::uint32_t episodes = 3;
  SimTime sim_time = SimTime::seconds(250);
  KernelMode mode = KernelMode::Virtual;
  SimTime drift_budget = SimTime::millis(5);
  // Real-time pacing; unset spins through every wait. See Kernel.
  std::optional<SimTime> spin_window;
  bool rl_enabled = false;
  std::uint64_t seed = 1;
  AppKind app = AppKind::Probe;
  mobility::Vec2 server_position{150.0, 50.0};

  mobility::KinematicsConfig kinematics;
  radio::RadioConfig radio;
  radio::DcfConfig dcf;
  bool ideal_channel = false;
  agent::AgentConfig agent;
  agent::RewardNorms norms{0.100, 22e6};
  TrafficConfig traffic;
  gateway::GatewayConfig gateway;

  // Runs every episode with one static action instead of the learner.
  std::optional<agent::ActionId> fixed_action;
  // Evaluation mode: no Q updates, epsilon 0.
  bool freeze_learning = false;
  std::string qtable_load;
  std::string qtable_save;
  bool write_packet_logs = true;

  /// Throws ConfigError.
  void validate() const;
};

/// Sets one "section.key" option from its text value. Throws ConfigError on
/// an unknown key or a malformed value.
void set_option(ScenarioConfig& cfg, const std::string& key, const std::string& value);

/// Reads an ini-style file ([section] headers, key = value lines, ';' or
/// '#' comments) on top of the defaults.
ScenarioConfig load_config(const std::filesystem::path& path);
ScenarioConfig parse_config(const std::string& text);

/// Per (density, episode) aggregates.
struct EpisodeKpi {
  std::size_t density = 0;
  std::uint32_t episode = 0;
  // Application under test, over the whole horizon.
  std::optional<double> mean_delay_s;
  double throughput_bps = 0.0;
  // Mean over decision-epoch windows of streams delivered to the server.
  double delivered_streams = 0.0;
  std::uint64_t bytes_received = 0;
  double playable_duration_s = 0.0;

  std::uint64_t packets_sent = 0;
  std::uint64_t packets_received = 0;
  std::uint64_t scans_received = 0;
  net::MacStats mac;
  double mean_reward = 0.0;
  std::array<std::uint64_t, agent::kActionCount> action_counts{};
  std::optional<gateway::GatewayCounters> gateway;
  RunStats kernel;
};

struct KpiReport {
  std::vector<std::size_t> densities;
  std::uint32_t episodes = 0;
  std::vector<EpisodeKpi> rows;

  const EpisodeKpi& at(std::size_t density, std::uint32_t episode) const;
};

/// Runs episodes x densities. In Virtual mode a fixed seed gives an
/// identical report. Per-packet logs go to `raw_dir` when set.
KpiReport run_scenario(const ScenarioConfig& cfg,
                       const std::optional<std::filesystem::path>& raw_dir = std::nullopt);

/// One (density, episode) run.
EpisodeKpi run_episode(const ScenarioConfig& cfg, std::size_t density, std::uint32_t episode,
                       agent::QosAgent* learner,
                       const std::optional<std::filesystem::path>& raw_log = std::nullopt);

std::uint64_t episode_seed(std::uint64_t seed, std::size_t density, std::uint32_t episode);

std::filesystem::path packet_log_name(std::size_t density, std::uint32_t episode);

}  // namespace vhil::scenario
