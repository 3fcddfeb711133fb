#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "vhil/scenario.hpp"

namespace vhil::scenario {

const char* to_string(AppKind app) {
  switch (app) {
    case AppKind::Probe:
      return "probe";
    case AppKind::Lidar:
      return "lidar";
    case AppKind::Video:
      return "video";
    case AppKind::External:
      return "external";
  }
  return "unknown";
}

void ScenarioConfig::validate() const {
  if (densities.empty()) {
    throw ConfigError("scenario.densities must list at least one density");
  }
  if (std::any_of(densities.begin(), densities.end(), [](std::size_t d) { return d < 1; })) {
    throw ConfigError("scenario.densities must all be >= 1");
  }
  if (episodes < 1) {
    throw ConfigError("scenario.episodes must be >= 1");
  }
  if (sim_time.us <= 0) {
    throw ConfigError("scenario.sim_time must be positive");
  }
  if (spin_window && spin_window->us < 0) {
    throw ConfigError("scenario.spin_window_ms must be non-negative or 'always'");
  }
  if (drift_budget.us < 0) {
    throw ConfigError("scenario.drift_budget_ms must be non-negative");
  }
  if (mode == KernelMode::RealTime && app != AppKind::External) {
    throw ConfigError("realtime mode carries live traffic; scenario.app must be external");
  }
  if (fixed_action && *fixed_action >= agent::kActionCount) {
    throw ConfigError("agent.fixed_action must be 0..3");
  }
  if (server_position.x < 0 || server_position.x > kinematics.tile_width ||
      server_position.y < 0 || server_position.y > kinematics.tile_height) {
    throw ConfigError("scenario.server_x/server_y must lie on the tile");
  }
  try {
    kinematics.validate();
    radio.validate();
    dcf.validate();
    agent.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(norms.delay_ref_s > 0) || !(norms.throughput_ref_bps > 0)) {
    throw ConfigError("agent.delay_ref_s and agent.throughput_ref_bps must be positive");
  }
  const auto& t = traffic;
  if (t.probe_rate_bps == 0 || t.probe_packet_size < 1 ||
      t.probe_packet_size > traffic::kMaxPacketSize) {
    throw ConfigError("traffic: probe rate must be positive and packet size in [1, 65489]");
  }
  if (t.background_cfg.packet_size < 1 || t.background_cfg.packet_size > traffic::kMaxPacketSize ||
      t.background_cfg.interval.us <= 0) {
    throw ConfigError("traffic: background packet size or interval out of range");
  }
  if (!(t.lidar_rate_hz > 0) || t.lidar_scan_bytes == 0 || t.lidar_scans == 0 ||
      t.lidar_fragment_size == 0 || t.lidar_fragment_size > radio::kMacMtu) {
    throw ConfigError("traffic: LiDAR parameters out of range");
  }
  if (t.video_chunk_interval.us <= 0 || t.video_chunk_bytes == 0 || t.video_chunks == 0 ||
      t.video_fragment_size == 0 || t.video_fragment_size > radio::kMacMtu) {
    throw ConfigError("traffic: video parameters out of range");
  }
  if (gateway.mtu == 0 || gateway.mtu > radio::kMacMtu) {
    throw ConfigError("gateway.mtu must lie in [1, 2304]");
  }
}

namespace {

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end || v.empty()) {
    throw ConfigError("bad value for " + key + ": '" + text + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  return parse_number<double>(key, text);
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  return parse_number<std::uint64_t>(key, text);
}

bool parse_bool(const std::string& key, const std::string& text) {
  std::string v = trim(text);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "1" || v == "true" || v == "on" || v == "yes") {
    return true;
  }
  if (v == "0" || v == "false" || v == "off" || v == "no") {
    return false;
  }
  throw ConfigError("bad boolean for " + key + ": '" + text + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(parse_double(key, item));
  }
  if (out.empty()) {
    throw ConfigError("empty list for " + key);
  }
  return out;
}

SimTime parse_seconds(const std::string& key, const std::string& text) {
  return SimTime::from_seconds(parse_double(key, text));
}

SimTime parse_millis(const std::string& key, const std::string& text) {
  return SimTime::from_seconds(parse_double(key, text) / 1e3);
}

gateway::Endpoint parse_ep(const std::string& key, const std::string& text) {
  try {
    return gateway::parse_endpoint(trim(text));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

using Setter = std::function<void(ScenarioConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> m;
    // scenario
    m["scenario.densities"] = [](auto& c, auto& k, auto& v) {
      c.densities.clear();
      for (double d : parse_list(k, v)) {
        if (d < 1 || d != static_cast<double>(static_cast<std::size_t>(d))) {
          throw ConfigError("densities must be positive integers");
        }
        c.densities.push_back(static_cast<std::size_t>(d));
      }
    };
    m["scenario.episodes"] = [](auto& c, auto& k, auto& v) {
      c.episodes = static_cast<std::uint32_t>(parse_u64(k, v));
      c.agent.episodes = c.episodes;
    };
    m["scenario.sim_time"] = [](auto& c, auto& k, auto& v) { c.sim_time = parse_seconds(k, v); };
    m["scenario.mode"] = [](auto& c, auto& k, auto& v) {
      const auto t = trim(v);
      if (t == "virtual") {
        c.mode = KernelMode::Virtual;
      } else if (t == "realtime") {
        c.mode = KernelMode::RealTime;
        c.app = AppKind::External;
      } else {
        throw ConfigError(k + " must be virtual or realtime");
      }
    };
    m["scenario.drift_budget_ms"] = [](auto& c, auto& k, auto& v) {
      c.drift_budget = parse_millis(k, v);
    };
    m["scenario.spin_window_ms"] = [](auto& c, auto& k, auto& v) {
      if (trim(v) == "always") {
        c.spin_window.reset();
      } else {
        c.spin_window = parse_millis(k, v);
      }
    };
    m["scenario.rl"] = [](auto& c, auto& k, auto& v) { c.rl_enabled = parse_bool(k, v); };
    m["scenario.seed"] = [](auto& c, auto& k, auto& v) { c.seed = parse_u64(k, v); };
    m["scenario.app"] = [](auto& c, auto& k, auto& v) {
      const auto t = trim(v);
      if (t == "probe") {
        c.app = AppKind::Probe;
      } else if (t == "lidar") {
        c.app = AppKind::Lidar;
      } else if (t == "video") {
        c.app = AppKind::Video;
      } else if (t == "external") {
        c.app = AppKind::External;
      } else {
        throw ConfigError(k + " must be probe, lidar, video or external");
      }
    };
    m["scenario.server_x"] = [](auto& c, auto& k, auto& v) {
      c.server_position.x = parse_double(k, v);
    };
    m["scenario.server_y"] = [](auto& c, auto& k, auto& v) {
      c.server_position.y = parse_double(k, v);
    };
    m["scenario.write_packet_logs"] = [](auto& c, auto& k, auto& v) {
      c.write_packet_logs = parse_bool(k, v);
    };
    // mobility
    m["mobility.max_speed"] = [](auto& c, auto& k, auto& v) {
      c.kinematics.max_speed = parse_double(k, v);
    };
    m["mobility.accel"] = [](auto& c, auto& k, auto& v) { c.kinematics.accel = parse_double(k, v); };
    m["mobility.decel"] = [](auto& c, auto& k, auto& v) { c.kinematics.decel = parse_double(k, v); };
    m["mobility.tile_width"] = [](auto& c, auto& k, auto& v) {
      c.kinematics.tile_width = parse_double(k, v);
    };
    m["mobility.tile_height"] = [](auto& c, auto& k, auto& v) {
      c.kinematics.tile_height = parse_double(k, v);
    };
    m["mobility.lanes"] = [](auto& c, auto& k, auto& v) { c.kinematics.lane_y = parse_list(k, v); };
    m["mobility.min_spacing"] = [](auto& c, auto& k, auto& v) {
      c.kinematics.min_spacing = parse_double(k, v);
    };
    m["mobility.step_interval_ms"] = [](auto& c, auto& k, auto& v) {
      c.kinematics.step_interval = parse_millis(k, v);
    };
    // radio
    m["radio.coverage_range"] = [](auto& c, auto& k, auto& v) {
      c.radio.coverage_range_m = parse_double(k, v);
    };
    m["radio.tx_power_mw"] = [](auto& c, auto& k, auto& v) {
      c.radio.tx_power_mw = parse_double(k, v);
    };
    m["radio.frequency_hz"] = [](auto& c, auto& k, auto& v) {
      c.radio.frequency_hz = parse_double(k, v);
    };
    m["radio.bandwidth_hz"] = [](auto& c, auto& k, auto& v) {
      c.radio.channel_bandwidth_hz = parse_double(k, v);
    };
    m["radio.best_effort_rate_bps"] = [](auto& c, auto& k, auto& v) {
      c.radio.best_effort_rate_bps = parse_u64(k, v);
    };
    m["radio.low_rate_bps"] = [](auto& c, auto& k, auto& v) {
      c.radio.low_rate_bps = parse_u64(k, v);
    };
    m["radio.phy_overhead_us"] = [](auto& c, auto& k, auto& v) {
      c.radio.phy_overhead_us = static_cast<std::int64_t>(parse_u64(k, v));
    };
    m["radio.mac_header_bytes"] = [](auto& c, auto& k, auto& v) {
      c.radio.mac_header_bytes = static_cast<std::uint32_t>(parse_u64(k, v));
    };
    m["radio.ack_bytes"] = [](auto& c, auto& k, auto& v) {
      c.radio.ack_bytes = static_cast<std::uint32_t>(parse_u64(k, v));
    };
    m["radio.ideal"] = [](auto& c, auto& k, auto& v) { c.ideal_channel = parse_bool(k, v); };
    // mac
    m["mac.cw_min"] = [](auto& c, auto& k, auto& v) {
      c.dcf.cw_min = static_cast<std::uint32_t>(parse_u64(k, v));
    };
    m["mac.cw_max"] = [](auto& c, auto& k, auto& v) {
      c.dcf.cw_max = static_cast<std::uint32_t>(parse_u64(k, v));
    };
    m["mac.slot_us"] = [](auto& c, auto& k, auto& v) {
      c.dcf.slot_us = static_cast<std::int64_t>(parse_u64(k, v));
    };
    m["mac.sifs_us"] = [](auto& c, auto& k, auto& v) {
      c.dcf.sifs_us = static_cast<std::int64_t>(parse_u64(k, v));
    };
    m["mac.retry_limit"] = [](auto& c, auto& k, auto& v) {
      c.dcf.retry_limit = static_cast<std::uint32_t>(parse_u64(k, v));
    };
    m["mac.queue_capacity"] = [](auto& c, auto& k, auto& v) {
      c.dcf.queue_capacity = static_cast<std::size_t>(parse_u64(k, v));
    };
    // agent
    m["agent.epsilon"] = [](auto& c, auto& k, auto& v) { c.agent.epsilon = parse_double(k, v); };
    m["agent.gamma"] = [](auto& c, auto& k, auto& v) { c.agent.gamma = parse_double(k, v); };
    m["agent.alpha"] = [](auto& c, auto& k, auto& v) { c.agent.alpha = parse_double(k, v); };
    m["agent.alpha1"] = [](auto& c, auto& k, auto& v) {
      c.agent.weights.throughput = parse_double(k, v);
    };
    m["agent.alpha2"] = [](auto& c, auto& k, auto& v) {
      c.agent.weights.delay = parse_double(k, v);
    };
    m["agent.decision_epoch_s"] = [](auto& c, auto& k, auto& v) {
      c.agent.decision_epoch_s = parse_double(k, v);
    };
    m["agent.delay_ref_s"] = [](auto& c, auto& k, auto& v) {
      c.norms.delay_ref_s = parse_double(k, v);
    };
    m["agent.throughput_ref_bps"] = [](auto& c, auto& k, auto& v) {
      c.norms.throughput_ref_bps = parse_double(k, v);
    };
    m["agent.fixed_action"] = [](auto& c, auto& k, auto& v) {
      const auto t = trim(v);
      if (t == "none" || t.empty()) {
        c.fixed_action.reset();
      } else {
        c.fixed_action = static_cast<agent::ActionId>(parse_u64(k, v));
      }
    };
    m["agent.freeze_learning"] = [](auto& c, auto& k, auto& v) {
      c.freeze_learning = parse_bool(k, v);
    };
    m["agent.qtable_load"] = [](auto& c, auto&, auto& v) { c.qtable_load = trim(v); };
    m["agent.qtable_save"] = [](auto& c, auto&, auto& v) { c.qtable_save = trim(v); };
    // traffic
    m["traffic.probe_rate_bps"] = [](auto& c, auto& k, auto& v) {
      c.traffic.probe_rate_bps = parse_u64(k, v);
    };
    m["traffic.probe_packet_size"] = [](auto& c, auto& k, auto& v) {
      c.traffic.probe_packet_size = static_cast<std::uint32_t>(parse_u64(k, v));
    };
    m["traffic.background"] = [](auto& c, auto& k, auto& v) {
      c.traffic.background = parse_bool(k, v);
    };
    m["traffic.background_packet_size"] = [](auto& c, auto& k, auto& v) {
      c.traffic.background_cfg.packet_size = static_cast<std::uint32_t>(parse_u64(k, v));
    };
    m["traffic.background_interval_ms"] = [](auto& c, auto& k, auto& v) {
      c.traffic.background_cfg.interval = parse_millis(k, v);
    };
    m["traffic.lidar_rate_hz"] = [](auto& c, auto& k, auto& v) {
      c.traffic.lidar_rate_hz = parse_double(k, v);
    };
    m["traffic.lidar_scan_bytes"] = [](auto& c, auto& k, auto& v) {
      c.traffic.lidar_scan_bytes = static_cast<std::size_t>(parse_u64(k, v));
    };
    m["traffic.lidar_scans"] = [](auto& c, auto& k, auto& v) {
      c.traffic.lidar_scans = static_cast<std::size_t>(parse_u64(k, v));
    };
    m["traffic.lidar_fragment_size"] = [](auto& c, auto& k, auto& v) {
      c.traffic.lidar_fragment_size = static_cast<std::size_t>(parse_u64(k, v));
    };
    m["traffic.lidar_capture"] = [](auto& c, auto&, auto& v) { c.traffic.lidar_capture = trim(v); };
    m["traffic.video_chunk_interval_ms"] = [](auto& c, auto& k, auto& v) {
      c.traffic.video_chunk_interval = parse_millis(k, v);
    };
    m["traffic.video_chunk_bytes"] = [](auto& c, auto& k, auto& v) {
      c.traffic.video_chunk_bytes = static_cast<std::size_t>(parse_u64(k, v));
    };
    m["traffic.video_chunks"] = [](auto& c, auto& k, auto& v) {
      c.traffic.video_chunks = static_cast<std::size_t>(parse_u64(k, v));
    };
    m["traffic.video_fragment_size"] = [](auto& c, auto& k, auto& v) {
      c.traffic.video_fragment_size = static_cast<std::size_t>(parse_u64(k, v));
    };
    m["traffic.video_capture"] = [](auto& c, auto&, auto& v) { c.traffic.video_capture = trim(v); };
    // gateway
    m["gateway.vehicle_local"] = [](auto& c, auto& k, auto& v) {
      c.gateway.vehicle.local = parse_ep(k, v);
    };
    m["gateway.vehicle_peer"] = [](auto& c, auto& k, auto& v) {
      c.gateway.vehicle.peer = parse_ep(k, v);
    };
    m["gateway.server_local"] = [](auto& c, auto& k, auto& v) {
      c.gateway.server.local = parse_ep(k, v);
    };
    m["gateway.server_peer"] = [](auto& c, auto& k, auto& v) {
      c.gateway.server.peer = parse_ep(k, v);
    };
    m["gateway.vehicle_subnet"] = [](auto& c, auto&, auto& v) { c.gateway.vehicle.subnet = trim(v); };
    m["gateway.server_subnet"] = [](auto& c, auto&, auto& v) { c.gateway.server.subnet = trim(v); };
    m["gateway.mtu"] = [](auto& c, auto& k, auto& v) {
      c.gateway.mtu = static_cast<std::size_t>(parse_u64(k, v));
    };
    return m;
  }();
  return table;
}

ScenarioConfig from_ptree(const boost::property_tree::ptree& tree) {
  ScenarioConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError("option '" + section + "' must sit inside a [section]");
    }
    for (const auto& [key, value] : body) {
      set_option(cfg, section + "." + key, value.get_value<std::string>());
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace

void set_option(ScenarioConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = setters();
  auto it = table.find(trim(key));
  if (it == table.end()) {
    throw ConfigError("unknown option '" + key + "'");
  }
  it->second(cfg, it->first, value);
}

ScenarioConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  return from_ptree(tree);
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace vhil::scenario
