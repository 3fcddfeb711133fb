#include "vhil/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <unordered_map>

#include "vhil/capture.hpp"

namespace vhil::scenario {

const EpisodeKpi& KpiReport::at(std::size_t density, std::uint32_t episode) const {
  for (const auto& r : rows) {
    if (r.density == density && r.episode == episode) {
      return r;
    }
  }
  throw std::out_of_range("no KPI row for density " + std::to_string(density) + " episode " +
                          std::to_string(episode));
}

std::uint64_t episode_seed(std::uint64_t seed, std::size_t density, std::uint32_t episode) {
  // splitmix64 over the three inputs.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ density) ^ episode);
}

std::filesystem::path packet_log_name(std::size_t density, std::uint32_t episode) {
  return "packets_d" + std::to_string(density) + "_e" + std::to_string(episode) + ".csv";
}

namespace {

constexpr std::uint32_t kAppStream = 0;

// Arrivals at the server bucketed by decision epoch.
class EpochMeter {
 public:
  EpochMeter(SimTime epoch, std::uint32_t app_stream) : epoch_(epoch), app_stream_(app_stream) {}

  void arrival(std::uint32_t stream, SimTime gen, SimTime at, std::uint32_t bytes) {
    Bucket& b = buckets_[at.us / epoch_.us];
    b.streams.insert(stream);
    if (stream == app_stream_) {
      ++b.packets;
      b.bytes += bytes;
      b.delay_us += (at - gen).us;
    }
  }

  agent::Observation take(std::int64_t index) {
    agent::Observation obs;
    auto it = buckets_.find(index);
    if (it != buckets_.end()) {
      const Bucket& b = it->second;
      if (b.packets > 0) {
        obs.mean_delay_s = static_cast<double>(b.delay_us) / 1e6 / static_cast<double>(b.packets);
      }
      obs.throughput_bps = static_cast<double>(b.bytes) * 8.0 / epoch_.to_seconds();
      obs.delivered_streams = static_cast<std::uint32_t>(b.streams.size());
    }
    buckets_.erase(buckets_.begin(), buckets_.upper_bound(index));
    return obs;
  }

 private:
  struct Bucket {
    std::uint64_t packets = 0;
    std::uint64_t bytes = 0;
    std::int64_t delay_us = 0;
    std::set<std::uint32_t> streams;
  };
  SimTime epoch_;
  std::uint32_t app_stream_;
  std::map<std::int64_t, Bucket> buckets_;
};

struct MessagePlan {
  std::vector<net::Bytes> messages;
  std::vector<SimTime> offsets;
  SimTime period;
  std::size_t fragment_size = 1400;
};

MessagePlan lidar_plan(const ScenarioConfig& cfg) {
  const auto& t = cfg.traffic;
  MessagePlan p;
  p.messages = t.lidar_capture.empty()
                   ? capture::synthetic_lidar_scans(t.lidar_scans, t.lidar_scan_bytes, cfg.seed)
                   : capture::parse_lidar_capture(capture::read_file(t.lidar_capture));
  if (p.messages.empty()) {
    throw ConfigError("LiDAR capture holds no scans");
  }
  for (std::size_t k = 0; k < p.messages.size(); ++k) {
    p.offsets.push_back(SimTime::from_seconds(static_cast<double>(k) / t.lidar_rate_hz));
  }
  p.period = SimTime::from_seconds(static_cast<double>(p.messages.size()) / t.lidar_rate_hz);
  p.fragment_size = t.lidar_fragment_size;
  return p;
}

MessagePlan video_plan(const ScenarioConfig& cfg, std::vector<capture::VideoChunk>& chunks) {
  const auto& t = cfg.traffic;
  chunks = t.video_capture.empty()
               ? capture::synthetic_video(t.video_chunks, t.video_chunk_interval,
                                          t.video_chunk_bytes, cfg.seed)
               : capture::parse_video_capture(capture::read_file(t.video_capture));
  if (chunks.empty()) {
    throw ConfigError("video capture holds no chunks");
  }
  MessagePlan p;
  const SimTime origin = chunks.front().timestamp;
  for (const auto& c : chunks) {
    p.messages.push_back(c.data);
    p.offsets.push_back(c.timestamp - origin);
  }
  p.period = p.offsets.back() + t.video_chunk_interval;
  p.fragment_size = t.video_fragment_size;
  return p;
}

// Mean over epoch windows of the number of streams with an arrival at the
// server inside [0, horizon).
double mean_delivered_streams(const traffic::TrafficLedger& ledger, SimTime horizon,
                              SimTime epoch) {
  const std::int64_t windows = (horizon.us + epoch.us - 1) / epoch.us;
  if (windows <= 0) {
    return 0.0;
  }
  std::uint64_t total = 0;
  for (const auto& [id, rec] : ledger.streams()) {
    if (id == gateway::kServerStreamId) {
      continue;
    }
    std::set<std::int64_t> seen;
    for (const auto& p : rec.log) {
      if (p.arrival_time && *p.arrival_time < horizon) {
        seen.insert(p.arrival_time->us / epoch.us);
      }
    }
    total += seen.size();
  }
  return static_cast<double>(total) / static_cast<double>(windows);
}

}  // namespace

EpisodeKpi run_episode(const ScenarioConfig& cfg, std::size_t density, std::uint32_t episode,
                       agent::QosAgent* learner,
                       const std::optional<std::filesystem::path>& raw_log) {
  cfg.validate();
  const std::uint64_t seed = episode_seed(cfg.seed, density, episode);
  const SimTime horizon = cfg.sim_time;
  const SimTime epoch = SimTime::from_seconds(cfg.agent.decision_epoch_s);

  Kernel kernel(cfg.mode, cfg.drift_budget);
  kernel.set_spin_window(cfg.spin_window);
  net::Network network(kernel, net::NetworkConfig{cfg.radio, cfg.dcf, cfg.ideal_channel}, seed ^ 0x5eedULL);
  traffic::TrafficLedger ledger;

  auto fleet = mobility::spawn_fleet(density, cfg.kinematics, seed);
  for (const auto& v : fleet) {
    network.add_node(v.position);
  }
  const NodeId server = network.add_node(cfg.server_position);

  std::unique_ptr<gateway::Gateway> gw;
  std::uint32_t app_stream = kAppStream;
  if (cfg.app == AppKind::External) {
    auto gcfg = cfg.gateway;
    gcfg.vehicle.node = 0;
    gcfg.server.node = server;
    gw = std::make_unique<gateway::Gateway>(kernel, network, gcfg, &ledger);
    if (cfg.mode == KernelMode::RealTime) {
      gw->open();
    }
    app_stream = gateway::kVehicleStreamId;
  }

  const agent::ActionId initial_action =
      cfg.fixed_action ? *cfg.fixed_action
                       : (learner != nullptr ? learner->current_action()
                                             : static_cast<agent::ActionId>(agent::kActionCount - 1));

  std::unique_ptr<traffic::CbrSource> probe;
  std::unique_ptr<traffic::MessageSource> messages;
  std::vector<capture::VideoChunk> video_chunks;
  MessagePlan plan;
  const auto scaled_probe_rate = [&](agent::ActionId a) {
    return static_cast<std::uint64_t>(std::llround(
        static_cast<double>(cfg.traffic.probe_rate_bps) * agent::kRateMultipliers[a]));
  };
  switch (cfg.app) {
    case AppKind::Probe:
      probe = std::make_unique<traffic::CbrSource>(
          kernel, network, ledger,
          traffic::CbrSource::Params{0, server, kAppStream, radio::FrameKind::Probe,
                                     scaled_probe_rate(initial_action),
                                     cfg.traffic.probe_packet_size, SimTime{}, horizon});
      break;
    case AppKind::Lidar:
    case AppKind::Video: {
      const bool lidar = cfg.app == AppKind::Lidar;
      plan = lidar ? lidar_plan(cfg) : video_plan(cfg, video_chunks);
      messages = std::make_unique<traffic::MessageSource>(
          kernel, network, ledger,
          traffic::MessageSource::Params{0, server, kAppStream,
                                         lidar ? radio::FrameKind::Lidar : radio::FrameKind::Video,
                                         plan.fragment_size, SimTime{}, horizon},
          plan.messages, plan.offsets);
      messages->set_rate_multiplier(agent::kRateMultipliers[initial_action]);
      break;
    }
    case AppKind::External:
      break;
  }

  std::vector<std::unique_ptr<traffic::CbrSource>> background;
  if (cfg.traffic.background) {
    const auto streams =
        traffic::background_traffic(density, cfg.traffic.background_cfg, horizon, seed + 1);
    NodeId vehicle = 1;
    for (const auto& s : streams) {
      background.push_back(std::make_unique<traffic::CbrSource>(
          kernel, network, ledger,
          traffic::CbrSource::Params{vehicle, server, vehicle, s.kind, s.target_rate_bps,
                                     s.packet_size, s.start_time, s.start_time + s.duration}));
      ++vehicle;
    }
  }

  EpochMeter meter(epoch, app_stream);
  // Fragments received per message id, for message applications.
  std::unordered_map<std::uint64_t, std::uint32_t> fragments_seen;
  std::set<std::uint64_t> completed_messages;

  network.on_delivery([&](NodeId receiver, const net::Frame& f) {
    if (receiver == server) {
      meter.arrival(f.stream_id, f.gen_time, kernel.now(), f.payload_len);
    }
    if (gw && gw->handle_delivery(receiver, f)) {
      return;
    }
    ledger.on_delivered(f.stream_id, f.seq_in_stream, kernel.now());
    if (messages && f.stream_id == kAppStream && kernel.now() < horizon) {
      if (++fragments_seen[f.message_id] == f.frag_count) {
        completed_messages.insert(f.message_id);
      }
    }
  });
  network.on_loss([&](const net::Frame& f, net::Fate fate) {
    if (gw && gw->handle_loss(f, fate)) {
      return;
    }
    ledger.on_lost(f.stream_id, f.seq_in_stream, fate);
  });

  // Vehicle kinematics.
  const double dt = cfg.kinematics.step_interval.to_seconds();
  std::function<void()> move = [&] {
    for (auto& v : fleet) {
      v.command = mobility::steer(v);
      v = mobility::step(v, dt, cfg.kinematics);
      network.set_position(v.id, v.position);
    }
    if (kernel.now() + cfg.kinematics.step_interval <= horizon) {
      kernel.schedule_in(cfg.kinematics.step_interval, 0, move);
    }
  };
  kernel.schedule_at(cfg.kinematics.step_interval, 0, move);

  // Decision epochs.
  agent::ActionId action = initial_action;
  std::array<std::uint64_t, agent::kActionCount> action_counts{};
  double reward_sum = 0.0;
  std::uint64_t epochs = 0;
  const auto apply = [&](agent::ActionId a) {
    if (probe) {
      probe->set_rate(scaled_probe_rate(a));
    } else if (messages) {
      messages->set_rate_multiplier(agent::kRateMultipliers[a]);
    } else if (gw && cfg.mode == KernelMode::RealTime) {
      const std::string text = "rate_multiplier=" + std::to_string(agent::kRateMultipliers[a]);
      gw->send_control(gateway::PortSide::Vehicle,
                       std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    }
  };
  std::int64_t epoch_index = 0;
  std::function<void()> decide = [&] {
    ++epoch_index;
    const agent::Observation obs = meter.take(epoch_index - 1);
    ++action_counts[action];
    ++epochs;
    reward_sum += agent::reward(obs, cfg.norms, cfg.agent.weights);
    if (learner != nullptr && !cfg.fixed_action) {
      const agent::ActionId next = learner->step(obs);
      if (next != action) {
        action = next;
        apply(action);
      }
    }
    if (kernel.now() + epoch <= horizon) {
      kernel.schedule_in(epoch, 0, decide);
    }
  };
  kernel.schedule_at(epoch, 0, decide);

  if (probe) {
    probe->start();
  }
  if (messages) {
    messages->start(plan.period);
  }
  for (auto& b : background) {
    b->start();
  }

  EpisodeKpi kpi;
  kpi.density = density;
  kpi.episode = episode;
  if (cfg.mode == KernelMode::RealTime) {
    gw->start();
    try {
      kpi.kernel = kernel.run_realtime(horizon);
    } catch (...) {
      gw->stop();
      throw;
    }
    gw->stop();
  } else {
    kpi.kernel = kernel.run_until(horizon);
  }

  const traffic::Window window{SimTime{}, horizon};
  if (ledger.has_stream(app_stream)) {
    const auto& rec = ledger.stream(app_stream);
    const auto sample = traffic::account(rec, window);
    kpi.mean_delay_s = sample.mean_delay_s;
    kpi.throughput_bps = sample.throughput_bps;
    kpi.bytes_received = sample.bytes;
    kpi.packets_sent = rec.packets_sent;
    kpi.packets_received = sample.packets;
  }
  kpi.delivered_streams = mean_delivered_streams(ledger, horizon, epoch);
  kpi.scans_received = completed_messages.size();
  if (cfg.app == AppKind::Video && !video_chunks.empty()) {
    const std::size_t n = video_chunks.size();
    std::uint64_t prefix = 0;
    while (completed_messages.contains(prefix)) {
      ++prefix;
    }
    if (prefix > 0) {
      const std::uint64_t last = prefix - 1;
      const SimTime ts = SimTime{static_cast<std::int64_t>(last / n) * plan.period.us} +
                         plan.offsets[last % n];
      kpi.playable_duration_s = (ts + cfg.traffic.video_chunk_interval).to_seconds();
    }
  }
  kpi.mac = network.stats();
  kpi.mean_reward = epochs > 0 ? reward_sum / static_cast<double>(epochs) : 0.0;
  kpi.action_counts = action_counts;
  if (gw) {
    kpi.gateway = gw->counters();
  }

  if (raw_log) {
    std::ofstream out(*raw_log, std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot write " + raw_log->string());
    }
    ledger.write_csv(out);
  }
  return kpi;
}

KpiReport run_scenario(const ScenarioConfig& cfg,
                       const std::optional<std::filesystem::path>& raw_dir) {
  cfg.validate();
  KpiReport report;
  report.densities = cfg.densities;
  report.episodes = cfg.episodes;
  if (raw_dir && cfg.write_packet_logs) {
    std::filesystem::create_directories(*raw_dir);
  }
  const bool learn = cfg.rl_enabled && !cfg.fixed_action;
  for (std::size_t density : cfg.densities) {
    std::unique_ptr<agent::QosAgent> learner;
    if (learn) {
      const std::uint64_t agent_seed = episode_seed(cfg.seed, density, 0);
      if (!cfg.qtable_load.empty()) {
        learner = std::make_unique<agent::QosAgent>(
            cfg.agent, cfg.norms, agent::QTable::load(cfg.qtable_load), agent_seed);
      } else {
        learner = std::make_unique<agent::QosAgent>(cfg.agent, cfg.norms, agent_seed);
      }
      if (cfg.freeze_learning) {
        learner->set_learning(false);
        learner->set_epsilon(0.0);
      }
    }
    for (std::uint32_t e = 1; e <= cfg.episodes; ++e) {
      if (learner) {
        learner->begin_episode();
        // The last of several episodes exploits what was learned.
        if (cfg.episodes > 1 && e == cfg.episodes) {
          learner->set_epsilon(0.0);
        }
      }
      std::optional<std::filesystem::path> log;
      if (raw_dir && cfg.write_packet_logs) {
        log = *raw_dir / packet_log_name(density, e);
      }
      report.rows.push_back(run_episode(cfg, density, e, learner.get(), log));
    }
    if (learner && !cfg.qtable_save.empty()) {
      std::filesystem::path path = cfg.qtable_save;
      if (cfg.densities.size() > 1) {
        path += ".d" + std::to_string(density);
      }
      learner->table().save(path);
    }
  }
  return report;
}

}  // namespace vhil::scenario
