#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "vhil/report.hpp"
#include "vhil/scenario.hpp"

using namespace vhil;
using namespace vhil::scenario;

namespace {

ScenarioConfig short_config(std::vector<std::size_t> densities, double seconds) {
  ScenarioConfig cfg;
  cfg.densities = std::move(densities);
  cfg.episodes = 1;
  cfg.sim_time = SimTime::from_seconds(seconds);
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto d = std::filesystem::path(::testing::TempDir()) / name;
  std::filesystem::remove_all(d);
  return d;
}

}  // namespace

TEST(Config, Defaults) {
  ScenarioConfig cfg;
  EXPECT_EQ(cfg.densities, (std::vector<std::size_t>{1, 2, 3, 5, 7, 10}));
  EXPECT_EQ(cfg.episodes, 3u);
  EXPECT_EQ(cfg.sim_time, SimTime::seconds(250));
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, ParsesIni) {
  const auto cfg = parse_config(
      "; comment\n"
      "[scenario]\n"
      "densities = 1, 4\n"
      "sim_time = 12.5\n"
      "rl = on\n"
      "seed = 77\n"
      "app = lidar\n"
      "[radio]\n"
      "coverage_range = 150\n"
      "[mac]\n"
      "cw_min = 31\n"
      "[agent]\n"
      "epsilon = 0.3\n"
      "[traffic]\n"
      "background_interval_ms = 20\n");
  EXPECT_EQ(cfg.densities, (std::vector<std::size_t>{1, 4}));
  EXPECT_EQ(cfg.sim_time, SimTime::millis(12'500));
  EXPECT_TRUE(cfg.rl_enabled);
  EXPECT_EQ(cfg.seed, 77u);
  EXPECT_EQ(cfg.app, AppKind::Lidar);
  EXPECT_EQ(cfg.radio.coverage_range_m, 150.0);
  EXPECT_EQ(cfg.dcf.cw_min, 31u);
  EXPECT_EQ(cfg.agent.epsilon, 0.3);
  EXPECT_EQ(cfg.traffic.background_cfg.interval, SimTime::millis(20));
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config("[scenario]\nbogus = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[scenario]\nepisodes = many\n"), ConfigError);
  EXPECT_THROW(parse_config("[scenario]\ndensities = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("[scenario]\nsim_time = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("[agent]\nepsilon = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("[scenario]\nmode = realtime\napp = probe\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/vhil.ini"), ConfigError);
  ScenarioConfig cfg;
  EXPECT_THROW(set_option(cfg, "radio.nope", "1"), ConfigError);
  EXPECT_NO_THROW(set_option(cfg, "radio.low_rate_bps", "2000000"));
  EXPECT_EQ(cfg.radio.low_rate_bps, 2'000'000u);
  EXPECT_FALSE(cfg.spin_window);
  set_option(cfg, "scenario.spin_window_ms", "1.5");
  EXPECT_EQ(cfg.spin_window, SimTime::micros(1500));
  set_option(cfg, "scenario.spin_window_ms", "always");
  EXPECT_FALSE(cfg.spin_window);
  EXPECT_THROW(parse_config("[scenario]\nspin_window_ms = -1\n"), ConfigError);
}

TEST(Scenario, SingleVehicleHasNoCollisions) {
  const auto r = run_scenario(short_config({1}, 20));
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].mac.collisions, 0u);
  EXPECT_GT(r.rows[0].packets_received, 0u);
  ASSERT_TRUE(r.rows[0].mean_delay_s);
  EXPECT_GT(*r.rows[0].mean_delay_s, 0.0);
}

TEST(Scenario, DelayGrowsWithDensity) {
  const auto r = run_scenario(short_config({1, 2, 3, 5}, 30));
  double prev = 0;
  for (std::size_t d : {1, 2, 3, 5}) {
    const auto& k = r.at(d, 1);
    ASSERT_TRUE(k.mean_delay_s);
    EXPECT_GE(*k.mean_delay_s, prev) << "density " << d;
    prev = *k.mean_delay_s;
  }
}

TEST(Scenario, VirtualRunsAreReproducible) {
  auto cfg = short_config({1, 3}, 5);
  cfg.episodes = 2;
  cfg.rl_enabled = true;
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
  report::emit(run_scenario(cfg, a / "raw"), report::Format::Csv, a);
  report::emit(run_scenario(cfg, b / "raw"), report::Format::Csv, b);
  EXPECT_EQ(slurp(a / "kpi.csv"), slurp(b / "kpi.csv"));
  EXPECT_EQ(slurp(a / "details.csv"), slurp(b / "details.csv"));
  for (std::size_t d : {1, 3}) {
    for (std::uint32_t e : {1u, 2u}) {
      const auto name = packet_log_name(d, e);
      EXPECT_EQ(slurp(a / "raw" / name), slurp(b / "raw" / name));
    }
  }
  cfg.seed = 2;
  const auto c = fresh_dir("det_c");
  report::emit(run_scenario(cfg, c / "raw"), report::Format::Csv, c);
  EXPECT_NE(slurp(a / "raw" / packet_log_name(3, 1)), slurp(c / "raw" / packet_log_name(3, 1)));
}

TEST(Scenario, KpisMatchRawLogs) {
  for (AppKind app : {AppKind::Probe, AppKind::Lidar, AppKind::Video}) {
    auto cfg = short_config({1, 3}, 8);
    cfg.app = app;
    const auto dir = fresh_dir(std::string("recompute_") + to_string(app));
    const auto r = run_scenario(cfg, dir);
    for (const auto& k : r.rows) {
      const auto log = oracle::read_packet_log((dir / packet_log_name(k.density, 1)).string());
      const auto rec = oracle::recompute(log, 0, cfg.sim_time.us, 1'000'000);
      EXPECT_EQ(k.mean_delay_s, rec.mean_delay_s) << to_string(app);
      EXPECT_EQ(k.throughput_bps, rec.throughput_bps) << to_string(app);
      EXPECT_EQ(k.delivered_streams, rec.stream_count) << to_string(app);
      EXPECT_EQ(k.bytes_received, rec.bytes) << to_string(app);
    }
  }
}

TEST(Scenario, PerStreamConservation) {
  const auto dir = fresh_dir("conservation");
  const auto r = run_scenario(short_config({5}, 10), dir);
  const auto log = oracle::read_packet_log((dir / packet_log_name(5, 1)).string());
  std::map<std::uint32_t, std::map<std::string, std::uint64_t>> by_stream;
  for (const auto& p : log) {
    ++by_stream[p.stream][p.outcome];
    ++by_stream[p.stream]["sent"];
    if (p.arrival_us) {
      EXPECT_GE(*p.arrival_us, p.gen_us);
    }
  }
  for (auto& [s, c] : by_stream) {
    EXPECT_EQ(c["sent"], c["delivered"] + c["collided"] + c["dropped"] + c["inflight"]);
  }
  EXPECT_EQ(by_stream.size(), 5u);
}

TEST(Scenario, LosslessChannelDeliversEveryByte) {
  for (AppKind app : {AppKind::Probe, AppKind::Lidar, AppKind::Video}) {
    auto cfg = short_config({1}, 6);
    cfg.app = app;
    cfg.ideal_channel = true;
    cfg.traffic.background = false;
    const auto dir = fresh_dir(std::string("lossless_") + to_string(app));
    const auto r = run_scenario(cfg, dir);
    const auto log = oracle::read_packet_log((dir / packet_log_name(1, 1)).string());
    std::uint64_t sent = 0;
    for (const auto& p : log) sent += p.bytes;
    const auto& k = r.rows[0];
    EXPECT_GT(sent, 0u);
    EXPECT_EQ(k.bytes_received, sent) << to_string(app);
    EXPECT_EQ(k.packets_received, k.packets_sent) << to_string(app);
    if (app == AppKind::Lidar) {
      EXPECT_EQ(k.scans_received, 60u);
    }
    if (app == AppKind::Video) {
      EXPECT_DOUBLE_EQ(k.playable_duration_s, 6.0);
    }
  }
}

TEST(Scenario, StaticActionScalesProbeRate) {
  auto cfg = short_config({1}, 5);
  cfg.ideal_channel = true;
  cfg.traffic.background = false;
  cfg.fixed_action = 0;
  const auto quarter = run_scenario(cfg).rows[0];
  cfg.fixed_action = 3;
  const auto full = run_scenario(cfg).rows[0];
  EXPECT_EQ(full.packets_sent, 11'000u);
  EXPECT_EQ(quarter.packets_sent, 2'750u);
  EXPECT_EQ(full.action_counts[3], 5u);
  EXPECT_EQ(quarter.action_counts[0], 5u);
}

TEST(Scenario, LearnerPersistsAndCheckpoints) {
  auto cfg = short_config({2}, 20);
  cfg.episodes = 3;
  cfg.rl_enabled = true;
  const auto dir = fresh_dir("qtable");
  std::filesystem::create_directories(dir);
  cfg.qtable_save = (dir / "q.bin").string();
  const auto r = run_scenario(cfg);
  ASSERT_EQ(r.rows.size(), 3u);
  const auto q = agent::QTable::load(cfg.qtable_save);
  bool any = false;
  for (double v : q.values()) any = any || v != 0.0;
  EXPECT_TRUE(any);
  std::uint64_t epochs = 0;
  for (auto c : r.rows[0].action_counts) epochs += c;
  EXPECT_EQ(epochs, 20u);

  auto frozen = cfg;
  frozen.qtable_save.clear();
  frozen.qtable_load = cfg.qtable_save;
  frozen.freeze_learning = true;
  frozen.episodes = 1;
  EXPECT_NO_THROW(run_scenario(frozen));
}

TEST(Scenario, SeedsDifferPerEpisode) {
  EXPECT_NE(episode_seed(1, 5, 1), episode_seed(1, 5, 2));
  EXPECT_NE(episode_seed(1, 5, 1), episode_seed(1, 3, 1));
  EXPECT_EQ(episode_seed(9, 2, 3), episode_seed(9, 2, 3));
}
