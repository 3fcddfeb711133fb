#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "vhil/mobility.hpp"
#include "vhil/sim_kernel.hpp"

namespace vhil::radio {

using mobility::Vec2;

inline constexpr NodeId kBroadcast = 0xFFFFFFFFu;
inline constexpr std::size_t kMacMtu = 2304;

enum class FrameKind : std::uint8_t { Probe, Lidar, Video, Background, External, Ack };

const char* to_string(FrameKind kind);

/// Radio parameters. Only the coverage range and the two data rates
/// affect the medium model; power, frequency and bandwidth are carried as
/// configuration metadata.
struct RadioConfig {
  double coverage_range_m = 200.0;
  double tx_power_mw = 200.0;
  double frequency_hz = 5.9e9;
  double channel_bandwidth_hz = 20e6;
  std::uint64_t best_effort_rate_bps = 28'000'000;
  std::uint64_t low_rate_bps = 1'370'000;
  // PLCP preamble + header, charged on every frame.
  std::int64_t phy_overhead_us = 40;
  std::uint32_t mac_header_bytes = 28;
  std::uint32_t ack_bytes = 14;

  void validate() const;
  /// Probe, video, LiDAR and external traffic use the best-effort rate;
  /// background vehicles use the low rate.
  std::uint64_t rate_for(FrameKind kind) const;
};

/// Unit-disk reachability, inclusive at the coverage boundary.
bool in_range(Vec2 a, Vec2 b, const RadioConfig& cfg);

/// ceil(payload_len * 8 / rate * 1e6) + overhead_us, in integer microseconds.
std::int64_t airtime_us(std::uint64_t payload_len, std::uint64_t rate_bps,
                        std::int64_t overhead_us);

struct DcfConfig {
  std::uint32_t cw_min = 15;
  std::uint32_t cw_max = 1023;
  std::int64_t slot_us = 13;
  std::int64_t sifs_us = 32;
  std::uint32_t retry_limit = 7;
  std::size_t queue_capacity = 100;

  std::int64_t difs_us() const { return sifs_us + 2 * slot_us; }
  void validate() const;
};

/// Contention-window bookkeeping for one station.
struct DcfState {
  std::uint32_t cw_min = 15;
  std::uint32_t cw_max = 1023;
  std::uint32_t current_cw = 15;
  std::uint32_t backoff_counter = 0;
  std::uint32_t retry_count = 0;

  static DcfState from(const DcfConfig& cfg);
  /// current_cw' = min(2 * (current_cw + 1) - 1, cw_max)
  void on_failure();
  /// Resets the window and the retry counter.
  void on_success();
};

using Rng = std::mt19937_64;

/// Uniform integer in [0, current_cw].
std::uint32_t draw_backoff(const DcfState& dcf, Rng& rng);

struct Transmission {
  std::uint64_t id = 0;
  NodeId src = 0;
  Vec2 src_pos;
  SimTime start;
  SimTime end;  // exclusive
};

struct Receiver {
  NodeId id = 0;
  Vec2 pos;
};

enum class Outcome { Received, Collided, OutOfRange };

const char* to_string(Outcome outcome);

struct Reception {
  std::uint64_t tx_id;
  NodeId receiver;
  Outcome outcome;

  bool operator==(const Reception&) const = default;
};

/// Judges every (transmission, receiver) pair, skipping a sender's own
/// transmission. A receiver hearing two or more time-overlapping
/// transmissions loses all of them; there is no capture effect. A
/// receiver's own overlapping transmission counts as heard.
///
/// Output is ordered by transmission, then receiver, as given.
std::vector<Reception> resolve_medium(std::span<const Transmission> transmissions,
                                      std::span<const Receiver> receivers,
                                      const RadioConfig& cfg);

}  // namespace vhil::radio
