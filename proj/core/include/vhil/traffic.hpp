#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vhil/network.hpp"
#include "vhil/sim_kernel.hpp"

namespace vhil::traffic {

using net::Bytes;
using radio::FrameKind;

inline constexpr std::uint32_t kMaxPacketSize = 65'489;

struct StreamConfig {
  FrameKind kind = FrameKind::Probe;
  std::uint64_t target_rate_bps = 22'000'000;
  std::uint32_t packet_size = 1250;
  SimTime duration = SimTime::seconds(200);
  SimTime start_time;

  void validate() const;
};

/// Offset of the k-th packet of a constant-bitrate stream,
/// floor(k * size * 8 / rate) in microseconds, so that rounding never
/// accumulates.
SimTime cbr_offset(std::uint64_t k, std::uint32_t packet_size, std::uint64_t rate_bps);

/// floor(duration * rate / (size * 8))
std::uint64_t cbr_packet_count(const StreamConfig& cfg);

/// Emission instants of a fixed-rate stream.
std::vector<SimTime> cbr_schedule(const StreamConfig& cfg);

struct BackgroundConfig {
  std::uint32_t packet_size = 1000;
  SimTime interval = SimTime::millis(10);
};

/// One identical stream per non-gateway vehicle (ids 1..n-1), each offset by
/// a uniform start jitter in [0, interval).
std::vector<StreamConfig> background_traffic(std::size_t n_vehicles, const BackgroundConfig& cfg,
                                             SimTime duration, std::uint64_t seed);

enum class PacketOutcome { Delivered, Collided, Dropped, InFlight };

const char* to_string(PacketOutcome outcome);
std::optional<PacketOutcome> parse_outcome(std::string_view s);

struct PacketRecord {
  std::uint64_t seq = 0;
  SimTime gen_time;
  std::optional<SimTime> arrival_time;
  std::uint32_t bytes = 0;
  PacketOutcome outcome = PacketOutcome::InFlight;
};

struct StreamRecord {
  std::uint32_t stream_id = 0;
  FrameKind kind = FrameKind::Probe;
  std::uint64_t packets_sent = 0;
  std::uint64_t packets_received = 0;
  std::uint64_t bytes_received = 0;
  // Indexed by seq.
  std::vector<PacketRecord> log;
};

/// Half-open [start, end).
struct Window {
  SimTime start;
  SimTime end;
  double seconds() const { return (end - start).to_seconds(); }
};

struct KpiSample {
  Window window;
  std::uint64_t packets = 0;
  std::uint64_t bytes = 0;
  // Absent when nothing arrived in the window.
  std::optional<double> mean_delay_s;
  double throughput_bps = 0.0;
  std::uint32_t delivered_streams = 0;
};

class ClockInversion : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Delay and throughput over the packets of one stream that arrived inside
/// the window.
KpiSample account(const StreamRecord& record, Window window);

/// Same, pooled over several streams; delivered_streams counts the streams
/// with at least one arrival in the window.
KpiSample account(std::span<const StreamRecord* const> records, Window window);

/// Tracks every generated packet through to its fate.
class TrafficLedger {
 public:
  StreamRecord& add_stream(std::uint32_t stream_id, FrameKind kind);
  bool has_stream(std::uint32_t stream_id) const { return streams_.contains(stream_id); }
  const StreamRecord& stream(std::uint32_t stream_id) const { return streams_.at(stream_id); }
  const std::map<std::uint32_t, StreamRecord>& streams() const { return streams_; }

  /// Appends a record and returns the seq to put in the frame.
  std::uint64_t on_generated(std::uint32_t stream_id, SimTime gen_time, std::uint32_t bytes);
  void on_delivered(std::uint32_t stream_id, std::uint64_t seq, SimTime arrival);
  void on_lost(std::uint32_t stream_id, std::uint64_t seq, net::Fate fate);

  /// Writes stream_id,seq,gen_time_us,arrival_time_us,bytes,outcome with a
  /// header line; arrival is empty for undelivered packets.
  void write_csv(std::ostream& out) const;

 private:
  std::map<std::uint32_t, StreamRecord> streams_;
};

/// Splits a message into ceil(size / fragment_size) pieces.
std::vector<Bytes> fragment(std::span<const std::uint8_t> message, std::size_t fragment_size);
std::size_t fragment_count(std::size_t message_size, std::size_t fragment_size);

/// Collects fragments by message id; a message completes once every index
/// has arrived.
class Reassembler {
 public:
  /// Returns the full message the first time it becomes complete.
  std::optional<Bytes> add(std::uint64_t message_id, std::uint32_t frag_index,
                           std::uint32_t frag_count, std::span<const std::uint8_t> data);
  bool complete(std::uint64_t message_id) const { return done_.contains(message_id); }
  std::size_t completed() const { return done_.size(); }
  std::size_t partial() const { return parts_.size(); }

 private:
  struct Partial {
    std::vector<Bytes> pieces;
    std::vector<bool> have;
    std::uint32_t received = 0;
  };
  std::map<std::uint64_t, Partial> parts_;
  std::map<std::uint64_t, bool> done_;
};

/// Constant-bitrate source feeding one node's MAC queue. The rate can be
/// changed while running; the new rate applies from the next packet.
class CbrSource {
 public:
  struct Params {
    NodeId src = 0;
    NodeId dst = 0;
    std::uint32_t stream_id = 0;
    FrameKind kind = FrameKind::Probe;
    std::uint64_t rate_bps = 22'000'000;
    std::uint32_t packet_size = 1250;
    SimTime start;
    SimTime stop;  // exclusive
  };

  CbrSource(Kernel& kernel, net::Network& network, TrafficLedger& ledger, Params params);
  CbrSource(const CbrSource&) = delete;
  CbrSource& operator=(const CbrSource&) = delete;

  void start();
  void set_rate(std::uint64_t rate_bps);
  std::uint64_t rate() const { return params_.rate_bps; }
  std::uint64_t emitted() const { return emitted_; }

 private:
  void emit();
  void schedule_next();

  Kernel& kernel_;
  net::Network& network_;
  TrafficLedger& ledger_;
  Params params_;
  SimTime anchor_;
  std::uint64_t anchor_k_ = 0;
  std::uint64_t emitted_ = 0;
  std::optional<EventHandle> next_;
};

/// Replays a list of messages (LiDAR scans or video chunks) at given
/// offsets, each split into MTU-sized fragments sent back to back.
class MessageSource {
 public:
  struct Emission {
    SimTime at;
    std::uint64_t message_id;
  };
  struct Params {
    NodeId src = 0;
    NodeId dst = 0;
    std::uint32_t stream_id = 0;
    FrameKind kind = FrameKind::Lidar;
    std::size_t fragment_size = 1400;
    SimTime start;
    SimTime stop;
  };

  MessageSource(Kernel& kernel, net::Network& network, TrafficLedger& ledger, Params params,
                std::vector<Bytes> messages, std::vector<SimTime> offsets);
  MessageSource(const MessageSource&) = delete;
  MessageSource& operator=(const MessageSource&) = delete;

  /// Schedules every message (cyclically when the capture is shorter than
  /// the run). `period` is the capture length used for looping.
  void start(SimTime period);
  /// Application-level decimation: a message is sent only while the
  /// accumulated credit (multiplier per message) reaches one.
  void set_rate_multiplier(double m) { multiplier_ = m; }
  std::uint64_t messages_skipped() const { return skipped_; }
  std::uint64_t messages_sent() const { return sent_; }
  std::uint32_t fragments_for(std::uint64_t message_id) const;

 private:
  void emit(std::uint64_t message_id);
  void schedule(std::uint64_t message_id);

  Kernel& kernel_;
  net::Network& network_;
  TrafficLedger& ledger_;
  Params params_;
  SimTime period_;
  std::vector<Bytes> messages_;
  std::vector<SimTime> offsets_;
  double multiplier_ = 1.0;
  double credit_ = 0.0;
  std::uint64_t sent_ = 0;
  std::uint64_t skipped_ = 0;
  std::map<std::uint64_t, std::uint32_t> frag_counts_;
};

}  // namespace vhil::traffic
