#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "vhil/radio.hpp"
#include "vhil/sim_kernel.hpp"

namespace vhil::net {

using radio::FrameKind;
using radio::Vec2;

using Bytes = std::vector<std::uint8_t>;

/// A link-layer datagram. `id` is assigned by Network::enqueue and survives
/// retransmissions.
struct Frame {
  std::uint64_t id = 0;
  NodeId src = 0;
  NodeId dst = radio::kBroadcast;
  std::uint32_t payload_len = 1;
  SimTime gen_time;
  FrameKind kind = FrameKind::Probe;
  std::uint32_t stream_id = 0;
  std::uint64_t seq_in_stream = 0;
  // Carried bytes, when the application cares about content.
  std::shared_ptr<const Bytes> data;
  // Application-level fragmentation of a larger message.
  std::uint64_t message_id = 0;
  std::uint32_t frag_index = 0;
  std::uint32_t frag_count = 1;
};

enum class Fate { Delivered, Collided, Dropped };

const char* to_string(Fate fate);

struct NetworkConfig {
  radio::RadioConfig radio;
  radio::DcfConfig dcf;
  // Bypasses contention and airtime: every frame is delivered at the instant
  // it is enqueued.
  bool ideal = false;
};

struct MacStats {
  std::uint64_t enqueued = 0;
  std::uint64_t data_transmissions = 0;
  std::uint64_t ack_transmissions = 0;
  // Data transmissions corrupted at their intended receiver.
  std::uint64_t collisions = 0;
  std::uint64_t delivered = 0;
  std::uint64_t retry_drops = 0;
  std::uint64_t queue_drops = 0;
};

/// Shared 802.11p-style medium: unit-disk carrier sense and reception, one
/// DCF queue per node (EDCA off), unicast data acknowledged after SIFS,
/// binary exponential backoff up to the retry limit.
class Network {
 public:
  using DeliveryFn = std::function<void(NodeId receiver, const Frame& frame)>;
  using LossFn = std::function<void(const Frame& frame, Fate fate)>;

  Network(Kernel& kernel, NetworkConfig cfg, std::uint64_t seed);
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  NodeId add_node(Vec2 position);
  std::size_t node_count() const { return stations_.size(); }
  void set_position(NodeId node, Vec2 position);
  Vec2 position(NodeId node) const;

  /// Queues a frame at its source. Returns the assigned frame id, or
  /// nullopt when the source queue is full (reported as Dropped).
  std::optional<std::uint64_t> enqueue(Frame frame);

  /// Called once per frame, at the arrival instant, for its destination.
  void on_delivery(DeliveryFn fn) { on_delivery_ = std::move(fn); }
  /// Called once per frame that will never be delivered.
  void on_loss(LossFn fn) { on_loss_ = std::move(fn); }

  const MacStats& stats() const { return stats_; }
  const NetworkConfig& config() const { return cfg_; }
  const radio::DcfState& dcf(NodeId node) const;
  std::size_t queue_length(NodeId node) const;

  /// Visits frames still queued (including any mid-transmission).
  void for_each_queued(const std::function<void(const Frame&)>& fn) const;

 private:
  enum class Phase { Idle, Contend, Transmitting, AwaitAck };

  struct Station {
    Vec2 pos;
    std::deque<Frame> queue;
    radio::DcfState dcf;
    Phase phase = Phase::Idle;
    int heard_busy = 0;
    bool transmitting = false;
    SimTime idle_since;
    std::optional<EventHandle> access;
    SimTime access_time;
    SimTime countdown_start;
    std::optional<EventHandle> ack_timeout;
    bool hol_delivered = false;
    std::vector<std::uint64_t> hearing;
    std::unordered_map<NodeId, std::uint64_t> last_rx_from;
  };

  struct ActiveTx {
    std::uint64_t id;
    NodeId src;
    NodeId dst;
    bool is_ack;
    std::uint64_t frame_id;
    SimTime start;
    SimTime end;
    std::vector<NodeId> listeners;
    std::vector<bool> corrupted;  // indexed by node id
  };

  bool medium_busy(const Station& s) const { return s.heard_busy > 0 || s.transmitting; }
  void start_contention(NodeId node);
  void schedule_access(NodeId node);
  void freeze(NodeId node);
  void medium_became_busy(NodeId node);
  void medium_became_idle(NodeId node);
  void on_access(NodeId node);
  std::uint64_t begin_tx(NodeId src, NodeId dst, bool is_ack, std::uint64_t frame_id,
                         std::int64_t duration_us);
  void end_tx(std::uint64_t tx_id);
  void on_data_received(NodeId receiver, const ActiveTx& tx);
  void on_ack_received(NodeId node, std::uint64_t frame_id);
  void on_ack_timeout(NodeId node);
  void finish_hol(NodeId node, bool success);
  void deliver_ideal(Frame frame);

  Kernel& kernel_;
  NetworkConfig cfg_;
  radio::Rng rng_;
  std::vector<Station> stations_;
  std::unordered_map<std::uint64_t, ActiveTx> active_;
  std::uint64_t next_frame_id_ = 1;
  std::uint64_t next_tx_id_ = 1;
  MacStats stats_;
  DeliveryFn on_delivery_;
  LossFn on_loss_;
};

}  // namespace vhil::net
