#include "vhil/network.hpp"

#include <algorithm>
#include <stdexcept>

namespace vhil::net {

namespace {

enum Tag : std::uint32_t {
  kTagAccess = 1,
  kTagTxEnd = 2,
  kTagAck = 3,
  kTagAckTimeout = 4,
  kTagIdealDelivery = 5,
};

}  // namespace

const char* to_string(Fate fate) {
  switch (fate) {
    case Fate::Delivered:
      return "delivered";
    case Fate::Collided:
      return "collided";
    case Fate::Dropped:
      return "dropped";
  }
  return "unknown";
}

Network::Network(Kernel& kernel, NetworkConfig cfg, std::uint64_t seed)
    : kernel_(kernel), cfg_(std::move(cfg)), rng_(seed) {
  cfg_.radio.validate();
  cfg_.dcf.validate();
}

NodeId Network::add_node(Vec2 position) {
  Station s;
  s.pos = position;
  s.dcf = radio::DcfState::from(cfg_.dcf);
  s.idle_since = kernel_.now();
  stations_.push_back(std::move(s));
  return static_cast<NodeId>(stations_.size() - 1);
}

void Network::set_position(NodeId node, Vec2 position) {
  stations_.at(node).pos = position;
}

Vec2 Network::position(NodeId node) const {
  return stations_.at(node).pos;
}

const radio::DcfState& Network::dcf(NodeId node) const {
  return stations_.at(node).dcf;
}

std::size_t Network::queue_length(NodeId node) const {
  return stations_.at(node).queue.size();
}

void Network::for_each_queued(const std::function<void(const Frame&)>& fn) const {
  for (const auto& s : stations_) {
    for (const auto& f : s.queue) {
      fn(f);
    }
  }
}

std::optional<std::uint64_t> Network::enqueue(Frame frame) {
  if (frame.src >= stations_.size()) {
    throw std::out_of_range("enqueue: unknown source node");
  }
  if (frame.dst != radio::kBroadcast && frame.dst >= stations_.size()) {
    throw std::out_of_range("enqueue: unknown destination node");
  }
  if (frame.payload_len == 0) {
    throw std::invalid_argument("enqueue: payload_len must be at least 1");
  }
  if (frame.gen_time > kernel_.now()) {
    throw std::invalid_argument("enqueue: frame generated in the future");
  }
  frame.id = next_frame_id_++;
  ++stats_.enqueued;
  const std::uint64_t id = frame.id;

  if (cfg_.ideal) {
    kernel_.schedule_in(
        SimTime{}, frame.src, [this, f = std::move(frame)]() mutable { deliver_ideal(std::move(f)); },
        kTagIdealDelivery);
    return id;
  }

  Station& s = stations_[frame.src];
  if (s.queue.size() >= cfg_.dcf.queue_capacity) {
    ++stats_.queue_drops;
    if (on_loss_) {
      on_loss_(frame, Fate::Dropped);
    }
    return std::nullopt;
  }
  const NodeId src = frame.src;
  s.queue.push_back(std::move(frame));
  if (s.phase == Phase::Idle) {
    start_contention(src);
  }
  return id;
}

void Network::deliver_ideal(Frame frame) {
  if (frame.dst == radio::kBroadcast) {
    for (NodeId n = 0; n < stations_.size(); ++n) {
      if (n != frame.src) {
        ++stats_.delivered;
        if (on_delivery_) {
          on_delivery_(n, frame);
        }
      }
    }
    return;
  }
  ++stats_.delivered;
  if (on_delivery_) {
    on_delivery_(frame.dst, frame);
  }
}

void Network::start_contention(NodeId node) {
  Station& s = stations_[node];
  s.dcf.backoff_counter = radio::draw_backoff(s.dcf, rng_);
  s.phase = Phase::Contend;
  if (!medium_busy(s)) {
    schedule_access(node);
  }
}

void Network::schedule_access(NodeId node) {
  Station& s = stations_[node];
  const SimTime difs{cfg_.dcf.difs_us()};
  s.countdown_start = std::max(kernel_.now(), s.idle_since + difs);
  s.access_time =
      s.countdown_start + SimTime{static_cast<std::int64_t>(s.dcf.backoff_counter) * cfg_.dcf.slot_us};
  s.access = kernel_.schedule_at(
      s.access_time, node, [this, node] { on_access(node); }, kTagAccess);
}

void Network::freeze(NodeId node) {
  Station& s = stations_[node];
  if (!s.access) {
    return;
  }
  // A station whose countdown expires in this very slot cannot sense the
  // other transmitter in time and goes ahead.
  if (s.access_time == kernel_.now()) {
    return;
  }
  kernel_.cancel(*s.access);
  s.access.reset();
  if (kernel_.now() > s.countdown_start) {
    const auto consumed =
        static_cast<std::uint32_t>((kernel_.now() - s.countdown_start).us / cfg_.dcf.slot_us);
    s.dcf.backoff_counter -= std::min(consumed, s.dcf.backoff_counter);
  }
}

void Network::medium_became_busy(NodeId node) {
  if (stations_[node].phase == Phase::Contend) {
    freeze(node);
  }
}

void Network::medium_became_idle(NodeId node) {
  Station& s = stations_[node];
  s.idle_since = kernel_.now();
  if (s.phase == Phase::Contend && !s.access) {
    schedule_access(node);
  }
}

void Network::on_access(NodeId node) {
  Station& s = stations_[node];
  s.access.reset();
  s.phase = Phase::Transmitting;
  const Frame& f = s.queue.front();
  const auto duration =
      radio::airtime_us(std::uint64_t{f.payload_len} + cfg_.radio.mac_header_bytes,
                        cfg_.radio.rate_for(f.kind), cfg_.radio.phy_overhead_us);
  ++stats_.data_transmissions;
  begin_tx(node, f.dst, false, f.id, duration);
}

std::uint64_t Network::begin_tx(NodeId src, NodeId dst, bool is_ack, std::uint64_t frame_id,
                                std::int64_t duration_us) {
  const std::uint64_t id = next_tx_id_++;
  auto [it, inserted] = active_.emplace(
      id, ActiveTx{id, src, dst, is_ack, frame_id, kernel_.now(),
                   kernel_.now() + SimTime{duration_us}, {}, std::vector<bool>(stations_.size())});
  ActiveTx& tx = it->second;

  Station& sender = stations_[src];
  // Half duplex: whatever the sender was hearing is lost to it.
  for (auto heard : sender.hearing) {
    active_.at(heard).corrupted[src] = true;
  }
  const bool sender_was_busy = medium_busy(sender);
  sender.transmitting = true;
  if (!sender_was_busy) {
    medium_became_busy(src);
  }

  for (NodeId r = 0; r < stations_.size(); ++r) {
    if (r == src) {
      continue;
    }
    Station& rx = stations_[r];
    if (!radio::in_range(sender.pos, rx.pos, cfg_.radio)) {
      continue;
    }
    tx.listeners.push_back(r);
    if (!rx.hearing.empty() || rx.transmitting) {
      tx.corrupted[r] = true;
      for (auto heard : rx.hearing) {
        active_.at(heard).corrupted[r] = true;
      }
    }
    rx.hearing.push_back(id);
    const bool was_busy = medium_busy(rx);
    ++rx.heard_busy;
    if (!was_busy) {
      medium_became_busy(r);
    }
  }

  kernel_.schedule_in(
      SimTime{duration_us}, src, [this, id] { end_tx(id); }, kTagTxEnd);
  return id;
}

void Network::end_tx(std::uint64_t tx_id) {
  auto node = active_.extract(tx_id);
  const ActiveTx tx = std::move(node.mapped());

  std::vector<NodeId> went_idle;
  Station& sender = stations_[tx.src];
  sender.transmitting = false;
  if (!medium_busy(sender)) {
    went_idle.push_back(tx.src);
  }
  for (NodeId r : tx.listeners) {
    Station& rx = stations_[r];
    rx.hearing.erase(std::find(rx.hearing.begin(), rx.hearing.end(), tx_id));
    --rx.heard_busy;
    if (!medium_busy(rx)) {
      went_idle.push_back(r);
    }
  }
  // Stamp idle time before any completion handler restarts contention, so
  // every station defers a full DIFS from the same instant.
  for (NodeId n : went_idle) {
    stations_[n].idle_since = kernel_.now();
  }

  if (tx.is_ack) {
    const bool heard = std::find(tx.listeners.begin(), tx.listeners.end(), tx.dst) !=
                       tx.listeners.end();
    if (heard && !tx.corrupted[tx.dst]) {
      on_ack_received(tx.dst, tx.frame_id);
    }
  } else if (tx.dst == radio::kBroadcast) {
    const Frame frame = sender.queue.front();
    for (NodeId r : tx.listeners) {
      if (!tx.corrupted[r]) {
        ++stats_.delivered;
        if (on_delivery_) {
          on_delivery_(r, frame);
        }
      }
    }
    finish_hol(tx.src, true);
  } else {
    const bool heard = std::find(tx.listeners.begin(), tx.listeners.end(), tx.dst) !=
                       tx.listeners.end();
    if (heard && !tx.corrupted[tx.dst]) {
      on_data_received(tx.dst, tx);
    } else if (heard) {
      ++stats_.collisions;
    }
    Station& s = stations_[tx.src];
    s.phase = Phase::AwaitAck;
    const Frame& f = s.queue.front();
    const auto ack_air = radio::airtime_us(cfg_.radio.ack_bytes, cfg_.radio.rate_for(f.kind),
                                           cfg_.radio.phy_overhead_us);
    const NodeId src = tx.src;
    s.ack_timeout = kernel_.schedule_in(
        SimTime{cfg_.dcf.sifs_us + ack_air + cfg_.dcf.slot_us}, src,
        [this, src] { on_ack_timeout(src); }, kTagAckTimeout);
  }

  for (NodeId n : went_idle) {
    if (!medium_busy(stations_[n])) {
      medium_became_idle(n);
    }
  }
}

void Network::on_data_received(NodeId receiver, const ActiveTx& tx) {
  Station& sender = stations_[tx.src];
  const Frame frame = sender.queue.front();
  Station& rx = stations_[receiver];
  auto [it, first] = rx.last_rx_from.try_emplace(tx.src, frame.id);
  const bool duplicate = !first && it->second == frame.id;
  it->second = frame.id;
  if (!duplicate) {
    ++stats_.delivered;
    sender.hol_delivered = true;
    if (on_delivery_) {
      on_delivery_(receiver, frame);
    }
  }

  const auto ack_air = radio::airtime_us(cfg_.radio.ack_bytes, cfg_.radio.rate_for(frame.kind),
                                         cfg_.radio.phy_overhead_us);
  const NodeId data_src = tx.src;
  const std::uint64_t frame_id = frame.id;
  kernel_.schedule_in(
      SimTime{cfg_.dcf.sifs_us}, receiver,
      [this, receiver, data_src, frame_id, ack_air] {
        ++stats_.ack_transmissions;
        begin_tx(receiver, data_src, true, frame_id, ack_air);
      },
      kTagAck);
}

void Network::on_ack_received(NodeId node, std::uint64_t frame_id) {
  Station& s = stations_[node];
  if (s.phase != Phase::AwaitAck || s.queue.empty() || s.queue.front().id != frame_id) {
    return;
  }
  if (s.ack_timeout) {
    kernel_.cancel(*s.ack_timeout);
    s.ack_timeout.reset();
  }
  finish_hol(node, true);
}

void Network::on_ack_timeout(NodeId node) {
  Station& s = stations_[node];
  s.ack_timeout.reset();
  s.dcf.on_failure();
  if (s.dcf.retry_count > cfg_.dcf.retry_limit) {
    finish_hol(node, false);
  } else {
    start_contention(node);
  }
}

void Network::finish_hol(NodeId node, bool success) {
  Station& s = stations_[node];
  Frame f = std::move(s.queue.front());
  s.queue.pop_front();
  s.dcf.on_success();
  const bool delivered = s.hol_delivered;
  s.hol_delivered = false;
  s.phase = Phase::Idle;
  if (!success && !delivered) {
    ++stats_.retry_drops;
    if (on_loss_) {
      on_loss_(f, Fate::Collided);
    }
  }
  if (!s.queue.empty() && s.phase == Phase::Idle) {
    start_contention(node);
  }
}

}  // namespace vhil::net
