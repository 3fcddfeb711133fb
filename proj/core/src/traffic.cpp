#include "vhil/traffic.hpp"

#include <algorithm>
#include <ostream>
#include <random>
#include <stdexcept>

namespace vhil::traffic {

void StreamConfig::validate() const {
  if (target_rate_bps == 0) {
    throw std::invalid_argument("stream: target_rate must be positive");
  }
  if (packet_size < 1 || packet_size > kMaxPacketSize) {
    throw std::invalid_argument("stream: packet_size must lie in [1, 65489]");
  }
  if (duration.us < 0 || start_time.us < 0) {
    throw std::invalid_argument("stream: times must be non-negative");
  }
}

namespace {
__extension__ typedef unsigned __int128 u128;
}  // namespace

SimTime cbr_offset(std::uint64_t k, std::uint32_t packet_size, std::uint64_t rate_bps) {
  const u128 num =
      static_cast<u128>(k) * packet_size * 8u * 1'000'000u;
  return SimTime{static_cast<std::int64_t>(num / rate_bps)};
}

std::uint64_t cbr_packet_count(const StreamConfig& cfg) {
  cfg.validate();
  const u128 num = static_cast<u128>(cfg.duration.us) * cfg.target_rate_bps;
  const u128 den = static_cast<u128>(cfg.packet_size) * 8u * 1'000'000u;
  return static_cast<std::uint64_t>(num / den);
}

std::vector<SimTime> cbr_schedule(const StreamConfig& cfg) {
  const std::uint64_t n = cbr_packet_count(cfg);
  std::vector<SimTime> out;
  out.reserve(n);
  for (std::uint64_t k = 0; k < n; ++k) {
    out.push_back(cfg.start_time + cbr_offset(k, cfg.packet_size, cfg.target_rate_bps));
  }
  return out;
}

std::vector<StreamConfig> background_traffic(std::size_t n_vehicles, const BackgroundConfig& cfg,
                                             SimTime duration, std::uint64_t seed) {
  if (n_vehicles == 0) {
    throw std::invalid_argument("background_traffic: at least one vehicle is required");
  }
  if (cfg.interval.us <= 0) {
    throw std::invalid_argument("background_traffic: interval must be positive");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> jitter(0, cfg.interval.us - 1);
  const std::uint64_t rate =
      std::uint64_t{cfg.packet_size} * 8u * 1'000'000u / static_cast<std::uint64_t>(cfg.interval.us);

  std::vector<StreamConfig> out;
  for (std::size_t v = 1; v < n_vehicles; ++v) {
    StreamConfig s;
    s.kind = FrameKind::Background;
    s.target_rate_bps = rate;
    s.packet_size = cfg.packet_size;
    s.start_time = SimTime{jitter(rng)};
    s.duration = duration - s.start_time;
    out.push_back(s);
  }
  return out;
}

const char* to_string(PacketOutcome outcome) {
  switch (outcome) {
    case PacketOutcome::Delivered:
      return "delivered";
    case PacketOutcome::Collided:
      return "collided";
    case PacketOutcome::Dropped:
      return "dropped";
    case PacketOutcome::InFlight:
      return "inflight";
  }
  return "unknown";
}

std::optional<PacketOutcome> parse_outcome(std::string_view s) {
  for (auto o : {PacketOutcome::Delivered, PacketOutcome::Collided, PacketOutcome::Dropped,
                 PacketOutcome::InFlight}) {
    if (s == to_string(o)) {
      return o;
    }
  }
  return std::nullopt;
}

namespace {

struct Accumulator {
  std::uint64_t packets = 0;
  std::uint64_t bytes = 0;
  std::int64_t delay_sum_us = 0;

  bool add(const StreamRecord& record, Window window) {
    bool any = false;
    for (const auto& p : record.log) {
      if (!p.arrival_time) {
        continue;
      }
      const SimTime arrival = *p.arrival_time;
      if (arrival < window.start || arrival >= window.end) {
        continue;
      }
      if (arrival < p.gen_time) {
        throw ClockInversion("packet " + std::to_string(p.seq) + " of stream " +
                             std::to_string(record.stream_id) + " arrived before it was generated");
      }
      ++packets;
      bytes += p.bytes;
      delay_sum_us += (arrival - p.gen_time).us;
      any = true;
    }
    return any;
  }

  KpiSample finish(Window window, std::uint32_t streams) const {
    KpiSample s;
    s.window = window;
    s.packets = packets;
    s.bytes = bytes;
    if (packets > 0) {
      s.mean_delay_s = static_cast<double>(delay_sum_us) / static_cast<double>(packets) / 1e6;
    }
    s.throughput_bps = 8.0 * static_cast<double>(bytes) / window.seconds();
    s.delivered_streams = streams;
    return s;
  }
};

}  // namespace

KpiSample account(const StreamRecord& record, Window window) {
  const StreamRecord* one[] = {&record};
  return account(std::span<const StreamRecord* const>(one), window);
}

KpiSample account(std::span<const StreamRecord* const> records, Window window) {
  if (!(window.end > window.start)) {
    throw std::invalid_argument("account: window must have positive length");
  }
  Accumulator acc;
  std::uint32_t streams = 0;
  for (const StreamRecord* r : records) {
    if (acc.add(*r, window)) {
      ++streams;
    }
  }
  return acc.finish(window, streams);
}

StreamRecord& TrafficLedger::add_stream(std::uint32_t stream_id, FrameKind kind) {
  auto [it, inserted] = streams_.try_emplace(stream_id);
  if (inserted) {
    it->second.stream_id = stream_id;
    it->second.kind = kind;
  }
  return it->second;
}

std::uint64_t TrafficLedger::on_generated(std::uint32_t stream_id, SimTime gen_time,
                                          std::uint32_t bytes) {
  StreamRecord& r = streams_.at(stream_id);
  const std::uint64_t seq = r.log.size();
  r.log.push_back(PacketRecord{seq, gen_time, std::nullopt, bytes, PacketOutcome::InFlight});
  ++r.packets_sent;
  return seq;
}

void TrafficLedger::on_delivered(std::uint32_t stream_id, std::uint64_t seq, SimTime arrival) {
  StreamRecord& r = streams_.at(stream_id);
  PacketRecord& p = r.log.at(seq);
  if (p.outcome == PacketOutcome::Delivered) {
    return;
  }
  if (arrival < p.gen_time) {
    throw ClockInversion("arrival precedes generation");
  }
  p.arrival_time = arrival;
  p.outcome = PacketOutcome::Delivered;
  ++r.packets_received;
  r.bytes_received += p.bytes;
}

void TrafficLedger::on_lost(std::uint32_t stream_id, std::uint64_t seq, net::Fate fate) {
  PacketRecord& p = streams_.at(stream_id).log.at(seq);
  if (p.outcome != PacketOutcome::InFlight) {
    return;
  }
  p.outcome = fate == net::Fate::Collided ? PacketOutcome::Collided : PacketOutcome::Dropped;
}

void TrafficLedger::write_csv(std::ostream& out) const {
  out << "stream_id,seq,gen_time_us,arrival_time_us,bytes,outcome\n";
  for (const auto& [id, r] : streams_) {
    for (const auto& p : r.log) {
      out << id << ',' << p.seq << ',' << p.gen_time.us << ',';
      if (p.arrival_time) {
        out << p.arrival_time->us;
      }
      out << ',' << p.bytes << ',' << to_string(p.outcome) << '\n';
    }
  }
}

std::size_t fragment_count(std::size_t message_size, std::size_t fragment_size) {
  if (fragment_size == 0) {
    throw std::invalid_argument("fragment_size must be positive");
  }
  return std::max<std::size_t>(1, (message_size + fragment_size - 1) / fragment_size);
}

std::vector<Bytes> fragment(std::span<const std::uint8_t> message, std::size_t fragment_size) {
  const std::size_t n = fragment_count(message.size(), fragment_size);
  std::vector<Bytes> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t begin = i * fragment_size;
    const std::size_t end = std::min(message.size(), begin + fragment_size);
    out.emplace_back(message.begin() + static_cast<std::ptrdiff_t>(begin),
                     message.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::optional<Bytes> Reassembler::add(std::uint64_t message_id, std::uint32_t frag_index,
                                      std::uint32_t frag_count, std::span<const std::uint8_t> data) {
  if (frag_count == 0 || frag_index >= frag_count) {
    throw std::invalid_argument("Reassembler: fragment index out of range");
  }
  if (done_.contains(message_id)) {
    return std::nullopt;
  }
  Partial& p = parts_[message_id];
  if (p.pieces.empty()) {
    p.pieces.resize(frag_count);
    p.have.assign(frag_count, false);
  } else if (p.pieces.size() != frag_count) {
    throw std::invalid_argument("Reassembler: inconsistent fragment count");
  }
  if (p.have[frag_index]) {
    return std::nullopt;
  }
  p.have[frag_index] = true;
  p.pieces[frag_index].assign(data.begin(), data.end());
  if (++p.received < frag_count) {
    return std::nullopt;
  }
  Bytes whole;
  for (auto& piece : p.pieces) {
    whole.insert(whole.end(), piece.begin(), piece.end());
  }
  parts_.erase(message_id);
  done_.emplace(message_id, true);
  return whole;
}

CbrSource::CbrSource(Kernel& kernel, net::Network& network, TrafficLedger& ledger, Params params)
    : kernel_(kernel), network_(network), ledger_(ledger), params_(params) {
  if (params_.rate_bps == 0 || params_.packet_size == 0 || params_.packet_size > kMaxPacketSize) {
    throw std::invalid_argument("CbrSource: invalid rate or packet size");
  }
  ledger_.add_stream(params_.stream_id, params_.kind);
}

void CbrSource::start() {
  anchor_ = std::max(params_.start, kernel_.now());
  anchor_k_ = 0;
  schedule_next();
}

void CbrSource::schedule_next() {
  const SimTime at =
      anchor_ + cbr_offset(emitted_ - anchor_k_, params_.packet_size, params_.rate_bps);
  if (at >= params_.stop) {
    next_.reset();
    return;
  }
  next_ = kernel_.schedule_at(at, params_.src, [this] { emit(); });
}

void CbrSource::emit() {
  next_.reset();
  net::Frame f;
  f.src = params_.src;
  f.dst = params_.dst;
  f.payload_len = params_.packet_size;
  f.gen_time = kernel_.now();
  f.kind = params_.kind;
  f.stream_id = params_.stream_id;
  f.seq_in_stream = ledger_.on_generated(params_.stream_id, f.gen_time, params_.packet_size);
  ++emitted_;
  network_.enqueue(std::move(f));
  schedule_next();
}

void CbrSource::set_rate(std::uint64_t rate_bps) {
  if (rate_bps == 0) {
    throw std::invalid_argument("CbrSource: rate must be positive");
  }
  if (rate_bps == params_.rate_bps) {
    return;
  }
  params_.rate_bps = rate_bps;
  if (!next_) {
    return;
  }
  // Re-anchor on the last emission so the gap to the next packet follows
  // the new rate.
  kernel_.cancel(*next_);
  next_.reset();
  if (emitted_ == 0) {
    schedule_next();
    return;
  }
  const SimTime last = ledger_.stream(params_.stream_id).log.back().gen_time;
  anchor_k_ = emitted_ - 1;
  anchor_ = last;
  const SimTime at = anchor_ + cbr_offset(1, params_.packet_size, params_.rate_bps);
  if (at < kernel_.now()) {
    anchor_ = kernel_.now();
    anchor_k_ = emitted_;
  }
  schedule_next();
}

MessageSource::MessageSource(Kernel& kernel, net::Network& network, TrafficLedger& ledger,
                             Params params, std::vector<Bytes> messages,
                             std::vector<SimTime> offsets)
    : kernel_(kernel),
      network_(network),
      ledger_(ledger),
      params_(params),
      messages_(std::move(messages)),
      offsets_(std::move(offsets)) {
  if (messages_.empty() || messages_.size() != offsets_.size()) {
    throw std::invalid_argument("MessageSource: need one offset per message");
  }
  ledger_.add_stream(params_.stream_id, params_.kind);
}

std::uint32_t MessageSource::fragments_for(std::uint64_t message_id) const {
  auto it = frag_counts_.find(message_id);
  return it == frag_counts_.end() ? 0 : it->second;
}

void MessageSource::start(SimTime period) {
  if (period <= offsets_.back()) {
    throw std::invalid_argument("MessageSource: period must exceed the last offset");
  }
  period_ = period;
  schedule(0);
}

// One pending event per source; the id encodes (loop, index).
void MessageSource::schedule(std::uint64_t message_id) {
  const std::uint64_t n = messages_.size();
  const SimTime at = params_.start +
                     SimTime{static_cast<std::int64_t>(message_id / n) * period_.us} +
                     offsets_[message_id % n];
  if (at >= params_.stop) {
    return;
  }
  kernel_.schedule_at(at, params_.src, [this, message_id] {
    emit(message_id);
    schedule(message_id + 1);
  });
}

void MessageSource::emit(std::uint64_t message_id) {
  credit_ += multiplier_;
  if (credit_ < 1.0) {
    ++skipped_;
    return;
  }
  credit_ -= 1.0;
  ++sent_;
  const Bytes& msg = messages_[message_id % messages_.size()];
  auto pieces = fragment(msg, params_.fragment_size);
  const auto count = static_cast<std::uint32_t>(pieces.size());
  frag_counts_[message_id] = count;
  for (std::uint32_t i = 0; i < count; ++i) {
    net::Frame f;
    f.src = params_.src;
    f.dst = params_.dst;
    f.payload_len = static_cast<std::uint32_t>(pieces[i].size());
    f.gen_time = kernel_.now();
    f.kind = params_.kind;
    f.stream_id = params_.stream_id;
    f.seq_in_stream = ledger_.on_generated(params_.stream_id, f.gen_time, f.payload_len);
    f.message_id = message_id;
    f.frag_index = i;
    f.frag_count = count;
    f.data = std::make_shared<const Bytes>(std::move(pieces[i]));
    network_.enqueue(std::move(f));
  }
}

}  // namespace vhil::traffic
