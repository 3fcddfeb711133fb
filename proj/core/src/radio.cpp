#include "vhil/radio.hpp"

#include <algorithm>
#include <stdexcept>

namespace vhil::radio {

const char* to_string(FrameKind kind) {
  switch (kind) {
    case FrameKind::Probe:
      return "probe";
    case FrameKind::Lidar:
      return "lidar";
    case FrameKind::Video:
      return "video";
    case FrameKind::Background:
      return "background";
    case FrameKind::External:
      return "external";
    case FrameKind::Ack:
      return "ack";
  }
  return "unknown";
}

const char* to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Received:
      return "received";
    case Outcome::Collided:
      return "collided";
    case Outcome::OutOfRange:
      return "out_of_range";
  }
  return "unknown";
}

void RadioConfig::validate() const {
  if (!(coverage_range_m > 0.0)) {
    throw std::invalid_argument("radio: coverage_range must be positive");
  }
  if (best_effort_rate_bps == 0 || low_rate_bps == 0) {
    throw std::invalid_argument("radio: data rates must be positive");
  }
  if (phy_overhead_us < 0) {
    throw std::invalid_argument("radio: phy_overhead_us must be non-negative");
  }
}

std::uint64_t RadioConfig::rate_for(FrameKind kind) const {
  return kind == FrameKind::Background ? low_rate_bps : best_effort_rate_bps;
}

bool in_range(Vec2 a, Vec2 b, const RadioConfig& cfg) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy <= cfg.coverage_range_m * cfg.coverage_range_m;
}

std::int64_t airtime_us(std::uint64_t payload_len, std::uint64_t rate_bps,
                        std::int64_t overhead_us) {
  if (rate_bps == 0) {
    throw std::invalid_argument("airtime: rate must be positive");
  }
  const std::uint64_t scaled_bits = payload_len * 8 * 1'000'000;
  const std::uint64_t us = (scaled_bits + rate_bps - 1) / rate_bps;
  return static_cast<std::int64_t>(us) + overhead_us;
}

void DcfConfig::validate() const {
  if (cw_min > cw_max) {
    throw std::invalid_argument("dcf: cw_min must not exceed cw_max");
  }
  if (slot_us <= 0 || sifs_us <= 0) {
    throw std::invalid_argument("dcf: slot and SIFS must be positive");
  }
  if (queue_capacity == 0) {
    throw std::invalid_argument("dcf: queue_capacity must be positive");
  }
}

DcfState DcfState::from(const DcfConfig& cfg) {
  DcfState s;
  s.cw_min = cfg.cw_min;
  s.cw_max = cfg.cw_max;
  s.current_cw = cfg.cw_min;
  return s;
}

void DcfState::on_failure() {
  current_cw = std::min(2 * (current_cw + 1) - 1, cw_max);
  ++retry_count;
}

void DcfState::on_success() {
  current_cw = cw_min;
  retry_count = 0;
}

std::uint32_t draw_backoff(const DcfState& dcf, Rng& rng) {
  std::uniform_int_distribution<std::uint32_t> dist(0, dcf.current_cw);
  return dist(rng);
}

std::vector<Reception> resolve_medium(std::span<const Transmission> transmissions,
                                      std::span<const Receiver> receivers,
                                      const RadioConfig& cfg) {
  auto overlaps = [](const Transmission& a, const Transmission& b) {
    return a.start < b.end && b.start < a.end;
  };

  std::vector<Reception> out;
  out.reserve(transmissions.size() * receivers.size());
  for (const auto& tx : transmissions) {
    for (const auto& rx : receivers) {
      if (rx.id == tx.src) {
        continue;
      }
      if (!in_range(tx.src_pos, rx.pos, cfg)) {
        out.push_back({tx.id, rx.id, Outcome::OutOfRange});
        continue;
      }
      const bool jammed = std::any_of(
          transmissions.begin(), transmissions.end(), [&](const Transmission& other) {
            if (other.id == tx.id || !overlaps(tx, other)) {
              return false;
            }
            return other.src == rx.id || in_range(other.src_pos, rx.pos, cfg);
          });
      out.push_back({tx.id, rx.id, jammed ? Outcome::Collided : Outcome::Received});
    }
  }
  return out;
}

}  // namespace vhil::radio
