#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace vhil::gateway {

/// Wire layout (big-endian):
///
///   offset  size  field
///   0       4     magic "VHIL"
///   4       1     version (1)
///   5       1     kind (1 ToSim, 2 FromSim, 3 Control)
///   6       8     timestamp_us, sender wall clock since the Unix epoch
///   14      4     payload_len
///   18      n     payload
inline constexpr std::size_t kEnvelopeHeaderSize = 18;
inline constexpr std::size_t kMaxDatagram = 65'507;
inline constexpr std::size_t kMaxEnvelopePayload = kMaxDatagram - kEnvelopeHeaderSize;
inline constexpr std::uint8_t kEnvelopeVersion = 1;

enum class EnvelopeKind : std::uint8_t { ToSim = 1, FromSim = 2, Control = 3 };

struct Envelope {
  EnvelopeKind kind = EnvelopeKind::ToSim;
  std::uint64_t timestamp_us = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const Envelope&) const = default;
};

enum class DecodeErrorCode {
  BadMagic,
  BadVersion,
  BadKind,
  // Fewer bytes than the header or the declared payload length.
  TruncatedPayload,
  // More bytes than the declared payload length.
  TrailingBytes,
};

const char* to_string(DecodeErrorCode code);

class DecodeError : public std::runtime_error {
 public:
  explicit DecodeError(DecodeErrorCode code);
  DecodeErrorCode code() const { return code_; }

 private:
  DecodeErrorCode code_;
};

/// Throws std::length_error if the payload exceeds kMaxEnvelopePayload.
std::vector<std::uint8_t> encode(const Envelope& env);
Envelope decode(std::span<const std::uint8_t> bytes);

std::uint64_t wall_clock_us();

}  // namespace vhil::gateway
