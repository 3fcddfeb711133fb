#include "vhil/envelope.hpp"

#include <algorithm>
#include <array>
#include <chrono>

namespace vhil::gateway {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'V', 'H', 'I', 'L'};

std::uint64_t read_be(std::span<const std::uint8_t> b, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) {
    v = (v << 8) | b[i];
  }
  return v;
}

void write_be(std::vector<std::uint8_t>& out, std::uint64_t v, std::size_t width) {
  for (std::size_t i = width; i-- > 0;) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

}  // namespace

const char* to_string(DecodeErrorCode code) {
  switch (code) {
    case DecodeErrorCode::BadMagic:
      return "bad magic";
    case DecodeErrorCode::BadVersion:
      return "bad version";
    case DecodeErrorCode::BadKind:
      return "bad kind";
    case DecodeErrorCode::TruncatedPayload:
      return "truncated payload";
    case DecodeErrorCode::TrailingBytes:
      return "trailing bytes";
  }
  return "unknown";
}

DecodeError::DecodeError(DecodeErrorCode code)
    : std::runtime_error(std::string("envelope decode: ") + to_string(code)), code_(code) {}

std::vector<std::uint8_t> encode(const Envelope& env) {
  if (env.payload.size() > kMaxEnvelopePayload) {
    throw std::length_error("envelope payload exceeds a single datagram");
  }
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.reserve(kEnvelopeHeaderSize + env.payload.size());
  out.push_back(kEnvelopeVersion);
  out.push_back(static_cast<std::uint8_t>(env.kind));
  write_be(out, env.timestamp_us, 8);
  write_be(out, env.payload.size(), 4);
  out.insert(out.end(), env.payload.begin(), env.payload.end());
  return out;
}

Envelope decode(std::span<const std::uint8_t> bytes) {
  // Validate whatever prefix is present before complaining about length.
  const std::size_t magic_len = std::min(bytes.size(), kMagic.size());
  if (!std::equal(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(magic_len),
                  kMagic.begin())) {
    throw DecodeError(DecodeErrorCode::BadMagic);
  }
  if (bytes.size() < kEnvelopeHeaderSize) {
    throw DecodeError(DecodeErrorCode::TruncatedPayload);
  }
  if (bytes[4] != kEnvelopeVersion) {
    throw DecodeError(DecodeErrorCode::BadVersion);
  }
  const std::uint8_t kind = bytes[5];
  if (kind < 1 || kind > 3) {
    throw DecodeError(DecodeErrorCode::BadKind);
  }
  const std::uint64_t len = read_be(bytes.subspan(14), 4);
  const std::size_t available = bytes.size() - kEnvelopeHeaderSize;
  if (len > available) {
    throw DecodeError(DecodeErrorCode::TruncatedPayload);
  }
  if (len < available) {
    throw DecodeError(DecodeErrorCode::TrailingBytes);
  }
  Envelope env;
  env.kind = static_cast<EnvelopeKind>(kind);
  env.timestamp_us = read_be(bytes.subspan(6), 8);
  env.payload.assign(bytes.begin() + kEnvelopeHeaderSize, bytes.end());
  return env;
}

std::uint64_t wall_clock_us() {
  using namespace std::chrono;
  return static_cast<std::uint64_t>(
      duration_cast<microseconds>(system_clock::now().time_since_epoch()).count());
}

}  // namespace vhil::gateway
