#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "vhil/sim_kernel.hpp"

namespace vhil::capture {

using Bytes = std::vector<std::uint8_t>;

class MalformedCapture : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// LiDAR scan container: "LSCN", then per scan a big-endian u32 length and
// that many payload bytes. Scans are non-empty.
Bytes write_lidar_capture(std::span<const Bytes> scans);
std::vector<Bytes> parse_lidar_capture(std::span<const std::uint8_t> file);

struct VideoChunk {
  SimTime timestamp;
  Bytes data;
  bool operator==(const VideoChunk&) const = default;
};

// Video chunk container: "VCHK", then per chunk a big-endian u64 timestamp
// in microseconds, a big-endian u32 length and the payload. Timestamps are
// strictly increasing and chunks non-empty.
Bytes write_video_capture(std::span<const VideoChunk> chunks);
std::vector<VideoChunk> parse_video_capture(std::span<const std::uint8_t> file);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Deterministic pseudo-random scans / chunks for runs without a recorded
/// capture.
std::vector<Bytes> synthetic_lidar_scans(std::size_t count, std::size_t scan_bytes,
                                         std::uint64_t seed);
std::vector<VideoChunk> synthetic_video(std::size_t count, SimTime chunk_interval,
                                        std::size_t chunk_bytes, std::uint64_t seed);

struct ScheduledFragment {
  SimTime at;
  std::uint32_t message_index;
  std::uint32_t frag_index;
  std::uint32_t frag_count;
  std::size_t offset;
  std::size_t length;
  bool operator==(const ScheduledFragment&) const = default;
};

/// Scan k at k / rate_hz seconds, split into fragment_size pieces.
std::vector<ScheduledFragment> lidar_replay(std::span<const Bytes> scans, double rate_hz,
                                            std::size_t fragment_size);

/// Chunks at their own timestamps relative to the first one.
std::vector<ScheduledFragment> video_replay(std::span<const VideoChunk> chunks,
                                            std::size_t fragment_size);

struct VideoPlayback {
  std::uint64_t bytes_received = 0;
  SimTime playable_duration;
};

/// Bytes over all delivered chunks; playable duration runs from the first
/// chunk to the end of the last chunk of the contiguous delivered prefix.
VideoPlayback video_playback(std::span<const VideoChunk> chunks, std::span<const bool> delivered,
                             SimTime chunk_interval);

}  // namespace vhil::capture
