#include "vhil/capture.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

namespace vhil::capture {

namespace {

constexpr std::array<std::uint8_t, 4> kLidarMagic{'L', 'S', 'C', 'N'};
constexpr std::array<std::uint8_t, 4> kVideoMagic{'V', 'C', 'H', 'K'};

void put_be(Bytes& out, std::uint64_t v, std::size_t width) {
  for (std::size_t i = width; i-- > 0;) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  bool done() const { return pos_ == b_.size(); }

  std::uint64_t be(std::size_t width, const char* what) {
    need(width, what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) {
      v = (v << 8) | b_[pos_++];
    }
    return v;
  }

  Bytes take(std::size_t n, const char* what) {
    need(n, what);
    Bytes out(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
              b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }

  void magic(const std::array<std::uint8_t, 4>& m, const char* what) {
    need(4, what);
    if (!std::equal(m.begin(), m.end(), b_.begin())) {
      throw MalformedCapture(std::string(what) + ": bad magic");
    }
    pos_ += 4;
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) {
      throw MalformedCapture(std::string(what) + ": truncated");
    }
  }

  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

Bytes write_lidar_capture(std::span<const Bytes> scans) {
  Bytes out(kLidarMagic.begin(), kLidarMagic.end());
  for (const auto& s : scans) {
    if (s.empty()) {
      throw std::invalid_argument("LiDAR scans must be non-empty");
    }
    put_be(out, s.size(), 4);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

std::vector<Bytes> parse_lidar_capture(std::span<const std::uint8_t> file) {
  Reader r(file);
  r.magic(kLidarMagic, "LiDAR capture");
  std::vector<Bytes> scans;
  while (!r.done()) {
    const auto len = static_cast<std::size_t>(r.be(4, "LiDAR capture"));
    if (len == 0) {
      throw MalformedCapture("LiDAR capture: empty scan");
    }
    scans.push_back(r.take(len, "LiDAR capture"));
  }
  return scans;
}

Bytes write_video_capture(std::span<const VideoChunk> chunks) {
  Bytes out(kVideoMagic.begin(), kVideoMagic.end());
  for (const auto& c : chunks) {
    if (c.data.empty() || c.timestamp.us < 0) {
      throw std::invalid_argument("video chunks must be non-empty with non-negative timestamps");
    }
    put_be(out, static_cast<std::uint64_t>(c.timestamp.us), 8);
    put_be(out, c.data.size(), 4);
    out.insert(out.end(), c.data.begin(), c.data.end());
  }
  return out;
}

std::vector<VideoChunk> parse_video_capture(std::span<const std::uint8_t> file) {
  Reader r(file);
  r.magic(kVideoMagic, "video capture");
  std::vector<VideoChunk> chunks;
  while (!r.done()) {
    const auto ts = r.be(8, "video capture");
    if (ts > static_cast<std::uint64_t>(INT64_MAX)) {
      throw MalformedCapture("video capture: timestamp out of range");
    }
    const auto len = static_cast<std::size_t>(r.be(4, "video capture"));
    if (len == 0) {
      throw MalformedCapture("video capture: empty chunk");
    }
    VideoChunk c{SimTime{static_cast<std::int64_t>(ts)}, r.take(len, "video capture")};
    if (!chunks.empty() && c.timestamp <= chunks.back().timestamp) {
      throw MalformedCapture("video capture: timestamps not increasing");
    }
    chunks.push_back(std::move(c));
  }
  return chunks;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
}

namespace {

Bytes random_bytes(std::size_t n, std::mt19937_64& rng) {
  Bytes b(n);
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& x : b) {
    x = static_cast<std::uint8_t>(byte(rng));
  }
  return b;
}

}  // namespace

std::vector<Bytes> synthetic_lidar_scans(std::size_t count, std::size_t scan_bytes,
                                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Bytes> scans;
  scans.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    scans.push_back(random_bytes(scan_bytes, rng));
  }
  return scans;
}

std::vector<VideoChunk> synthetic_video(std::size_t count, SimTime chunk_interval,
                                        std::size_t chunk_bytes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<VideoChunk> chunks;
  chunks.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    chunks.push_back(
        VideoChunk{SimTime{static_cast<std::int64_t>(i) * chunk_interval.us}, random_bytes(chunk_bytes, rng)});
  }
  return chunks;
}

namespace {

void append_fragments(std::vector<ScheduledFragment>& out, SimTime at, std::uint32_t index,
                      std::size_t size, std::size_t fragment_size) {
  if (fragment_size == 0) {
    throw std::invalid_argument("fragment_size must be positive");
  }
  const auto count = static_cast<std::uint32_t>((size + fragment_size - 1) / fragment_size);
  for (std::uint32_t f = 0; f < count; ++f) {
    const std::size_t offset = std::size_t{f} * fragment_size;
    out.push_back({at, index, f, count, offset, std::min(fragment_size, size - offset)});
  }
}

}  // namespace

std::vector<ScheduledFragment> lidar_replay(std::span<const Bytes> scans, double rate_hz,
                                            std::size_t fragment_size) {
  if (!(rate_hz > 0.0)) {
    throw std::invalid_argument("lidar_replay: rate_hz must be positive");
  }
  std::vector<ScheduledFragment> out;
  for (std::size_t k = 0; k < scans.size(); ++k) {
    const SimTime at = SimTime::from_seconds(static_cast<double>(k) / rate_hz);
    append_fragments(out, at, static_cast<std::uint32_t>(k), scans[k].size(), fragment_size);
  }
  return out;
}

std::vector<ScheduledFragment> video_replay(std::span<const VideoChunk> chunks,
                                            std::size_t fragment_size) {
  std::vector<ScheduledFragment> out;
  if (chunks.empty()) {
    return out;
  }
  const SimTime origin = chunks.front().timestamp;
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    append_fragments(out, chunks[k].timestamp - origin, static_cast<std::uint32_t>(k),
                     chunks[k].data.size(), fragment_size);
  }
  return out;
}

VideoPlayback video_playback(std::span<const VideoChunk> chunks, std::span<const bool> delivered,
                             SimTime chunk_interval) {
  if (chunks.size() != delivered.size()) {
    throw std::invalid_argument("video_playback: one delivery flag per chunk is required");
  }
  VideoPlayback pb;
  std::size_t prefix = 0;
  bool contiguous = true;
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    if (delivered[k]) {
      pb.bytes_received += chunks[k].data.size();
      if (contiguous) {
        prefix = k + 1;
      }
    } else {
      contiguous = false;
    }
  }
  if (prefix > 0) {
    pb.playable_duration = chunks[prefix - 1].timestamp - chunks.front().timestamp + chunk_interval;
  }
  return pb;
}

}  // namespace vhil::capture
