#include "vhil/gateway.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fcntl.h>

namespace vhil::gateway {

namespace {

sockaddr_in to_sockaddr(const Endpoint& e) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(e.port);
  if (::inet_pton(AF_INET, e.host.c_str(), &addr.sin_addr) != 1) {
    throw GatewayUnavailable("not an IPv4 address: " + e.host);
  }
  return addr;
}

Endpoint from_sockaddr(const sockaddr_in& addr) {
  char buf[INET_ADDRSTRLEN] = {};
  ::inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof buf);
  return Endpoint{buf, ntohs(addr.sin_port)};
}

}  // namespace

std::string to_string(const Endpoint& e) {
  return e.host + ":" + std::to_string(e.port);
}

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw std::invalid_argument("endpoint must be host:port, got '" + text + "'");
  }
  const std::string port = text.substr(colon + 1);
  std::size_t used = 0;
  unsigned long value = 0;
  try {
    value = std::stoul(port, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != port.size() || value > 65535) {
    throw std::invalid_argument("bad port in endpoint '" + text + "'");
  }
  return Endpoint{text.substr(0, colon), static_cast<std::uint16_t>(value)};
}

const char* to_string(PortSide side) {
  return side == PortSide::Vehicle ? "vehicle" : "server";
}

UdpSocket::UdpSocket(const Endpoint& local) {
  const sockaddr_in addr = to_sockaddr(local);
  fd_ = ::socket(AF_INET, SOCK_DGRAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0);
  if (fd_ < 0) {
    throw GatewayUnavailable(std::string("socket: ") + std::strerror(errno));
  }
  int big = 4 << 20;
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVBUF, &big, sizeof big);
  ::setsockopt(fd_, SOL_SOCKET, SO_SNDBUF, &big, sizeof big);
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    const int err = errno;
    ::close(fd_);
    fd_ = -1;
    throw GatewayUnavailable("bind " + to_string(local) + ": " + std::strerror(err));
  }
}

UdpSocket::~UdpSocket() {
  if (fd_ >= 0) {
    ::close(fd_);
  }
}

UdpSocket::UdpSocket(UdpSocket&& other) noexcept : fd_(other.fd_) {
  other.fd_ = -1;
}

UdpSocket& UdpSocket::operator=(UdpSocket&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) {
      ::close(fd_);
    }
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

std::uint16_t UdpSocket::local_port() const {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (fd_ < 0 || ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    return 0;
  }
  return ntohs(addr.sin_port);
}

UdpSocket::SendResult UdpSocket::send_to(std::span<const std::uint8_t> bytes,
                                         const Endpoint& peer) const {
  const sockaddr_in addr = to_sockaddr(peer);
  const ssize_t n = ::sendto(fd_, bytes.data(), bytes.size(), MSG_DONTWAIT,
                             reinterpret_cast<const sockaddr*>(&addr), sizeof addr);
  if (n == static_cast<ssize_t>(bytes.size())) {
    return SendResult::Sent;
  }
  if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK || errno == ENOBUFS)) {
    return SendResult::WouldBlock;
  }
  return SendResult::Unreachable;
}

std::optional<std::vector<std::uint8_t>> UdpSocket::receive(int timeout_ms, Endpoint* from) const {
  pollfd pfd{fd_, POLLIN, 0};
  if (::poll(&pfd, 1, timeout_ms) <= 0 || (pfd.revents & POLLIN) == 0) {
    return std::nullopt;
  }
  std::vector<std::uint8_t> buf(65'536);
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  const ssize_t n =
      ::recvfrom(fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&addr), &len);
  if (n < 0) {
    return std::nullopt;
  }
  buf.resize(static_cast<std::size_t>(n));
  if (from != nullptr) {
    *from = from_sockaddr(addr);
  }
  return buf;
}

Gateway::Gateway(Kernel& kernel, net::Network& network, GatewayConfig cfg,
                 traffic::TrafficLedger* ledger)
    : kernel_(kernel), network_(network), cfg_(std::move(cfg)), ledger_(ledger) {
  if (cfg_.vehicle.side != PortSide::Vehicle || cfg_.server.side != PortSide::Server) {
    throw std::invalid_argument("gateway: port sides are mislabelled");
  }
  if (cfg_.vehicle.node == cfg_.server.node) {
    throw std::invalid_argument("gateway: each port needs its own simulated node");
  }
  if (cfg_.mtu == 0) {
    throw std::invalid_argument("gateway: mtu must be positive");
  }
  vehicle_.binding = cfg_.vehicle;
  server_.binding = cfg_.server;
  if (ledger_ != nullptr) {
    ledger_->add_stream(kVehicleStreamId, radio::FrameKind::External);
    ledger_->add_stream(kServerStreamId, radio::FrameKind::External);
  }
}

Gateway::~Gateway() {
  stop();
}

void Gateway::open() {
  vehicle_.socket = UdpSocket(vehicle_.binding.local);
  server_.socket = UdpSocket(server_.binding.local);
}

std::uint16_t Gateway::local_port(PortSide side) const {
  return port(side).socket.local_port();
}

void Gateway::start() {
  if (!vehicle_.socket.is_open() || !server_.socket.is_open()) {
    throw GatewayUnavailable("gateway: open() must succeed before start()");
  }
  if (running_.exchange(true)) {
    return;
  }
  vehicle_.reader = std::thread([this] { reader_loop(PortSide::Vehicle); });
  server_.reader = std::thread([this] { reader_loop(PortSide::Server); });
}

void Gateway::stop() {
  running_ = false;
  for (Port* p : {&vehicle_, &server_}) {
    if (p->reader.joinable()) {
      p->reader.join();
    }
  }
}

void Gateway::reader_loop(PortSide side) {
  const UdpSocket& sock = port(side).socket;
  while (running_) {
    Endpoint from;
    auto datagram = sock.receive(20, &from);
    if (!datagram) {
      continue;
    }
    const NodeId node = port(side).binding.node;
    kernel_.inject(
        [this, side, from, bytes = std::move(*datagram)] { ingest(bytes, side, from); }, node);
  }
}

void Gateway::ingest(std::span<const std::uint8_t> datagram, PortSide side,
                     const std::optional<Endpoint>& from) {
  Envelope env;
  try {
    env = decode(datagram);
  } catch (const DecodeError&) {
    ++counters_.decode_errors;
    return;
  }
  Port& in = port(side);
  if (from && in.binding.peer.port == 0) {
    in.binding.peer = *from;
  }
  if (env.kind == EnvelopeKind::FromSim) {
    ++counters_.wrong_kind;
    return;
  }
  if (env.kind == EnvelopeKind::Control) {
    ++counters_.control_received;
    return;
  }
  if (env.payload.empty()) {
    ++counters_.decode_errors;
    return;
  }

  const std::uint64_t id = next_datagram_id_++;
  ++counters_.ingested;
  in_flight_.emplace(id, InFlight{side, false});

  const PortSide out = side == PortSide::Vehicle ? PortSide::Server : PortSide::Vehicle;
  const std::uint32_t stream = side == PortSide::Vehicle ? kVehicleStreamId : kServerStreamId;
  auto pieces = traffic::fragment(env.payload, cfg_.mtu);
  const auto count = static_cast<std::uint32_t>(pieces.size());
  counters_.fragments += count;
  for (std::uint32_t i = 0; i < count; ++i) {
    net::Frame f;
    f.src = in.binding.node;
    f.dst = port(out).binding.node;
    f.payload_len = static_cast<std::uint32_t>(pieces[i].size());
    f.gen_time = kernel_.now();
    f.kind = radio::FrameKind::External;
    f.stream_id = stream;
    if (ledger_ != nullptr) {
      f.seq_in_stream = ledger_->on_generated(stream, f.gen_time, f.payload_len);
    }
    f.message_id = id;
    f.frag_index = i;
    f.frag_count = count;
    f.data = std::make_shared<const net::Bytes>(std::move(pieces[i]));
    network_.enqueue(std::move(f));
  }
}

bool Gateway::handle_delivery(NodeId receiver, const net::Frame& frame) {
  if (frame.kind != radio::FrameKind::External) {
    return false;
  }
  if (ledger_ != nullptr) {
    ledger_->on_delivered(frame.stream_id, frame.seq_in_stream, kernel_.now());
  }
  auto it = in_flight_.find(frame.message_id);
  if (it == in_flight_.end() || it->second.resolved) {
    return true;
  }
  const PortSide out = receiver == vehicle_.binding.node ? PortSide::Vehicle : PortSide::Server;
  std::optional<net::Bytes> whole;
  if (frame.frag_count == 1) {
    whole = *frame.data;
  } else {
    whole = reassembler_.add(frame.message_id, frame.frag_index, frame.frag_count, *frame.data);
  }
  if (!whole) {
    return true;
  }
  in_flight_.erase(it);
  egress(out, *whole);
  return true;
}

bool Gateway::handle_loss(const net::Frame& frame, net::Fate fate) {
  if (frame.kind != radio::FrameKind::External) {
    return false;
  }
  if (ledger_ != nullptr) {
    ledger_->on_lost(frame.stream_id, frame.seq_in_stream, fate);
  }
  resolve_lost(frame.message_id, fate);
  return true;
}

void Gateway::resolve_lost(std::uint64_t datagram_id, net::Fate fate) {
  auto it = in_flight_.find(datagram_id);
  if (it == in_flight_.end() || it->second.resolved) {
    return;
  }
  // Keep the entry so later fragments of the same datagram are ignored.
  it->second.resolved = true;
  if (fate == net::Fate::Collided) {
    ++counters_.collided;
  } else {
    ++counters_.dropped;
  }
}

void Gateway::egress(PortSide side, const std::vector<std::uint8_t>& payload) {
  Port& p = port(side);
  if (p.socket.is_open()) {
    if (p.binding.peer.port == 0) {
      ++counters_.peer_unreachable;
      ++counters_.dropped;
      return;
    }
    const auto bytes = encode(Envelope{EnvelopeKind::FromSim, wall_clock_us(), payload});
    switch (p.socket.send_to(bytes, p.binding.peer)) {
      case UdpSocket::SendResult::Sent:
        break;
      case UdpSocket::SendResult::WouldBlock:
        ++counters_.send_buffer_full;
        ++counters_.dropped;
        return;
      case UdpSocket::SendResult::Unreachable:
        ++counters_.peer_unreachable;
        ++counters_.dropped;
        return;
    }
  }
  ++counters_.delivered;
  if (on_egress_) {
    on_egress_(side, payload);
  }
}

void Gateway::send_control(PortSide side, std::span<const std::uint8_t> payload) {
  Port& p = port(side);
  if (!p.socket.is_open() || p.binding.peer.port == 0) {
    return;
  }
  const auto bytes = encode(Envelope{EnvelopeKind::Control, wall_clock_us(),
                                     std::vector<std::uint8_t>(payload.begin(), payload.end())});
  if (p.socket.send_to(bytes, p.binding.peer) == UdpSocket::SendResult::Sent) {
    ++counters_.control_sent;
  }
}

}  // namespace vhil::gateway
