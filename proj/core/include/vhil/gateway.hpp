#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "vhil/envelope.hpp"
#include "vhil/network.hpp"
#include "vhil/traffic.hpp"

namespace vhil::gateway {

class GatewayUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

std::string to_string(const Endpoint& e);
/// Parses "host:port".
Endpoint parse_endpoint(const std::string& text);

/// Non-blocking IPv4 UDP socket.
class UdpSocket {
 public:
  UdpSocket() = default;
  explicit UdpSocket(const Endpoint& local);
  ~UdpSocket();
  UdpSocket(UdpSocket&& other) noexcept;
  UdpSocket& operator=(UdpSocket&& other) noexcept;
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;

  bool is_open() const { return fd_ >= 0; }
  std::uint16_t local_port() const;

  enum class SendResult { Sent, WouldBlock, Unreachable };
  SendResult send_to(std::span<const std::uint8_t> bytes, const Endpoint& peer) const;

  /// Waits up to `timeout_ms` for one datagram.
  std::optional<std::vector<std::uint8_t>> receive(int timeout_ms,
                                                   Endpoint* from = nullptr) const;

 private:
  int fd_ = -1;
};

enum class PortSide { Vehicle, Server };

const char* to_string(PortSide side);

struct PortBinding {
  PortSide side = PortSide::Vehicle;
  Endpoint local;
  // A zero peer port is learned from the first datagram received.
  Endpoint peer;
  NodeId node = 0;
  std::string subnet = "192.168.5.0/24";
};

struct GatewayConfig {
  PortBinding vehicle{PortSide::Vehicle, {"127.0.0.1", 5000}, {"127.0.0.1", 0}, 0,
                      "192.168.5.0/24"};
  PortBinding server{PortSide::Server, {"127.0.0.1", 5001}, {"127.0.0.1", 0}, 1,
                     "192.168.3.0/24"};
  std::size_t mtu = radio::kMacMtu;
};

/// All counts are in datagrams unless noted.
struct GatewayCounters {
  std::uint64_t ingested = 0;
  std::uint64_t delivered = 0;
  std::uint64_t collided = 0;
  std::uint64_t dropped = 0;
  std::uint64_t decode_errors = 0;
  std::uint64_t wrong_kind = 0;
  std::uint64_t control_received = 0;
  std::uint64_t control_sent = 0;
  std::uint64_t peer_unreachable = 0;
  std::uint64_t send_buffer_full = 0;
  std::uint64_t fragments = 0;

  std::uint64_t pending() const { return ingested - delivered - collided - dropped; }
};

inline constexpr std::uint32_t kVehicleStreamId = 1000;
inline constexpr std::uint32_t kServerStreamId = 1001;

/// Bridges external datagram endpoints to two simulated nodes. Datagrams
/// arriving at the vehicle port enter the simulation at the vehicle node
/// addressed to the server node, and vice versa; on delivery the original
/// payload leaves through the opposite port.
class Gateway {
 public:
  Gateway(Kernel& kernel, net::Network& network, GatewayConfig cfg,
          traffic::TrafficLedger* ledger = nullptr);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds both local endpoints. Throws GatewayUnavailable.
  void open();
  /// Starts one reader thread per port; readers only post to the kernel's
  /// injection queue.
  void start();
  void stop();

  /// Kernel thread. Decodes one datagram and queues its payload at the
  /// port's node, stamped with the current virtual time.
  /// `from` is the sender, used to learn an unset peer.
  void ingest(std::span<const std::uint8_t> datagram, PortSide side,
              const std::optional<Endpoint>& from = std::nullopt);

  /// Kernel thread. Returns true if the frame belonged to the gateway.
  bool handle_delivery(NodeId receiver, const net::Frame& frame);
  bool handle_loss(const net::Frame& frame, net::Fate fate);

  void send_control(PortSide side, std::span<const std::uint8_t> payload);

  /// Observes every egress payload (after reassembly), for tests and logs.
  void on_egress(std::function<void(PortSide, const std::vector<std::uint8_t>&)> fn) {
    on_egress_ = std::move(fn);
  }

  const GatewayCounters& counters() const { return counters_; }
  const GatewayConfig& config() const { return cfg_; }
  std::uint16_t local_port(PortSide side) const;

 private:
  struct Port {
    PortBinding binding;
    UdpSocket socket;
    std::thread reader;
  };
  struct InFlight {
    PortSide from;
    bool resolved = false;
  };

  Port& port(PortSide side) { return side == PortSide::Vehicle ? vehicle_ : server_; }
  const Port& port(PortSide side) const {
    return side == PortSide::Vehicle ? vehicle_ : server_;
  }
  void reader_loop(PortSide side);
  void egress(PortSide side, const std::vector<std::uint8_t>& payload);
  void resolve_lost(std::uint64_t datagram_id, net::Fate fate);

  Kernel& kernel_;
  net::Network& network_;
  GatewayConfig cfg_;
  traffic::TrafficLedger* ledger_;
  Port vehicle_;
  Port server_;
  std::atomic<bool> running_{false};
  GatewayCounters counters_;
  std::uint64_t next_datagram_id_ = 1;
  std::map<std::uint64_t, InFlight> in_flight_;
  traffic::Reassembler reassembler_;
  std::function<void(PortSide, const std::vector<std::uint8_t>&)> on_egress_;
};

}  // namespace vhil::gateway
