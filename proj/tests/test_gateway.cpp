#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "vhil/gateway.hpp"

using namespace vhil;
using namespace vhil::gateway;

namespace {

std::vector<std::uint8_t> datagram(EnvelopeKind kind, std::vector<std::uint8_t> payload) {
  return encode({kind, wall_clock_us(), std::move(payload)});
}

struct Bench {
  Kernel kernel;
  net::Network network;
  traffic::TrafficLedger ledger;
  std::unique_ptr<Gateway> gw;
  std::vector<std::pair<PortSide, std::vector<std::uint8_t>>> egress;
  std::vector<NodeId> queued_at;

  explicit Bench(bool ideal, GatewayConfig cfg = {}, KernelMode mode = KernelMode::Virtual)
      : kernel(mode), network(kernel, net::NetworkConfig{{}, {}, ideal}, 1) {
    network.add_node({100, 50});
    network.add_node({150, 50});
    gw = std::make_unique<Gateway>(kernel, network, cfg, &ledger);
    network.on_delivery([this](NodeId rx, const net::Frame& f) { gw->handle_delivery(rx, f); });
    network.on_loss([this](const net::Frame& f, net::Fate fate) { gw->handle_loss(f, fate); });
    gw->on_egress([this](PortSide s, const std::vector<std::uint8_t>& p) { egress.push_back({s, p}); });
  }
};

}  // namespace

TEST(Endpoint, Parse) {
  const auto e = parse_endpoint("10.0.0.2:6001");
  EXPECT_EQ(e.host, "10.0.0.2");
  EXPECT_EQ(e.port, 6001);
  EXPECT_EQ(to_string(e), "10.0.0.2:6001");
  EXPECT_THROW(parse_endpoint("nohost"), std::invalid_argument);
  EXPECT_THROW(parse_endpoint("1.2.3.4:99999"), std::invalid_argument);
}

TEST(Gateway, ToSimQueuesAtVehicleNode) {
  Bench b(false);
  b.gw->ingest(datagram(EnvelopeKind::ToSim, {1, 2, 3}), PortSide::Vehicle);
  EXPECT_EQ(b.network.queue_length(0), 1u);
  EXPECT_EQ(b.gw->counters().ingested, 1u);
  b.kernel.run_until(SimTime::millis(10));
  ASSERT_EQ(b.egress.size(), 1u);
  EXPECT_EQ(b.egress[0].first, PortSide::Server);
  EXPECT_EQ(b.egress[0].second, (std::vector<std::uint8_t>{1, 2, 3}));
}

TEST(Gateway, FromSimAtIngestIsWrongKind) {
  Bench b(false);
  b.gw->ingest(datagram(EnvelopeKind::FromSim, {1}), PortSide::Vehicle);
  EXPECT_EQ(b.gw->counters().wrong_kind, 1u);
  EXPECT_EQ(b.gw->counters().ingested, 0u);
  EXPECT_EQ(b.network.queue_length(0), 0u);
}

TEST(Gateway, UndecodableCounted) {
  Bench b(false);
  b.gw->ingest(std::vector<std::uint8_t>{1, 2, 3}, PortSide::Server);
  EXPECT_EQ(b.gw->counters().decode_errors, 1u);
}

TEST(Gateway, PreservesFifoOrder) {
  Bench b(false);
  for (std::uint8_t i = 0; i < 3; ++i) {
    b.gw->ingest(datagram(EnvelopeKind::ToSim, {i, i, i}), PortSide::Vehicle);
  }
  b.kernel.run_until(SimTime::millis(50));
  ASSERT_EQ(b.egress.size(), 3u);
  for (std::uint8_t i = 0; i < 3; ++i) EXPECT_EQ(b.egress[i].second[0], i);
}

TEST(Gateway, ServerToVehicleDirection) {
  Bench b(false);
  b.gw->ingest(datagram(EnvelopeKind::ToSim, {9}), PortSide::Server);
  b.kernel.run_until(SimTime::millis(10));
  ASSERT_EQ(b.egress.size(), 1u);
  EXPECT_EQ(b.egress[0].first, PortSide::Vehicle);
}

TEST(Gateway, LargePayloadsReassembleExactly) {
  Bench b(true);
  std::mt19937_64 rng(4);
  std::vector<std::vector<std::uint8_t>> sent;
  for (int i = 0; i < 200; ++i) {
    std::vector<std::uint8_t> p(1 + rng() % kMaxEnvelopePayload);
    for (auto& x : p) x = static_cast<std::uint8_t>(rng());
    b.gw->ingest(datagram(EnvelopeKind::ToSim, p), PortSide::Vehicle);
    sent.push_back(std::move(p));
  }
  b.kernel.run_until(SimTime::millis(1));
  ASSERT_EQ(b.egress.size(), sent.size());
  for (std::size_t i = 0; i < sent.size(); ++i) EXPECT_EQ(b.egress[i].second, sent[i]);
  const auto& c = b.gw->counters();
  EXPECT_EQ(c.delivered, 200u);
  EXPECT_EQ(c.pending(), 0u);
}

TEST(Gateway, CollidedFrameHasNoEgress) {
  // Destination out of range: every attempt fails.
  GatewayConfig cfg;
  Bench b(false, cfg);
  b.network.set_position(1, {1000, 50});
  b.gw->ingest(datagram(EnvelopeKind::ToSim, {1, 2}), PortSide::Vehicle);
  b.kernel.run_until(SimTime::seconds(1));
  EXPECT_TRUE(b.egress.empty());
  EXPECT_EQ(b.gw->counters().collided, 1u);
  EXPECT_EQ(b.gw->counters().pending(), 0u);
}

TEST(Gateway, CountersConserveUnderLoad) {
  Bench b(false);
  std::mt19937_64 rng(6);
  for (int i = 0; i < 500; ++i) {
    b.kernel.schedule_at(SimTime::micros(i * 100), 0, [&b, &rng] {
      std::vector<std::uint8_t> p(1 + rng() % 6000, 7);
      b.gw->ingest(datagram(EnvelopeKind::ToSim, p),
                   rng() % 2 ? PortSide::Vehicle : PortSide::Server);
    });
  }
  b.kernel.run_until(SimTime::millis(60));
  const auto& c = b.gw->counters();
  EXPECT_EQ(c.ingested, 500u);
  EXPECT_EQ(c.ingested, c.delivered + c.collided + c.dropped + c.pending());
  b.kernel.run_until(SimTime::seconds(5));
  EXPECT_EQ(c.pending(), 0u);
  EXPECT_GT(c.dropped, 0u);
  EXPECT_EQ(c.delivered, b.egress.size());
}

TEST(Gateway, BindConflictIsUnavailable) {
  UdpSocket holder(Endpoint{"127.0.0.1", 0});
  GatewayConfig cfg;
  cfg.vehicle.local = {"127.0.0.1", holder.local_port()};
  cfg.server.local = {"127.0.0.1", 0};
  Bench b(false, cfg);
  EXPECT_THROW(b.gw->open(), GatewayUnavailable);
}

TEST(Gateway, LoopbackRoundTripIsFast) {
  GatewayConfig cfg;
  cfg.vehicle.local = {"127.0.0.1", 0};
  cfg.server.local = {"127.0.0.1", 0};
  UdpSocket app(Endpoint{"127.0.0.1", 0});
  UdpSocket server(Endpoint{"127.0.0.1", 0});
  cfg.server.peer = {"127.0.0.1", server.local_port()};
  Bench b(true, cfg, KernelMode::RealTime);
  b.gw->open();
  b.gw->start();
  const Endpoint vehicle_port{"127.0.0.1", b.gw->local_port(PortSide::Vehicle)};
  std::vector<std::chrono::microseconds> rtts;
  std::thread client([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    for (std::uint8_t i = 0; i < 20; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      app.send_to(datagram(EnvelopeKind::ToSim, {i, 42}), vehicle_port);
      auto got = server.receive(500);
      if (!got) continue;
      rtts.push_back(std::chrono::duration_cast<std::chrono::microseconds>(
          std::chrono::steady_clock::now() - t0));
      const auto env = decode(*got);
      EXPECT_EQ(env.kind, EnvelopeKind::FromSim);
      EXPECT_EQ(env.payload, (std::vector<std::uint8_t>{i, 42}));
    }
  });
  b.kernel.run_realtime(SimTime::seconds(1));
  client.join();
  b.gw->stop();
  ASSERT_EQ(rtts.size(), 20u);
  for (auto r : rtts) EXPECT_LT(r, std::chrono::microseconds(2 * 5000));
  EXPECT_EQ(b.gw->counters().delivered, 20u);
}

TEST(Gateway, LearnsPeerFromFirstDatagram) {
  GatewayConfig cfg;
  cfg.vehicle.local = {"127.0.0.1", 0};
  cfg.server.local = {"127.0.0.1", 0};
  UdpSocket vehicle_app(Endpoint{"127.0.0.1", 0});
  Bench b(true, cfg);
  b.gw->open();
  b.gw->ingest(datagram(EnvelopeKind::ToSim, {1}), PortSide::Vehicle,
               Endpoint{"127.0.0.1", vehicle_app.local_port()});
  const std::string text = "rate_multiplier=0.5";
  b.gw->send_control(PortSide::Vehicle,
                     std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  auto got = vehicle_app.receive(500);
  ASSERT_TRUE(got);
  const auto env = decode(*got);
  EXPECT_EQ(env.kind, EnvelopeKind::Control);
  EXPECT_EQ(std::string(env.payload.begin(), env.payload.end()), text);
  EXPECT_EQ(b.gw->counters().control_sent, 1u);
}
