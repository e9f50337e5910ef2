#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "streamsim/broker_server.hpp"
#include "streamsim/error.hpp"
#include "streamsim/harness.hpp"
#include "streamsim/net.hpp"
#include "streamsim/relay.hpp"

namespace streamsim {
namespace {

using namespace std::chrono_literals;

std::span<const std::byte> view(const Bytes& b) { return {b.data(), b.size()}; }

wire::Frame next(Socket& s, std::vector<std::byte>& storage) {
  auto f = read_frame(s);
  EXPECT_TRUE(f.has_value());
  storage = std::move(*f);
  return wire::decode(storage);
}

TEST(Wire, RoundTrip) {
  auto p = wire::encode_publish(9, "work", "work.1");
  Bytes body{std::byte{1}, std::byte{2}};
  Bytes frame = p;
  frame.insert(frame.end(), body.begin(), body.end());
  auto f = wire::decode(frame);
  EXPECT_EQ(f.op, wire::Op::publish);
  EXPECT_EQ(f.ref, 9u);
  EXPECT_EQ(f.exchange, "work");
  EXPECT_EQ(f.name, "work.1");
  EXPECT_EQ(f.body.size(), 2u);

  auto c = wire::decode(wire::encode_consume(3, "q", 128));
  EXPECT_EQ(c.op, wire::Op::consume);
  EXPECT_EQ(c.name, "q");
  EXPECT_EQ(c.prefetch, 128u);

  auto a = wire::decode(wire::encode_ack(5, 77));
  EXPECT_EQ(a.consumer, 5u);
  EXPECT_EQ(a.ref, 77u);
}

TEST(Wire, RejectsMalformed) {
  auto bad = wire::encode_confirm(1);
  bad.push_back(std::byte{0});
  EXPECT_THROW(wire::decode(bad), Error);
  Bytes empty;
  EXPECT_THROW(wire::decode(empty), Error);
  Bytes op{std::byte{99}};
  EXPECT_THROW(wire::decode(op), Error);
}

TEST(BrokerServer, PublishConsumeAck) {
  Broker broker(64 * kMiB);
  broker.declare_queue({"q", 16 * kMiB});
  broker.declare_exchange("x", ExchangeKind::direct);
  broker.bind("x", "q", "q");
  BrokerServer server(broker);
  server.start();

  auto cons = Socket::connect_loopback(server.port());
  write_frame(cons, {view(wire::encode_consume(1, "q", 8))});
  std::vector<std::byte> buf;
  auto ok = next(cons, buf);
  ASSERT_EQ(ok.op, wire::Op::consume_ok);

  auto prod = Socket::connect_loopback(server.port());
  auto payload = generate_payload(profile_lookup("dstream"), 0, 0, 1);
  write_frame(prod, {view(wire::encode_publish(1, "x", "q")), view(payload)});
  auto conf = next(prod, buf);
  EXPECT_EQ(conf.op, wire::Op::confirm);
  EXPECT_EQ(conf.ref, 1u);

  auto d = next(cons, buf);
  ASSERT_EQ(d.op, wire::Op::deliver);
  EXPECT_EQ(Bytes(d.body.begin(), d.body.end()), payload);
  write_frame(cons, {view(wire::encode_ack(d.consumer, d.ref))});

  // Unknown exchange comes back as an error frame, not a dropped connection.
  write_frame(prod, {view(wire::encode_publish(2, "nope", "q")), view(payload)});
  auto err = next(prod, buf);
  EXPECT_EQ(err.op, wire::Op::error);
  EXPECT_EQ(err.ref, 2u);

  for (int i = 0; i < 100 && broker.stats().settled == 0; ++i) std::this_thread::sleep_for(5ms);
  EXPECT_EQ(broker.stats().settled, 1u);
  server.stop();
}

TEST(HopRelay, AddsLatency) {
  auto listener = Listener::bind_loopback();
  HopSpec hop{"h", Nanos{20'000'000}, 1e9, Nanos{0}, std::nullopt, Balance::single_flow};
  HopRelay relay(hop, listener.port());
  relay.start();
  auto client = Socket::connect_loopback(relay.port());
  auto server = listener.accept();
  Bytes msg(100, std::byte{7});
  auto t0 = std::chrono::steady_clock::now();
  write_frame(client, {view(msg)});
  auto got = read_frame(server);
  auto dt = std::chrono::steady_clock::now() - t0;
  ASSERT_TRUE(got);
  EXPECT_EQ(*got, msg);
  EXPECT_GE(dt, 20ms);
  // The counter moves just after the write lands.
  for (int i = 0; i < 200 && relay.frames_forwarded() == 0; ++i) std::this_thread::sleep_for(1ms);
  EXPECT_EQ(relay.frames_forwarded(), 1u);
  relay.stop();
}

TEST(HopRelay, RefusesOverLimit) {
  auto listener = Listener::bind_loopback();
  HopSpec hop{"h", Nanos{0}, 1e9, Nanos{0}, 1u, Balance::single_flow};
  HopRelay relay(hop, listener.port());
  relay.start();
  auto a = Socket::connect_loopback(relay.port());
  auto sa = listener.accept();
  auto b = Socket::connect_loopback(relay.port());
  // The second client sees EOF instead of a bridge.
  std::vector<std::byte> one(1);
  EXPECT_FALSE(b.read_exact(one));
  EXPECT_EQ(relay.refused(), 1u);
  relay.stop();
}

TEST(Loopback, FeedbackRunSmall) {
  ExperimentConfig c;
  c.transport = Transport::loopback;
  c.pattern = Pattern::work_sharing_feedback;
  c.producers = c.consumers = 2;
  c.message_count = 60;
  c.repetitions = 1;
  c.timeout = Nanos{60'000'000'000};
  auto r = run_experiment(c);
  EXPECT_EQ(r.events.size(), 60u);
  EXPECT_EQ(r.misrouted_replies, 0u);
  auto floor = 2 * latency_sum(build_path(Architecture::dts).hops);
  for (const auto& e : r.events) {
    ASSERT_TRUE(e.reply_ts);
    EXPECT_EQ(*e.reply_receiver, e.id.producer);
    EXPECT_GT(*e.reply_ts - e.publish_ts, floor);
  }
}

TEST(Loopback, BroadcastRunSmall) {
  ExperimentConfig c;
  c.transport = Transport::loopback;
  c.pattern = Pattern::broadcast_gather;
  c.architecture = Architecture::prs;
  c.consumers = 3;
  c.message_count = 20;
  c.repetitions = 1;
  auto r = run_experiment(c);
  EXPECT_EQ(r.events.size(), 60u);
  EXPECT_EQ(r.gather_complete.size(), 20u);
}

TEST(Loopback, StunnelInfeasible) {
  ExperimentConfig c;
  c.transport = Transport::loopback;
  c.architecture = Architecture::prs;
  c.proxy_kind = ProxyKind::stunnel_like;
  c.consumers = c.producers = 32;
  c.message_count = 10;
  EXPECT_THROW(run_experiment(c), InfeasibleConfiguration);
}

}  // namespace
}  // namespace streamsim
