#include <gtest/gtest.h>

#include <map>
#include <set>
#include <vector>

#include "streamsim/broker.hpp"
#include "streamsim/error.hpp"
#include "test_support.hpp"

namespace streamsim {
namespace {

constexpr std::uint64_t kBudget = 1000 * 1000;

Message msg(std::uint64_t seq, std::uint64_t size = 100) {
  return make_sized_message({0, seq}, MessageKind::request, size, Nanos{0});
}

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::io_error;
}

// One direct exchange "x" with queue "q" bound under key "k".
Broker& simple(Broker& b, std::uint64_t cap = 400'000) {
  b.declare_queue({"q", cap});
  b.declare_exchange("x", ExchangeKind::direct);
  b.bind("x", "q", "k");
  return b;
}

TEST(Broker, BudgetSplit) {
  Broker b(kBudget);
  EXPECT_EQ(b.payload_budget(), 800'000u);
  EXPECT_EQ(b.control_budget(), 200'000u);
  b.declare_queue({"a", 400'000});
  b.declare_queue({"b", 400'000});
  EXPECT_EQ(code_of([&] { b.declare_queue({"c", 1}); }), Errc::budget_exceeded);
  b.declare_queue({"r", 200'000, OverflowPolicy::reject_publish, QueueKind::control});
}

TEST(Broker, OverEightyPercentRejected) {
  Broker b(kBudget);
  EXPECT_EQ(code_of([&] { b.declare_queue({"a", 810'000}); }), Errc::budget_exceeded);
}

TEST(Broker, BudgetSplitExactForOddBudgets) {
  testing::Gen g(5);
  for (int i = 0; i < 200; ++i) {
    auto budget = g.uniform(5, ~0ull >> 1);
    Broker b(budget);
    // floor(4/5 budget) via long division, independent of the broker code.
    auto q = budget / 5, r = budget % 5;
    EXPECT_EQ(b.payload_budget(), q * 4 + (r * 4) / 5);
    EXPECT_EQ(b.control_budget(), q + r / 5);
  }
}

TEST(Broker, RedeclareIdempotentOrConflict) {
  Broker b(kBudget);
  b.declare_queue({"a", 1000});
  b.declare_queue({"a", 1000});
  EXPECT_EQ(b.all_queue_stats().size(), 1u);
  EXPECT_EQ(code_of([&] { b.declare_queue({"a", 2000}); }), Errc::name_conflict);
}

TEST(Broker, FanoutReachesEveryQueue) {
  Broker b(kBudget);
  b.declare_exchange("f", ExchangeKind::fanout);
  for (auto n : {"a", "b", "c"}) {
    b.declare_queue({n, 1000});
    b.bind("f", n);
  }
  EXPECT_EQ(b.publish("f", "", msg(0)), PublishOutcome::confirm);
  for (auto n : {"a", "b", "c"}) EXPECT_EQ(b.queue_stats(n).ready, 1u);
}

TEST(Broker, UnroutableAndUnknowns) {
  Broker b(kBudget);
  simple(b);
  EXPECT_EQ(code_of([&] { b.publish("x", "zzz", msg(0)); }), Errc::unroutable);
  EXPECT_EQ(code_of([&] { b.publish("nope", "k", msg(0)); }), Errc::unknown_exchange);
  EXPECT_EQ(code_of([&] { b.register_consumer("nope", 1); }), Errc::unknown_queue);
  EXPECT_EQ(code_of([&] { b.register_consumer("q", 0); }), Errc::invalid_argument);
}

TEST(Broker, RejectThenRetryAfterSettle) {
  Broker b(kBudget);
  simple(b, 300);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(b.publish("x", "k", msg(i)), PublishOutcome::confirm);
  auto before = b.queue_stats("q");
  EXPECT_EQ(b.publish("x", "k", msg(3)), PublishOutcome::reject);
  auto after = b.queue_stats("q");
  EXPECT_EQ(before.ready, after.ready);
  EXPECT_EQ(before.bytes, after.bytes);
  auto c = b.register_consumer("q", 10);
  auto d = b.deliver_next();
  ASSERT_EQ(d.size(), 3u);
  b.ack_batch(c, d[0].tag);
  EXPECT_EQ(b.publish("x", "k", msg(3)), PublishOutcome::confirm);
  EXPECT_EQ(b.stats().rejected_publishes, 1u);
}

TEST(Broker, FanoutRejectIsAtomic) {
  Broker b(kBudget);
  b.declare_exchange("f", ExchangeKind::fanout);
  b.declare_queue({"big", 1000});
  b.declare_queue({"small", 100});
  b.bind("f", "big");
  b.bind("f", "small");
  EXPECT_EQ(b.publish("f", "", msg(0)), PublishOutcome::confirm);
  EXPECT_EQ(b.publish("f", "", msg(1)), PublishOutcome::reject);
  EXPECT_EQ(b.queue_stats("big").ready, 1u);
  EXPECT_EQ(b.queue_stats("big").bytes, 100u);
}

TEST(Broker, RoundRobinTwoConsumers) {
  Broker b(kBudget);
  simple(b);
  auto c0 = b.register_consumer("q", 10);
  auto c1 = b.register_consumer("q", 10);
  for (int i = 0; i < 4; ++i) b.publish("x", "k", msg(i));
  std::map<ConsumerId, int> counts;
  for (auto& d : b.deliver_next()) ++counts[d.consumer.consumer_id];
  EXPECT_EQ(counts[c0.consumer_id], 2);
  EXPECT_EQ(counts[c1.consumer_id], 2);
}

TEST(Broker, PrefetchCeiling) {
  Broker b(kBudget);
  simple(b);
  b.register_consumer("q", 1);
  b.register_consumer("q", 1);
  for (int i = 0; i < 4; ++i) b.publish("x", "k", msg(i));
  auto d = b.deliver_next();
  EXPECT_EQ(d.size(), 2u);
  EXPECT_NE(d[0].consumer.consumer_id, d[1].consumer.consumer_id);
  EXPECT_EQ(b.queue_stats("q").ready, 2u);
  EXPECT_TRUE(b.deliver_next().empty());
}

TEST(Broker, CumulativeAck) {
  Broker b(kBudget);
  simple(b);
  auto c = b.register_consumer("q", 10);
  for (int i = 0; i < 5; ++i) b.publish("x", "k", msg(i));
  auto d = b.deliver_next();
  ASSERT_EQ(d.size(), 5u);
  b.ack_batch(c, d[2].tag);
  EXPECT_EQ(b.consumer(c.consumer_id).unacked, 2u);
  b.ack_batch(c, d[4].tag);
  EXPECT_EQ(b.consumer(c.consumer_id).unacked, 0u);
  EXPECT_EQ(code_of([&] { b.ack_batch(c, d[4].tag); }), Errc::unknown_tag);
}

// Brute-force oracle: with instant acks, message i of the queue lands on
// consumer i mod C.
void dispatch_oracle(std::uint32_t consumers, std::uint64_t messages) {
  Broker b(kDefaultBrokerMemory);
  simple(b, b.payload_budget());
  std::vector<ConsumerHandle> hs;
  for (std::uint32_t c = 0; c < consumers; ++c) hs.push_back(b.register_consumer("q", 128));
  std::vector<std::uint64_t> got(consumers), expect(consumers);
  for (std::uint64_t i = 0; i < messages; ++i) {
    ASSERT_EQ(b.publish("x", "k", msg(i, 16)), PublishOutcome::confirm);
    ++expect[i % consumers];
  }
  while (true) {
    auto ds = b.deliver_next();
    if (ds.empty()) break;
    std::map<ConsumerId, DeliveryTag> last;
    for (auto& d : ds) {
      ++got[d.consumer.consumer_id];
      last[d.consumer.consumer_id] = d.tag;
    }
    for (auto [id, tag] : last) b.ack_batch(hs[id], tag);
  }
  EXPECT_EQ(got, expect);
  for (auto n : got) {
    EXPECT_LE(n, messages / consumers + 1);
    EXPECT_GE(n + 1, messages / consumers);
  }
}

TEST(Broker, DispatchEightConsumers) { dispatch_oracle(8, 128000); }
TEST(Broker, DispatchSixtyFourConsumers) { dispatch_oracle(64, 128000); }

// Random publish / deliver / ack interleavings against a shadow model.
TEST(BrokerProperty, InvariantsUnderRandomOps) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    testing::Gen g(seed);
    Broker b(kBudget);
    b.declare_exchange("x", ExchangeKind::direct);
    b.declare_exchange("f", ExchangeKind::fanout);
    const std::vector<std::string> qs{"q0", "q1", "q2"};
    for (const auto& q : qs) {
      b.declare_queue({q, g.uniform(200, 2000)});
      b.bind("x", q, q);
      b.bind("f", q);
    }
    struct Held {
      ConsumerHandle h;
      std::vector<DeliveryTag> tags;
    };
    std::vector<Held> cons;
    for (int i = 0; i < 6; ++i) {
      cons.push_back({b.register_consumer(qs[i % 3], static_cast<std::uint32_t>(g.uniform(1, 4))), {}});
    }
    std::map<std::pair<std::string, std::uint64_t>, int> seen;  // (queue, seq) -> deliveries
    std::uint64_t seq = 0;
    for (int step = 0; step < 2000; ++step) {
      auto op = g.uniform(0, 9);
      if (op < 5) {
        auto before = b.all_queue_stats();
        bool fan = g.uniform(0, 3) == 0;
        auto out = fan ? b.publish("f", "", msg(seq, g.uniform(1, 150)))
                       : b.publish("x", g.pick(qs), msg(seq, g.uniform(1, 150)));
        ++seq;
        if (out == PublishOutcome::reject) {
          auto after = b.all_queue_stats();
          for (std::size_t i = 0; i < before.size(); ++i) {
            EXPECT_EQ(before[i].ready, after[i].ready);
            EXPECT_EQ(before[i].bytes, after[i].bytes);
          }
        }
      } else if (op < 8) {
        for (auto& d : b.deliver_next()) {
          auto& held = cons[d.consumer.consumer_id];
          held.tags.push_back(d.tag);
          ++seen[{held.h.queue, d.message.id.sequence}];
        }
      } else {
        auto& c = cons[g.uniform(0, cons.size() - 1)];
        if (!c.tags.empty()) {
          auto k = g.uniform(0, c.tags.size() - 1);
          b.ack_batch(c.h, c.tags[k]);
          c.tags.erase(c.tags.begin(), c.tags.begin() + static_cast<long>(k) + 1);
        }
      }
      for (const auto& c : cons) {
        EXPECT_LE(b.consumer(c.h.consumer_id).unacked, c.h.prefetch);
      }
      auto s = b.stats();
      EXPECT_EQ(s.confirmed_publishes, s.in_queue + s.unacked_in_flight + s.settled);
    }
    for (const auto& [key, n] : seen) EXPECT_EQ(n, 1) << key.first << " " << key.second;
  }
}

}  // namespace
}  // namespace streamsim
