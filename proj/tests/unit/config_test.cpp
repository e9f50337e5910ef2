#include <gtest/gtest.h>

#include <cstdlib>

#include "streamsim/config.hpp"
#include "streamsim/error.hpp"
#include "test_support.hpp"

namespace streamsim {
namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::io_error;
}

TEST(Config, Minimal) {
  auto f = parse_config("[experiment]\narchitecture = prs\nconsumers = 8\n");
  ASSERT_EQ(f.experiments.size(), 1u);
  const auto& c = f.experiments[0];
  EXPECT_EQ(c.architecture, Architecture::prs);
  EXPECT_EQ(c.consumers, 8u);
  EXPECT_EQ(c.producers, 8u);  // defaults to consumers
  EXPECT_EQ(c.workload.name, "dstream");
}

TEST(Config, BroadcastProducerDefault) {
  auto f = parse_config("[experiment]\npattern = broadcast_gather\nconsumers = 8\n");
  EXPECT_EQ(f.experiments[0].producers, 1u);
}

TEST(Config, NamedSectionsHopsProfilesComments) {
  auto f = parse_config(R"(
# two experiments
[experiment.small]
consumers = 2          # trailing comment
workload = tiny
duration = 1.5ms

[experiment.big]
name = "big # not a comment"
consumers = 4
processing_time = 250  # seconds when bare
timeout = 30s

[hop.node-port]
latency_us = 300
tls_overhead_us = 1ms
conn_limit = 64

[profile.tiny]
payload_bytes = 4 KiB
target_rate_bps = 1e9
)");
  ASSERT_EQ(f.experiments.size(), 2u);
  const auto& a = f.experiments[0];
  EXPECT_EQ(a.name, "small");
  EXPECT_EQ(a.workload.payload_bytes, 4096u);
  EXPECT_EQ(a.duration, Nanos{1'500'000});
  EXPECT_EQ(a.hop_overrides.at("node-port").latency, Nanos{300'000});
  EXPECT_EQ(a.hop_overrides.at("node-port").tls_overhead, Nanos{1'000'000});
  const auto& b = f.experiments[1];
  EXPECT_EQ(b.name, "big # not a comment");
  EXPECT_EQ(b.processing_time, Nanos{250'000'000'000});
  EXPECT_EQ(b.timeout, Nanos{30'000'000'000});
  EXPECT_EQ(b.hop_overrides, a.hop_overrides);
  EXPECT_TRUE(f.profiles.contains("tiny"));
}

TEST(Config, FailClosed) {
  EXPECT_EQ(code_of([] { parse_config("[experiment]\nbogus = 1\n"); }),
            Errc::invalid_config);
  EXPECT_EQ(code_of([] { parse_config("[mystery]\n"); }), Errc::invalid_config);
  EXPECT_EQ(code_of([] { parse_config("[experiment]\nconsumers = 1\nconsumers = 2\n"); }),
            Errc::invalid_config);
  EXPECT_EQ(code_of([] { parse_config("[experiment]\nconsumers = -1\n"); }),
            Errc::invalid_config);
  EXPECT_EQ(code_of([] { parse_config("[experiment]\nworkload = nope\n"); }),
            Errc::invalid_config);
  EXPECT_EQ(code_of([] { parse_config("consumers = 1\n"); }), Errc::invalid_config);
  EXPECT_EQ(code_of([] { parse_config("[experiment]\nnum_conn = 2\n"); }),
            Errc::invalid_config);
  EXPECT_EQ(code_of([] { load_config("/nonexistent/streamsim.conf"); }),
            Errc::invalid_config);
}

TEST(Config, ErrorsCarryLineNumber) {
  try {
    parse_config("[experiment]\n\nbogus = 1\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Config, Durations) {
  EXPECT_EQ(parse_duration("250us", 1), Nanos{250'000});
  EXPECT_EQ(parse_duration("1.5ms", 1), Nanos{1'500'000});
  EXPECT_EQ(parse_duration("2s", 1), Nanos{2'000'000'000});
  EXPECT_EQ(parse_duration("0.000000001s", 1), Nanos{1});
  EXPECT_EQ(parse_duration("7", 1000), Nanos{7000});
  EXPECT_THROW(parse_duration("1.0000000001s", 1), Error);
  EXPECT_THROW(parse_duration("abc", 1), Error);
  EXPECT_THROW(parse_duration("-1ms", 1), Error);
  for (auto ns : {0ll, 1ll, 999ll, 1000ll, 1500ll, 2'000'000ll, 2'500'000'000ll}) {
    EXPECT_EQ(parse_duration(format_duration(Nanos{ns}), 1), Nanos{ns});
  }
}

TEST(Config, Sizes) {
  EXPECT_EQ(parse_size("4096"), 4096u);
  EXPECT_EQ(parse_size("16 KiB"), 16384u);
  EXPECT_EQ(parse_size("1.5 MiB"), 1572864u);
  EXPECT_EQ(parse_size("1GiB"), kGiB);
  EXPECT_THROW(parse_size("1 XB"), Error);
}

TEST(Config, EnvSeed) {
  ExperimentConfig c;
  ::setenv("STREAMSIM_SEED", "77", 1);
  apply_env_overrides(c);
  EXPECT_EQ(c.seed, 77u);
  ::setenv("STREAMSIM_SEED", "x", 1);
  EXPECT_THROW(apply_env_overrides(c), Error);
  ::unsetenv("STREAMSIM_SEED");
}

ExperimentConfig random_config(testing::Gen& g) {
  ExperimentConfig c;
  c.name = "exp" + std::to_string(g.uniform(0, 999));
  c.architecture = g.pick(std::vector<Architecture>{Architecture::dts, Architecture::prs,
                                                    Architecture::mss});
  c.pattern = g.pick(std::vector<Pattern>{Pattern::work_sharing,
                                          Pattern::work_sharing_feedback,
                                          Pattern::broadcast_gather});
  if (c.architecture == Architecture::prs) {
    if (g.coin()) {
      c.proxy_kind = ProxyKind::stunnel_like;
    } else {
      if (g.coin()) c.proxy_kind = ProxyKind::haproxy_like;
      c.num_conn = static_cast<std::uint32_t>(g.uniform(1, 4));
    }
  }
  if (c.architecture == Architecture::mss) c.mss_consumer_full_chain = g.coin();
  if (g.coin()) {
    c.workload = profile_lookup(g.pick(std::vector<std::string>{"dstream", "lstream", "generic"}));
  } else {
    c.workload = {"custom", g.uniform(64, 64 * 1024), static_cast<std::uint32_t>(g.uniform(1, 9)),
                  g.coin() ? PayloadFormat::binary : PayloadFormat::opaque_hdf5_like,
                  static_cast<double>(g.uniform(1, 1'000'000)) * 1e3};
  }
  c.consumers = static_cast<std::uint32_t>(g.uniform(1, 64));
  c.producers = c.pattern == Pattern::broadcast_gather
                    ? 1
                    : static_cast<std::uint32_t>(g.uniform(1, 64));
  if (c.pattern == Pattern::broadcast_gather) c.broker_memory = 64 * kGiB;
  c.max_message_count = g.uniform(1, 1'000'000);
  c.message_count = g.uniform(1, c.max_message_count);
  if (g.coin()) c.duration = Nanos{static_cast<std::int64_t>(g.uniform(1, 10'000'000'000))};
  c.prefetch = static_cast<std::uint32_t>(g.uniform(1, 512));
  c.ack_batch = static_cast<std::uint32_t>(g.uniform(1, c.prefetch));
  c.work_queue_count = static_cast<std::uint32_t>(g.uniform(1, 4));
  c.transport = g.coin() ? Transport::sim : Transport::loopback;
  c.seed = g.next();
  c.repetitions = static_cast<std::uint32_t>(g.uniform(1, 5));
  c.processing_time = Nanos{static_cast<std::int64_t>(g.uniform(0, 5'000'000))};
  c.reply_bytes = static_cast<std::uint32_t>(g.uniform(32, 4096));
  c.timeout = Nanos{static_cast<std::int64_t>(g.uniform(1, 1'000'000'000'000))};
  if (g.coin()) {
    auto hop = build_path(c.architecture, path_options(c)).hops.front();
    HopOverride o;
    o.latency = Nanos{static_cast<std::int64_t>(g.uniform(0, 10'000'000))};
    if (g.coin()) o.bandwidth_bps = static_cast<double>(g.uniform(1, 100)) * 1e8;
    if (g.coin()) o.tls_overhead = Nanos{static_cast<std::int64_t>(g.uniform(0, 100'000))};
    c.hop_overrides[hop.name] = o;
  }
  return c;
}

TEST(ConfigProperty, DumpRoundTrip) {
  testing::Gen g(4242);
  for (int i = 0; i < 300; ++i) {
    auto c = random_config(g);
    ASSERT_NO_THROW(validate(c)) << dump_effective_config(c);
    auto text = dump_effective_config(c);
    auto back = parse_config(text);
    ASSERT_EQ(back.experiments.size(), 1u) << text;
    EXPECT_EQ(back.experiments[0], c) << text;
    EXPECT_EQ(dump_effective_config(back.experiments[0]), text);
  }
}

TEST(ConfigProperty, MultiDumpRoundTrip) {
  auto f = parse_config(
      "[experiment.a]\nconsumers = 2\nworkload = t\n"
      "[experiment.b]\narchitecture = dts\nconsumers = 3\n"
      "[hop.node-port]\nlatency_us = 5\n"
      "[profile.t]\npayload_bytes = 1 KiB\ntarget_rate_bps = 1e6\n");
  auto text = dump_effective_config(f.experiments);
  auto back = parse_config(text);
  EXPECT_EQ(back.experiments, f.experiments);
}

}  // namespace
}  // namespace streamsim
