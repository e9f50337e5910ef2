#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "streamsim/error.hpp"
#include "streamsim/workload.hpp"
#include "test_support.hpp"

namespace streamsim {
namespace {

// FNV-1a, written out here so the checksum does not share code with the
// generator under test.
std::uint64_t fnv1a(const Bytes& b) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto x : b) {
    h ^= static_cast<std::uint8_t>(x);
    h *= 0x100000001b3ull;
  }
  return h;
}

TEST(Workload, BuiltinProfiles) {
  const auto& d = profile_lookup("dstream");
  EXPECT_EQ(d.payload_bytes, 16384u);
  EXPECT_EQ(d.events_per_message, 8u);
  EXPECT_DOUBLE_EQ(d.target_rate_bps, 32e9);

  const auto& l = profile_lookup("lstream");
  EXPECT_EQ(l.payload_bytes, 1048576u);
  EXPECT_DOUBLE_EQ(l.target_rate_bps, 30e9);

  const auto& g = profile_lookup("generic");
  EXPECT_EQ(g.payload_bytes, 4u * 1048576u);
  EXPECT_EQ(g.events_per_message, 1u);
  EXPECT_DOUBLE_EQ(g.target_rate_bps, 25e9);
}

TEST(Workload, UnknownProfileNamesIdentifier) {
  try {
    profile_lookup("nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unknown_profile);
    EXPECT_NE(std::string(e.what()).find("nope"), std::string::npos);
  }
}

TEST(Workload, RegistryRejectsBuiltinRedefinition) {
  ProfileRegistry reg;
  WorkloadProfile p{"dstream", 4096, 1, PayloadFormat::binary, 1e9};
  try {
    reg.register_profile(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::name_conflict);
  }
  p.name = "mine";
  reg.register_profile(p);
  EXPECT_EQ(reg.lookup("mine").payload_bytes, 4096u);
}

TEST(Workload, ValidateRejectsBadProfiles) {
  WorkloadProfile p{"x", 8, 1, PayloadFormat::binary, 1e9};
  EXPECT_THROW(validate(p), Error);  // smaller than the header
  p.payload_bytes = 4096;
  p.target_rate_bps = 0;
  EXPECT_THROW(validate(p), Error);
  p.target_rate_bps = 1e9;
  p.events_per_message = 0;
  EXPECT_THROW(validate(p), Error);
}

TEST(Workload, GenerationIsDeterministic) {
  const auto& d = profile_lookup("dstream");
  auto a = generate_message(d, 0, 0, 42);
  auto b = generate_message(d, 0, 0, 42);
  ASSERT_TRUE(a.payload && b.payload);
  EXPECT_EQ(*a.payload, *b.payload);
  EXPECT_NE(*a.payload, *generate_message(d, 0, 0, 43).payload);
  EXPECT_NE(*a.payload, *generate_message(d, 1, 0, 42).payload);
}

TEST(Workload, LstreamPayloadLength) {
  auto m = generate_message(profile_lookup("lstream"), 0, 7, 1);
  EXPECT_EQ(m.payload->size(), 1048576u);
  EXPECT_EQ(m.size_bytes, 1048576u);
}

TEST(Workload, GenericChecksumsDistinct) {
  const auto& g = profile_lookup("generic");
  std::set<std::uint64_t> sums;
  for (std::uint64_t k = 0; k < 100; ++k) {
    sums.insert(fnv1a(generate_payload(g, 0, k, 9)));
  }
  EXPECT_EQ(sums.size(), 100u);
}

TEST(Workload, PayloadMatchesMessage) {
  const auto& d = profile_lookup("dstream");
  EXPECT_EQ(generate_payload(d, 3, 11, 5), *generate_message(d, 3, 11, 5).payload);
}

TEST(Workload, HeaderRoundTrip) {
  testing::Gen g(7);
  for (int i = 0; i < 200; ++i) {
    MessageHeader h;
    h.id = {static_cast<std::uint32_t>(g.next()), g.next()};
    h.responder = static_cast<std::uint32_t>(g.next());
    h.publish_ts = Nanos{static_cast<std::int64_t>(g.next() >> 1)};
    h.payload_bytes = static_cast<std::uint32_t>(g.next());
    h.kind = g.pick(std::vector<MessageKind>{MessageKind::request, MessageKind::reply,
                                             MessageKind::control});
    Bytes buf(MessageHeader::kSize);
    encode_header(h, buf);
    EXPECT_EQ(decode_header(buf), h);
  }
}

TEST(Workload, HeaderIsBigEndian) {
  MessageHeader h;
  h.id = {0x01020304u, 0};
  Bytes buf(MessageHeader::kSize);
  encode_header(h, buf);
  EXPECT_EQ(buf[0], std::byte{1});
  EXPECT_EQ(buf[3], std::byte{4});
}

TEST(Workload, StampAndRecover) {
  auto bytes = generate_payload(profile_lookup("dstream"), 2, 9, 1);
  stamp_publish_time(bytes, Nanos{123456});
  auto m = message_from_payload(std::make_shared<const Bytes>(bytes));
  EXPECT_EQ(m.id.producer, 2u);
  EXPECT_EQ(m.id.sequence, 9u);
  EXPECT_EQ(m.created_at, Nanos{123456});
  EXPECT_EQ(m.size_bytes, 16384u);
}

TEST(Workload, PacingOracle) {
  // Independent arithmetic: bytes * 8 / rate.
  EXPECT_NEAR(pacing_interval(profile_lookup("generic"), 1).count(),
              4194304.0 * 8.0 / 25e9, 1e-15);
  EXPECT_NEAR(pacing_interval(profile_lookup("generic"), 1).count(), 1.34217728e-3,
              1e-15);
  EXPECT_NEAR(pacing_interval(profile_lookup("dstream"), 1).count(), 4.096e-6, 1e-18);
  for (const char* name : {"dstream", "lstream", "generic"}) {
    const auto& p = profile_lookup(name);
    EXPECT_DOUBLE_EQ(pacing_interval(p, 2).count(),
                     2 * pacing_interval(p, 1).count());
  }
  EXPECT_THROW(pacing_interval(profile_lookup("dstream"), 0), Error);
}

TEST(WorkloadProperty, PacingReachesTargetRate) {
  testing::Gen g(2024);
  for (int i = 0; i < 500; ++i) {
    WorkloadProfile p{"p", g.uniform(64, 64 * kMiB), 1, PayloadFormat::binary,
                      static_cast<double>(g.uniform(1'000'000, 100'000'000'000))};
    auto n = static_cast<std::uint32_t>(g.uniform(1, 256));
    double achieved = n * (p.payload_bytes * 8.0 / pacing_interval(p, n).count());
    EXPECT_NEAR(achieved / p.target_rate_bps, 1.0, 1e-9);
  }
}

TEST(WorkloadProperty, GenerationIsPure) {
  testing::Gen g(99);
  const auto& d = profile_lookup("dstream");
  for (int i = 0; i < 50; ++i) {
    auto prod = static_cast<std::uint32_t>(g.uniform(0, 100));
    auto seq = g.uniform(0, 1'000'000);
    auto seed = g.next();
    EXPECT_EQ(generate_payload(d, prod, seq, seed), generate_payload(d, prod, seq, seed));
  }
}

}  // namespace
}  // namespace streamsim
