#include <gtest/gtest.h>

#include <map>
#include <set>
#include <string>
#include <vector>

#include "streamsim/error.hpp"
#include "streamsim/overlay.hpp"
#include "test_support.hpp"

namespace streamsim {
namespace {

SessionRequest req(Direction d, std::uint32_t num_conn = 1,
                   std::string control = "s2cs:5000") {
  SessionRequest r;
  r.direction = d;
  r.remote_endpoint = {"10.0.0.1", 5672};
  r.control_endpoint = Endpoint::parse(control);
  r.receiver_ports = {5672};
  r.num_conn = num_conn;
  r.credential = "cert";
  return r;
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

TEST(Overlay, EndpointParse) {
  auto e = Endpoint::parse("host:5000");
  EXPECT_EQ(e.host, "host");
  EXPECT_EQ(e.port, 5000);
  EXPECT_EQ(e.str(), "host:5000");
  EXPECT_THROW(Endpoint::parse("host"), Error);
  EXPECT_THROW(Endpoint::parse("host:99999"), Error);
  EXPECT_THROW(Endpoint::parse(":1"), Error);
}

TEST(Overlay, FirstInboundInRange) {
  ControlPlane cp;
  auto r = cp.inbound_request(req(Direction::inbound));
  EXPECT_FALSE(r.uid.empty());
  EXPECT_GE(r.consumer_proxy.port, 5100);
  EXPECT_LE(r.consumer_proxy.port, 5110);
  EXPECT_EQ(cp.find(r.uid)->state, SessionState::half_open);
}

TEST(Overlay, TwelfthSessionExhaustsPool) {
  ControlPlane cp;
  for (int i = 0; i < 11; ++i) cp.inbound_request(req(Direction::inbound));
  EXPECT_EQ(code_of([&] { cp.inbound_request(req(Direction::inbound)); }),
            Errc::pool_exhausted);
  // A different control server owns its own pool.
  cp.inbound_request(req(Direction::inbound, 1, "other:5000"));
}

TEST(Overlay, Credentials) {
  ControlPlane cp;
  auto r = req(Direction::inbound);
  r.credential = "has space";
  EXPECT_EQ(code_of([&] { cp.inbound_request(r); }), Errc::credential_rejected);
  r.credential = "";
  EXPECT_EQ(code_of([&] { cp.inbound_request(r); }), Errc::credential_rejected);

  OverlayConfig cfg;
  cfg.allowlist = {"good"};
  ControlPlane strict(cfg);
  EXPECT_EQ(code_of([&] { strict.inbound_request(req(Direction::inbound)); }),
            Errc::credential_rejected);
}

TEST(Overlay, EstablishAndRelease) {
  ControlPlane cp;
  auto in = cp.inbound_request(req(Direction::inbound));
  auto out = cp.outbound_request(req(Direction::outbound), in.uid);
  auto s = *cp.find(in.uid);
  EXPECT_EQ(s.state, SessionState::established);
  EXPECT_EQ(s.connection_map.size(), 1u);
  EXPECT_EQ(s.producer_proxy, out);
  EXPECT_NE(out.port, in.consumer_proxy.port);
  cp.release(in.uid);
  EXPECT_EQ(code_of([&] { cp.release(in.uid); }), Errc::unknown_uid);
  EXPECT_TRUE(cp.ports_in_use(Endpoint::parse("s2cs:5000")).empty());
}

TEST(Overlay, OutboundErrors) {
  ControlPlane cp;
  EXPECT_EQ(code_of([&] { cp.outbound_request(req(Direction::outbound), "nope"); }),
            Errc::unknown_uid);
  auto in = cp.inbound_request(req(Direction::inbound, 1));
  EXPECT_EQ(code_of([&] { cp.outbound_request(req(Direction::outbound, 4), in.uid); }),
            Errc::num_conn_mismatch);
}

TEST(Overlay, ReleaseHalfOpenFreesPort) {
  ControlPlane cp;
  auto in = cp.inbound_request(req(Direction::inbound));
  cp.release(in.uid);
  EXPECT_TRUE(cp.live_sessions().empty());
  for (int i = 0; i < 11; ++i) cp.inbound_request(req(Direction::inbound));
}

TEST(Overlay, ConnectionMapRoundRobin) {
  ControlPlane cp;
  auto in = cp.inbound_request(req(Direction::inbound, 4));
  cp.outbound_request(req(Direction::outbound, 4), in.uid);
  EXPECT_EQ(cp.find(in.uid)->connection_map.size(), 4u);
  std::vector<std::uint32_t> seen;
  for (int i = 0; i < 8; ++i) seen.push_back(cp.assign_connection(in.uid));
  EXPECT_EQ(seen, (std::vector<std::uint32_t>{0, 1, 2, 3, 0, 1, 2, 3}));
}

TEST(Overlay, MessagesOnlyOnEstablished) {
  ControlPlane cp;
  auto in = cp.inbound_request(req(Direction::inbound));
  EXPECT_EQ(code_of([&] { cp.assign_connection(in.uid); }), Errc::unknown_uid);
}

TEST(Overlay, SerializeRestore) {
  ControlPlane cp;
  auto a = cp.inbound_request(req(Direction::inbound, 2));
  cp.outbound_request(req(Direction::outbound, 2), a.uid);
  auto b = cp.inbound_request(req(Direction::inbound));
  ControlPlane copy;
  copy.restore(cp.serialize());
  EXPECT_EQ(copy.serialize(), cp.serialize());
  EXPECT_EQ(copy.find(a.uid)->state, SessionState::established);
  EXPECT_EQ(copy.find(b.uid)->state, SessionState::half_open);
  // Fresh UIDs after a restore do not collide with restored ones.
  auto c = copy.inbound_request(req(Direction::inbound));
  EXPECT_NE(c.uid, a.uid);
  EXPECT_NE(c.uid, b.uid);
}

// Random interleavings of inbound, outbound, and release over two control
// servers, checked against a shadow set of live sessions.
TEST(OverlayProperty, RandomInterleavings) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    testing::Gen g(seed);
    ControlPlane cp;
    const std::vector<std::string> controls{"a:5000", "b:5000"};
    std::map<std::string, bool> live;  // uid -> established
    std::set<std::string> dead;
    for (int step = 0; step < 300; ++step) {
      auto op = g.uniform(0, 3);
      if (op == 0) {
        auto ctl = g.pick(controls);
        auto before = cp.ports_in_use(Endpoint::parse(ctl)).size();
        try {
          auto r = cp.inbound_request(req(Direction::inbound, 1, ctl));
          live[r.uid] = false;
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), Errc::pool_exhausted);
          EXPECT_EQ(before, 11u);
        }
      } else if (op == 1) {
        // Outbound against a uid that was never issued or is gone.
        std::string uid = dead.empty() || g.coin() ? "u-" + std::to_string(g.next())
                                                   : *dead.begin();
        EXPECT_EQ(code_of([&] { cp.outbound_request(req(Direction::outbound), uid); }),
                  Errc::unknown_uid);
      } else if (op == 2 && !live.empty()) {
        auto it = std::next(live.begin(), static_cast<long>(g.uniform(0, live.size() - 1)));
        if (!it->second) {
          try {
            cp.outbound_request(req(Direction::outbound, 1, g.pick(controls)), it->first);
            it->second = true;
          } catch (const Error& e) {
            EXPECT_EQ(e.code(), Errc::pool_exhausted);
          }
        }
      } else if (!live.empty()) {
        auto it = std::next(live.begin(), static_cast<long>(g.uniform(0, live.size() - 1)));
        cp.release(it->first);
        dead.insert(it->first);
        live.erase(it);
      }
      // No two live sessions share a data port on one control server.
      std::map<std::string, std::multiset<std::uint16_t>> ports;
      auto sessions = cp.live_sessions();
      EXPECT_EQ(sessions.size(), live.size());
      for (const auto& s : sessions) {
        ports[s.consumer_control.str()].insert(s.consumer_proxy.port);
        if (s.producer_proxy) ports[s.producer_control->str()].insert(s.producer_proxy->port);
        EXPECT_EQ(s.state == SessionState::established, live.at(s.uid));
        if (s.state == SessionState::established) {
          EXPECT_EQ(s.connection_map.size(), s.num_conn);
        }
      }
      for (const auto& [ctl, ps] : ports) {
        EXPECT_EQ(std::set<std::uint16_t>(ps.begin(), ps.end()).size(), ps.size());
        for (auto p : ps) {
          EXPECT_GE(p, 5100);
          EXPECT_LE(p, 5110);
        }
      }
    }
  }
}

}  // namespace
}  // namespace streamsim
