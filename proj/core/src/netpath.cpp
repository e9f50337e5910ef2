#include "streamsim/netpath.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "streamsim/error.hpp"

namespace streamsim {
namespace {

HopSpec make_hop(std::string name, Nanos latency, Nanos tls,
                 std::optional<std::uint32_t> limit = std::nullopt,
                 Balance balance = Balance::single_flow) {
  HopSpec h;
  h.name = std::move(name);
  h.latency = latency;
  h.bandwidth_bps = defaults::kBandwidthBps;
  h.tls_overhead = tls;
  h.conn_limit = limit;
  h.balance = balance;
  return h;
}

Nanos serialization_nanos(std::uint64_t bytes, double bandwidth_bps) {
  return Nanos{std::llround(static_cast<double>(bytes) * 8e9 / bandwidth_bps)};
}

}  // namespace

std::string_view to_string(Architecture a) noexcept {
  switch (a) {
    case Architecture::dts: return "DTS";
    case Architecture::prs: return "PRS";
    case Architecture::mss: return "MSS";
  }
  return "?";
}

std::string_view to_string(ProxyKind k) noexcept {
  switch (k) {
    case ProxyKind::stunnel_like: return "stunnel-like";
    case ProxyKind::haproxy_like: return "haproxy-like";
  }
  return "?";
}

std::string_view to_string(Balance b) noexcept {
  return b == Balance::single_flow ? "single-flow" : "round-robin";
}

Architecture parse_architecture(std::string_view text) {
  if (text == "DTS" || text == "dts") return Architecture::dts;
  if (text == "PRS" || text == "prs") return Architecture::prs;
  if (text == "MSS" || text == "mss") return Architecture::mss;
  throw Error(Errc::invalid_option,
              fmt::format("unknown architecture '{}' (DTS, PRS, MSS)", text));
}

ProxyKind parse_proxy_kind(std::string_view text) {
  if (text == "stunnel-like" || text == "stunnel") return ProxyKind::stunnel_like;
  if (text == "haproxy-like" || text == "haproxy") return ProxyKind::haproxy_like;
  throw Error(Errc::invalid_option,
              fmt::format("unknown proxy kind '{}' (stunnel-like, haproxy-like)",
                          text));
}

void validate(const HopSpec& hop) {
  if (hop.latency < Nanos{0}) {
    throw Error(Errc::invalid_option,
                fmt::format("hop '{}': latency must be >= 0", hop.name));
  }
  if (!(hop.bandwidth_bps > 0.0)) {
    throw Error(Errc::invalid_option,
                fmt::format("hop '{}': bandwidth must be > 0", hop.name));
  }
  if (hop.tls_overhead < Nanos{0}) {
    throw Error(Errc::invalid_option,
                fmt::format("hop '{}': tls overhead must be >= 0", hop.name));
  }
  if (hop.conn_limit && *hop.conn_limit < 1) {
    throw Error(Errc::invalid_option,
                fmt::format("hop '{}': conn_limit must be >= 1", hop.name));
  }
}

std::vector<HopSpec> PathModel::chain(Side side) const {
  if (side == Side::producer) return hops;
  switch (architecture) {
    case Architecture::dts:
      return hops;
    case Architecture::prs:
      return {hops.rbegin(), hops.rend()};
    case Architecture::mss:
      if (mss_consumer_full_chain) return hops;
      return {hops.back()};
  }
  return hops;
}

PathModel build_path(Architecture architecture, const PathOptions& options) {
  PathModel path;
  path.architecture = architecture;
  path.num_conn = options.num_conn;
  path.mss_consumer_full_chain = options.mss_consumer_full_chain;

  if (options.num_conn < 1) {
    throw Error(Errc::invalid_option, "num_conn must be >= 1");
  }
  if (architecture != Architecture::prs) {
    if (options.proxy_kind) {
      throw Error(Errc::invalid_option,
                  fmt::format("proxy kind only applies to PRS, not {}",
                              to_string(architecture)));
    }
    if (options.num_conn > 1) {
      throw Error(Errc::invalid_option,
                  fmt::format("num_conn > 1 only applies to PRS, not {}",
                              to_string(architecture)));
    }
  }
  if (options.mss_consumer_full_chain && architecture != Architecture::mss) {
    throw Error(Errc::invalid_option,
                "mss_consumer_full_chain only applies to MSS");
  }

  switch (architecture) {
    case Architecture::dts:
      path.hops = {make_hop("node-port", defaults::kNodePortLatency,
                            defaults::kTlsOverhead)};
      break;
    case Architecture::prs: {
      auto kind = options.proxy_kind.value_or(ProxyKind::haproxy_like);
      path.proxy_kind = kind;
      std::optional<std::uint32_t> limit;
      Balance balance = Balance::round_robin;
      if (kind == ProxyKind::stunnel_like) {
        if (options.num_conn != 1) {
          throw Error(Errc::invalid_option,
                      "stunnel-like proxies carry a single flow (num_conn 1)");
        }
        limit = defaults::kStunnelConnLimit;
        balance = Balance::single_flow;
      } else if (options.num_conn > defaults::kHaproxyMaxConn) {
        throw Error(Errc::invalid_option,
                    fmt::format("haproxy-like proxies support 1-{} connections",
                                defaults::kHaproxyMaxConn));
      }
      path.hops = {make_hop("local-proxy", defaults::kProxyLatency,
                            defaults::kTlsOverhead, limit, balance),
                   make_hop("remote-proxy", defaults::kProxyLatency,
                            defaults::kTlsOverhead, limit, balance)};
      break;
    }
    case Architecture::mss:
      path.hops = {make_hop("load-balancer", defaults::kLoadBalancerLatency,
                            defaults::kTlsOverhead),
                   make_hop("ingress", defaults::kIngressLatency, Nanos{0})};
      break;
  }

  for (const auto& [name, ov] : options.overrides) {
    auto it = std::find_if(path.hops.begin(), path.hops.end(),
                           [&](const HopSpec& h) { return h.name == name; });
    if (it == path.hops.end()) {
      throw Error(Errc::invalid_option,
                  fmt::format("override for hop '{}' which {} does not have",
                              name, to_string(architecture)));
    }
    if (ov.latency) it->latency = *ov.latency;
    if (ov.bandwidth_bps) it->bandwidth_bps = *ov.bandwidth_bps;
    if (ov.tls_overhead) it->tls_overhead = *ov.tls_overhead;
    if (ov.conn_limit) it->conn_limit = *ov.conn_limit;
  }
  for (const auto& h : path.hops) validate(h);
  return path;
}

Seconds path_delay(std::span<const HopSpec> hops, std::uint64_t msg_bytes) {
  double total = 0.0;
  for (const auto& h : hops) {
    total += to_seconds(h.latency) +
             serialization_seconds(msg_bytes, h.bandwidth_bps) +
             to_seconds(h.tls_overhead);
  }
  return Seconds{total};
}

Nanos latency_sum(std::span<const HopSpec> hops) {
  Nanos total{0};
  for (const auto& h : hops) total += h.latency;
  return total;
}

Nanos traverse(const PathModel& path, std::uint64_t msg_bytes,
               const Clock& clock) {
  Nanos t = clock.now();
  for (const auto& h : path.hops) {
    t += h.latency + serialization_nanos(msg_bytes, h.bandwidth_bps) +
         h.tls_overhead;
  }
  return t;
}

ConnectionPool::ConnectionPool(const PathModel& path) {
  for (Side side : {Side::producer, Side::consumer}) {
    for (const auto& h : path.chain(side)) {
      counts_[{side, h.name}].limit = h.conn_limit;
    }
  }
}

ConnectionPool::HopCount& ConnectionPool::slot(Side side, std::string_view hop) {
  auto it = counts_.find({side, std::string(hop)});
  if (it == counts_.end()) {
    throw Error(Errc::invalid_argument,
                fmt::format("no hop '{}' on the {} side", hop,
                            side == Side::producer ? "producer" : "consumer"));
  }
  return it->second;
}

Connection ConnectionPool::acquire(Side side, std::string_view hop) {
  std::lock_guard lock(mu_);
  auto& c = slot(side, hop);
  if (c.limit && c.live >= *c.limit) {
    throw ConnectionLimitError(std::string(hop), *c.limit);
  }
  ++c.live;
  return Connection{side, std::string(hop), c.next_id++, 0};
}

void ConnectionPool::release(const Connection& conn) {
  std::lock_guard lock(mu_);
  auto& c = slot(conn.side, conn.hop);
  if (c.live == 0) {
    throw Error(Errc::invalid_argument,
                fmt::format("release on hop '{}' with no live connections",
                            conn.hop));
  }
  --c.live;
}

std::uint32_t ConnectionPool::live(Side side, std::string_view hop) const {
  std::lock_guard lock(mu_);
  auto it = counts_.find({side, std::string(hop)});
  return it == counts_.end() ? 0 : it->second.live;
}

Connection acquire_connection(ConnectionPool& pool, Side side,
                              std::string_view hop) {
  return pool.acquire(side, hop);
}

LinkChain::LinkChain(std::vector<HopSpec> hops)
    : hops_(std::move(hops)), busy_until_(hops_.size(), Nanos{0}) {
  latency_ = latency_sum(hops_);
}

Nanos LinkChain::transmit(std::uint64_t bytes, Nanos depart) {
  Nanos t = depart;
  for (std::size_t i = 0; i < hops_.size(); ++i) {
    const auto& h = hops_[i];
    Nanos start = std::max(t, busy_until_[i]);
    Nanos done = start + serialization_nanos(bytes, h.bandwidth_bps) +
                 h.tls_overhead;
    busy_until_[i] = done;
    t = done + h.latency;
  }
  return t;
}

TokenBucket::TokenBucket(double rate_bps, std::uint64_t burst_bytes)
    : bytes_per_sec_(rate_bps / 8.0),
      burst_(static_cast<double>(burst_bytes)),
      tokens_(static_cast<double>(burst_bytes)),
      last_(Steady::now()) {
  if (!(rate_bps > 0.0)) {
    throw Error(Errc::invalid_argument, "token bucket rate must be > 0");
  }
}

TokenBucket::Steady::time_point TokenBucket::reserve(std::uint64_t bytes) {
  std::lock_guard lock(mu_);
  auto now = Steady::now();
  double elapsed = std::chrono::duration<double>(now - last_).count();
  last_ = now;
  tokens_ = std::min(burst_, tokens_ + elapsed * bytes_per_sec_);
  tokens_ -= static_cast<double>(bytes);
  if (tokens_ >= 0.0) return now;
  auto wait = std::chrono::duration<double>(-tokens_ / bytes_per_sec_);
  return now + std::chrono::duration_cast<Steady::duration>(wait);
}

}  // namespace streamsim
