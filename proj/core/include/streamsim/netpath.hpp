#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "streamsim/clock.hpp"
#include "streamsim/units.hpp"

namespace streamsim {

enum class Architecture { dts, prs, mss };
enum class ProxyKind { stunnel_like, haproxy_like };
enum class Balance { single_flow, round_robin };
/// Which client population a hop chain serves. Each side gets its own hop
/// instances, so producer and consumer connections are counted separately.
enum class Side { producer, consumer };

std::string_view to_string(Architecture a) noexcept;
std::string_view to_string(ProxyKind k) noexcept;
std::string_view to_string(Balance b) noexcept;
Architecture parse_architecture(std::string_view text);
ProxyKind parse_proxy_kind(std::string_view text);

struct HopSpec {
  std::string name;
  Nanos latency{0};  // one-way
  double bandwidth_bps = 1e9;
  Nanos tls_overhead{0};  // per message, when TLS terminates here
  std::optional<std::uint32_t> conn_limit;
  Balance balance = Balance::single_flow;

  bool operator==(const HopSpec&) const = default;
};

void validate(const HopSpec& hop);

struct HopOverride {
  std::optional<Nanos> latency;
  std::optional<double> bandwidth_bps;
  std::optional<Nanos> tls_overhead;
  std::optional<std::uint32_t> conn_limit;

  bool operator==(const HopOverride&) const = default;
};

struct PathOptions {
  std::optional<ProxyKind> proxy_kind;
  std::uint32_t num_conn = 1;
  std::map<std::string, HopOverride> overrides;
  /// Route MSS consumer traffic through the load balancer as well as the
  /// ingress (default: ingress only).
  bool mss_consumer_full_chain = false;
};

/// Default hop parameters. These echo 1 Gbps testbed links; the latencies
/// are placeholders that only fix an ordering between architectures.
namespace defaults {
inline constexpr double kBandwidthBps = 1e9;
inline constexpr Nanos kNodePortLatency{200'000};
inline constexpr Nanos kProxyLatency{300'000};
inline constexpr Nanos kLoadBalancerLatency{500'000};
inline constexpr Nanos kIngressLatency{500'000};
inline constexpr Nanos kTlsOverhead{50'000};
inline constexpr std::uint32_t kStunnelConnLimit = 16;
inline constexpr std::uint32_t kHaproxyMaxConn = 4;
}  // namespace defaults

struct PathModel {
  Architecture architecture = Architecture::dts;
  std::optional<ProxyKind> proxy_kind;
  /// Hops between a producer and the broker, in traversal order.
  std::vector<HopSpec> hops;
  std::uint32_t num_conn = 1;
  bool mss_consumer_full_chain = false;

  /// Hop chain a client on `side` crosses to reach the broker.
  std::vector<HopSpec> chain(Side side) const;
};

/// Canonical hop chain for an architecture. Throws invalid_option when the
/// options do not fit the architecture.
PathModel build_path(Architecture architecture, const PathOptions& options = {});

/// Closed-form one-way delay: sum of latency + size*8/bandwidth + tls.
Seconds path_delay(std::span<const HopSpec> hops, std::uint64_t msg_bytes);

/// Sum of hop latencies only.
Nanos latency_sum(std::span<const HopSpec> hops);

/// Contention-free arrival time of a message leaving the producer side now.
/// Precondition: the caller holds a Connection on every hop.
Nanos traverse(const PathModel& path, std::uint64_t msg_bytes,
               const Clock& clock);

struct Connection {
  Side side = Side::producer;
  std::string hop;
  std::uint32_t conn_id = 0;
  std::uint32_t in_flight = 0;
};

/// Live-connection accounting per (side, hop). A failed acquire leaves the
/// counts untouched.
class ConnectionPool {
 public:
  explicit ConnectionPool(const PathModel& path);

  /// Throws ConnectionLimitError (hop name + limit) at the limit, or
  /// invalid_argument for an unknown hop.
  Connection acquire(Side side, std::string_view hop);
  void release(const Connection& conn);
  std::uint32_t live(Side side, std::string_view hop) const;

 private:
  struct HopCount {
    std::optional<std::uint32_t> limit;
    std::uint32_t live = 0;
    std::uint32_t next_id = 0;
  };
  HopCount& slot(Side side, std::string_view hop);

  mutable std::mutex mu_;
  std::map<std::pair<Side, std::string>, HopCount> counts_;
};

Connection acquire_connection(ConnectionPool& pool, Side side,
                              std::string_view hop);

/// Store-and-forward tandem of shared hops for the virtual-clock model.
/// Concurrent messages on one hop serialize through its bandwidth; calls
/// must arrive in nondecreasing departure order.
class LinkChain {
 public:
  explicit LinkChain(std::vector<HopSpec> hops);

  /// Arrival time at the far end for a message departing at `depart`.
  Nanos transmit(std::uint64_t bytes, Nanos depart);
  /// Propagation-only delay for control frames (acks, confirms).
  Nanos control_latency() const noexcept { return latency_; }
  const std::vector<HopSpec>& hops() const noexcept { return hops_; }

 private:
  std::vector<HopSpec> hops_;
  std::vector<Nanos> busy_until_;
  Nanos latency_{0};
};

/// Token bucket shared by every connection crossing one hop direction.
/// reserve() returns when the reserved bytes have drained at the hop rate.
class TokenBucket {
 public:
  using Steady = std::chrono::steady_clock;

  TokenBucket(double rate_bps, std::uint64_t burst_bytes);

  Steady::time_point reserve(std::uint64_t bytes);

 private:
  std::mutex mu_;
  double bytes_per_sec_;
  double burst_;
  double tokens_;
  Steady::time_point last_;
};

}  // namespace streamsim
