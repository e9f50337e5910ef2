#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace streamsim {

/// Opaque host:port address. Hostname/NodePort distinctions are not modeled.
struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  std::string str() const;
  /// Throws invalid_argument on anything but "host:port".
  static Endpoint parse(std::string_view text);

  auto operator<=>(const Endpoint&) const = default;
};

enum class Direction { inbound, outbound };

struct SessionRequest {
  Direction direction = Direction::inbound;
  Endpoint remote_endpoint;
  /// Control server (S2CS) that allocates the proxy for this request.
  Endpoint control_endpoint;
  std::vector<std::uint16_t> receiver_ports;
  std::uint32_t num_conn = 1;
  std::string credential;
};

enum class SessionState { half_open, established, released };

struct ConnectionMapEntry {
  std::uint32_t producer_conn = 0;
  std::uint32_t consumer_conn = 0;
};

struct Session {
  std::string uid;
  std::uint32_t num_conn = 1;
  Endpoint consumer_proxy;
  std::optional<Endpoint> producer_proxy;
  Endpoint consumer_control;
  std::optional<Endpoint> producer_control;
  std::vector<ConnectionMapEntry> connection_map;
  SessionState state = SessionState::half_open;
  /// Messages carried per connection_map entry (data plane bookkeeping).
  std::vector<std::uint64_t> carried;
};

struct PortPool {
  std::uint16_t control_port = 5000;
  std::uint16_t first_data_port = 5100;
  std::uint16_t last_data_port = 5110;  // inclusive

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(last_data_port - first_data_port) + 1;
  }
};

struct OverlayConfig {
  PortPool pool;
  /// Accepted credentials. Empty means any well-formed token is accepted.
  std::set<std::string> allowlist;
  std::uint64_t uid_seed = 0x5c15'7ea4;
};

struct InboundResult {
  std::string uid;
  Endpoint consumer_proxy;
};

/// Session control plane for the proxied architecture: an inbound request
/// creates the consumer-side proxy and a UID, the matching outbound request
/// creates the producer-side proxy and binds the tunnel.
///
/// Requests are serialized; every control server endpoint owns its own port
/// pool.
class ControlPlane {
 public:
  explicit ControlPlane(OverlayConfig config = {});

  /// Throws pool_exhausted, credential_rejected or invalid_argument.
  InboundResult inbound_request(const SessionRequest& req);

  /// Throws unknown_uid, num_conn_mismatch, pool_exhausted,
  /// credential_rejected or invalid_argument.
  Endpoint outbound_request(const SessionRequest& req, std::string_view uid);

  /// Throws unknown_uid for sessions that are not live.
  void release(std::string_view uid);

  /// Round-robin connection_map entry for the next message on an established
  /// session. Throws unknown_uid if the session is not established.
  std::uint32_t assign_connection(std::string_view uid);

  std::optional<Session> find(std::string_view uid) const;
  std::vector<Session> live_sessions() const;
  /// Data ports in use at `control`, ascending.
  std::vector<std::uint16_t> ports_in_use(const Endpoint& control) const;

  /// JSON snapshot of every session and pool, used to persist state between
  /// CLI invocations.
  std::string serialize() const;
  /// Replaces this control plane's state with a serialize() snapshot.
  void restore(std::string_view text);

 private:
  struct PoolState {
    std::set<std::uint16_t> used;
  };

  void check_credential(const std::string& credential) const;
  std::uint16_t allocate_port(const Endpoint& control);
  void free_port(const Endpoint& control, std::uint16_t port);
  std::string next_uid();

  mutable std::mutex mu_;
  OverlayConfig config_;
  std::uint64_t issued_ = 0;
  std::map<std::string, Session, std::less<>> sessions_;
  std::map<Endpoint, PoolState> pools_;
  std::map<std::string, std::uint64_t, std::less<>> rr_cursor_;
};

}  // namespace streamsim
