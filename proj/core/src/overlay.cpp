#include "streamsim/overlay.hpp"

#include <algorithm>
#include <charconv>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "streamsim/error.hpp"

namespace streamsim {
namespace {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::half_open: return "half-open";
    case SessionState::established: return "established";
    case SessionState::released: return "released";
  }
  return "?";
}

SessionState parse_state(std::string_view s) {
  if (s == "half-open") return SessionState::half_open;
  if (s == "established") return SessionState::established;
  if (s == "released") return SessionState::released;
  throw Error(Errc::parse_error, fmt::format("bad session state '{}'", s));
}

json endpoint_json(const Endpoint& e) { return e.str(); }

}  // namespace

std::string Endpoint::str() const { return fmt::format("{}:{}", host, port); }

Endpoint Endpoint::parse(std::string_view text) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0 ||
      colon + 1 == text.size()) {
    throw Error(Errc::invalid_argument,
                fmt::format("endpoint '{}' is not host:port", text));
  }
  auto port_text = text.substr(colon + 1);
  unsigned value = 0;
  auto [ptr, ec] =
      std::from_chars(port_text.data(), port_text.data() + port_text.size(),
                      value);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() ||
      value > 65535) {
    throw Error(Errc::invalid_argument,
                fmt::format("endpoint '{}' has a bad port", text));
  }
  return Endpoint{std::string(text.substr(0, colon)),
                  static_cast<std::uint16_t>(value)};
}

ControlPlane::ControlPlane(OverlayConfig config) : config_(std::move(config)) {
  if (config_.pool.last_data_port < config_.pool.first_data_port) {
    throw Error(Errc::invalid_argument, "port pool range is empty");
  }
}

void ControlPlane::check_credential(const std::string& credential) const {
  bool well_formed =
      !credential.empty() &&
      std::all_of(credential.begin(), credential.end(), [](char c) {
        return c > ' ' && c < 0x7f;
      });
  if (!well_formed) {
    throw Error(Errc::credential_rejected, "malformed credential");
  }
  if (!config_.allowlist.empty() && !config_.allowlist.contains(credential)) {
    throw Error(Errc::credential_rejected, "credential not in allowlist");
  }
}

std::uint16_t ControlPlane::allocate_port(const Endpoint& control) {
  auto& pool = pools_[control];
  for (std::uint32_t p = config_.pool.first_data_port;
       p <= config_.pool.last_data_port; ++p) {
    auto port = static_cast<std::uint16_t>(p);
    if (!pool.used.contains(port)) {
      pool.used.insert(port);
      return port;
    }
  }
  throw Error(Errc::pool_exhausted,
              fmt::format("no free data port in {}-{} at {}",
                          config_.pool.first_data_port,
                          config_.pool.last_data_port, control.str()));
}

void ControlPlane::free_port(const Endpoint& control, std::uint16_t port) {
  auto it = pools_.find(control);
  if (it != pools_.end()) it->second.used.erase(port);
}

std::string ControlPlane::next_uid() {
  for (;;) {
    std::uint64_t hi = splitmix64(config_.uid_seed + 2 * issued_);
    std::uint64_t lo = splitmix64(config_.uid_seed + 2 * issued_ + 1);
    ++issued_;
    auto uid = fmt::format("{:08x}-{:04x}-{:04x}-{:04x}-{:012x}", hi >> 32,
                           (hi >> 16) & 0xffff, hi & 0xffff, lo >> 48,
                           lo & 0xffffffffffffull);
    if (!sessions_.contains(uid)) return uid;
  }
}

InboundResult ControlPlane::inbound_request(const SessionRequest& req) {
  std::lock_guard lock(mu_);
  if (req.direction != Direction::inbound) {
    throw Error(Errc::invalid_argument, "inbound_request needs an inbound request");
  }
  if (req.num_conn < 1) {
    throw Error(Errc::invalid_argument, "num_conn must be >= 1");
  }
  check_credential(req.credential);
  auto port = allocate_port(req.control_endpoint);

  Session s;
  s.uid = next_uid();
  s.num_conn = req.num_conn;
  s.consumer_control = req.control_endpoint;
  s.consumer_proxy = Endpoint{req.control_endpoint.host, port};
  s.state = SessionState::half_open;
  InboundResult out{s.uid, s.consumer_proxy};
  sessions_.insert_or_assign(s.uid, std::move(s));
  return out;
}

Endpoint ControlPlane::outbound_request(const SessionRequest& req,
                                        std::string_view uid) {
  std::lock_guard lock(mu_);
  if (req.direction != Direction::outbound) {
    throw Error(Errc::invalid_argument,
                "outbound_request needs an outbound request");
  }
  auto it = sessions_.find(uid);
  if (it == sessions_.end() || it->second.state == SessionState::released) {
    throw Error(Errc::unknown_uid, fmt::format("unknown session uid '{}'", uid));
  }
  auto& s = it->second;
  if (s.state != SessionState::half_open) {
    throw Error(Errc::invalid_argument,
                fmt::format("session '{}' is already established", uid));
  }
  if (req.num_conn != s.num_conn) {
    throw Error(Errc::num_conn_mismatch,
                fmt::format("outbound num_conn {} does not match inbound {}",
                            req.num_conn, s.num_conn));
  }
  check_credential(req.credential);
  auto port = allocate_port(req.control_endpoint);

  s.producer_control = req.control_endpoint;
  s.producer_proxy = Endpoint{req.control_endpoint.host, port};
  s.connection_map.clear();
  for (std::uint32_t i = 0; i < s.num_conn; ++i) {
    s.connection_map.push_back({i, i});
  }
  s.carried.assign(s.num_conn, 0);
  s.state = SessionState::established;
  return *s.producer_proxy;
}

void ControlPlane::release(std::string_view uid) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(uid);
  if (it == sessions_.end() || it->second.state == SessionState::released) {
    throw Error(Errc::unknown_uid, fmt::format("unknown session uid '{}'", uid));
  }
  auto& s = it->second;
  free_port(s.consumer_control, s.consumer_proxy.port);
  if (s.producer_proxy) free_port(*s.producer_control, s.producer_proxy->port);
  s.state = SessionState::released;
  rr_cursor_.erase(std::string(uid));
}

std::uint32_t ControlPlane::assign_connection(std::string_view uid) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(uid);
  if (it == sessions_.end() || it->second.state != SessionState::established) {
    throw Error(Errc::unknown_uid,
                fmt::format("no established session '{}'", uid));
  }
  auto& s = it->second;
  auto& cursor = rr_cursor_[std::string(uid)];
  auto entry = static_cast<std::uint32_t>(cursor % s.connection_map.size());
  ++cursor;
  ++s.carried[entry];
  return entry;
}

std::optional<Session> ControlPlane::find(std::string_view uid) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(uid);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

std::vector<Session> ControlPlane::live_sessions() const {
  std::lock_guard lock(mu_);
  std::vector<Session> out;
  for (const auto& [uid, s] : sessions_) {
    if (s.state != SessionState::released) out.push_back(s);
  }
  return out;
}

std::vector<std::uint16_t> ControlPlane::ports_in_use(
    const Endpoint& control) const {
  std::lock_guard lock(mu_);
  auto it = pools_.find(control);
  if (it == pools_.end()) return {};
  return {it->second.used.begin(), it->second.used.end()};
}

std::string ControlPlane::serialize() const {
  std::lock_guard lock(mu_);
  json j;
  j["version"] = 1;
  j["issued"] = issued_;
  j["uid_seed"] = config_.uid_seed;
  j["pool"] = {{"control_port", config_.pool.control_port},
               {"first_data_port", config_.pool.first_data_port},
               {"last_data_port", config_.pool.last_data_port}};
  j["allowlist"] = config_.allowlist;
  json sessions = json::array();
  for (const auto& [uid, s] : sessions_) {
    json js;
    js["uid"] = s.uid;
    js["num_conn"] = s.num_conn;
    js["state"] = to_string(s.state);
    js["consumer_proxy"] = endpoint_json(s.consumer_proxy);
    js["consumer_control"] = endpoint_json(s.consumer_control);
    if (s.producer_proxy) js["producer_proxy"] = endpoint_json(*s.producer_proxy);
    if (s.producer_control) {
      js["producer_control"] = endpoint_json(*s.producer_control);
    }
    json map = json::array();
    for (const auto& e : s.connection_map) {
      map.push_back({e.producer_conn, e.consumer_conn});
    }
    js["connection_map"] = std::move(map);
    sessions.push_back(std::move(js));
  }
  j["sessions"] = std::move(sessions);
  return j.dump(2);
}

void ControlPlane::restore(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, fmt::format("overlay state: {}", e.what()));
  }
  std::lock_guard lock(mu_);
  try {
    if (j.at("version").get<int>() != 1) {
      throw Error(Errc::parse_error, "unsupported overlay state version");
    }
    issued_ = j.at("issued").get<std::uint64_t>();
    config_.uid_seed = j.at("uid_seed").get<std::uint64_t>();
    const auto& pool = j.at("pool");
    config_.pool.control_port = pool.at("control_port").get<std::uint16_t>();
    config_.pool.first_data_port = pool.at("first_data_port").get<std::uint16_t>();
    config_.pool.last_data_port = pool.at("last_data_port").get<std::uint16_t>();
    config_.allowlist = j.at("allowlist").get<std::set<std::string>>();
    sessions_.clear();
    pools_.clear();
    rr_cursor_.clear();
    for (const auto& js : j.at("sessions")) {
      Session s;
      s.uid = js.at("uid").get<std::string>();
      s.num_conn = js.at("num_conn").get<std::uint32_t>();
      s.state = parse_state(js.at("state").get<std::string>());
      s.consumer_proxy = Endpoint::parse(js.at("consumer_proxy").get<std::string>());
      s.consumer_control =
          Endpoint::parse(js.at("consumer_control").get<std::string>());
      if (js.contains("producer_proxy")) {
        s.producer_proxy =
            Endpoint::parse(js.at("producer_proxy").get<std::string>());
        s.producer_control =
            Endpoint::parse(js.at("producer_control").get<std::string>());
      }
      for (const auto& e : js.at("connection_map")) {
        s.connection_map.push_back(
            {e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>()});
      }
      s.carried.assign(s.connection_map.size(), 0);
      if (s.state != SessionState::released) {
        pools_[s.consumer_control].used.insert(s.consumer_proxy.port);
        if (s.producer_proxy) {
          pools_[*s.producer_control].used.insert(s.producer_proxy->port);
        }
      }
      auto uid = s.uid;
      sessions_.insert_or_assign(std::move(uid), std::move(s));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, fmt::format("overlay state: {}", e.what()));
  }
}

}  // namespace streamsim
