#pragma once

#include <memory>
#include <string>
#include <vector>

#include "streamsim/harness.hpp"
#include "streamsim/netpath.hpp"
#include "streamsim/overlay.hpp"

namespace streamsim::detail {

/// Connections every client holds for the lifetime of a run. Consumers
/// acquire first because they start first.
struct PathLease {
  std::unique_ptr<ConnectionPool> pool;
  std::vector<Connection> connections;
};

/// Throws InfeasibleConfiguration when any hop refuses a connection.
PathLease lease_connections(const PathModel& path,
                            const ExperimentConfig& config);

/// Established overlay session backing a PRS run.
struct TunnelSession {
  std::unique_ptr<ControlPlane> control;
  std::string uid;
};

TunnelSession establish_tunnel(const ExperimentConfig& config);

/// Routing key producers use for their `seq`-th request.
std::string request_routing_key(const QueuePlan& plan, std::uint64_t seq);
/// Exchange that carries requests for the configured pattern.
std::string request_exchange(const QueuePlan& plan);
/// Exchange and routing key that carry a reply to `producer`.
std::pair<std::string, std::string> reply_route(const QueuePlan& plan,
                                                std::uint32_t producer);

/// Post-run checks shared by both transports. Throws missing_reply or
/// misrouted_reply.
void check_completeness(const ExperimentConfig& config, const RunRecord& rec,
                        bool stopped_by_duration);

}  // namespace streamsim::detail
