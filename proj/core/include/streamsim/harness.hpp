#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "streamsim/broker.hpp"
#include "streamsim/netpath.hpp"
#include "streamsim/units.hpp"
#include "streamsim/workload.hpp"

namespace streamsim {

enum class Pattern { work_sharing, work_sharing_feedback, broadcast_gather };
enum class Transport { sim, loopback };

std::string_view to_string(Pattern p) noexcept;
std::string_view to_string(Transport t) noexcept;
Pattern parse_pattern(std::string_view text);
Transport parse_transport(std::string_view text);

inline constexpr std::uint64_t kDefaultMaxMessages = 128'000;
/// Consumers with deliveries pending acknowledgement flush them after this
/// much idle time even if the batch is not full.
inline constexpr Nanos kAckFlushInterval{1'000'000};
/// Retry policy for rejected publishes.
inline constexpr Nanos kBackoffInitial{1'000'000};
inline constexpr Nanos kBackoffCap{100'000'000};
/// Unconfirmed publishes a loopback producer may have outstanding.
inline constexpr std::uint32_t kLoopbackConfirmWindow = 128;

struct ExperimentConfig {
  std::string name;
  Architecture architecture = Architecture::dts;
  std::optional<ProxyKind> proxy_kind;
  std::uint32_t num_conn = 1;
  Pattern pattern = Pattern::work_sharing;
  WorkloadProfile workload = profile_lookup("dstream");
  std::uint32_t producers = 1;
  std::uint32_t consumers = 1;
  std::uint64_t message_count = kDefaultMaxMessages;
  /// Optional duration-based stop; producers stop at whichever of
  /// message_count / duration comes first, then the run drains.
  std::optional<Nanos> duration;
  std::uint64_t max_message_count = kDefaultMaxMessages;
  std::uint32_t prefetch = 128;
  std::uint32_t ack_batch = 16;
  std::uint32_t work_queue_count = 2;
  Transport transport = Transport::sim;
  std::uint64_t seed = 1;
  std::uint32_t repetitions = 3;
  std::uint64_t broker_memory = kDefaultBrokerMemory;
  /// Consumer compute time per request before replying.
  Nanos processing_time{0};
  std::uint32_t reply_bytes = static_cast<std::uint32_t>(MessageHeader::kSize);
  /// Wall-clock budget for a single run.
  Nanos timeout{600'000'000'000};
  bool mss_consumer_full_chain = false;
  std::map<std::string, HopOverride> hop_overrides;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Throws Error(invalid_config) describing the first violated invariant.
void validate(const ExperimentConfig& config);

PathOptions path_options(const ExperimentConfig& config);

/// Number of requests producer `producer` sends (equal share, remainder to
/// the lowest ids).
std::uint64_t producer_quota(const ExperimentConfig& config,
                             std::uint32_t producer);

struct QueuePlan {
  std::string work_exchange;  // direct, keyed by queue name
  std::vector<std::string> work_queues;
  std::string reply_exchange;  // direct, keyed by producer routing key
  std::map<std::uint32_t, std::string> reply_queues;
  std::optional<std::string> fanout_request;
  std::vector<std::string> broadcast_queues;  // one per consumer
  std::optional<std::string> gather_exchange;
  std::optional<std::string> gather_queue;

  /// Queues consumer `consumer` subscribes to.
  std::vector<std::string> consumer_queues(std::uint32_t consumer,
                                           std::uint32_t consumers) const;
  /// Routing key that delivers replies to `producer`.
  static std::string reply_key(std::uint32_t producer);
};

/// Throws Error(invalid_config) for an invalid config.
QueuePlan plan_queues(const ExperimentConfig& config);

/// Declares the plan's exchanges and queues. Payload queues share 80% of the
/// broker budget, reply/gather queues share the remaining 20%.
void declare_plan(Broker& broker, const QueuePlan& plan,
                  const ExperimentConfig& config);

struct DeliveryEvent {
  MessageId id;
  std::uint32_t consumer = 0;
  Nanos publish_ts{0};
  Nanos deliver_ts{0};
  std::optional<Nanos> reply_ts;
  /// Producer whose reply queue delivered the reply.
  std::optional<std::uint32_t> reply_receiver;

  bool operator==(const DeliveryEvent&) const = default;
};

struct RunRecord {
  Pattern pattern = Pattern::work_sharing;
  Transport transport = Transport::sim;
  std::uint32_t producers = 0;
  std::uint32_t consumers = 0;
  /// One entry per (request, consumer) delivery, ordered by delivery.
  std::vector<DeliveryEvent> events;
  /// Broadcast only: time from publish to the last gathered reply, per request.
  std::vector<Nanos> gather_complete;
  Nanos duration{0};
  std::uint64_t confirmed_requests = 0;
  std::uint64_t rejected_publishes = 0;
  std::uint64_t misrouted_replies = 0;
  std::vector<std::uint64_t> per_consumer_counts;
  Nanos last_consumer_registered{0};
  Nanos first_publish{0};
  /// Messages carried per overlay connection_map entry (PRS only).
  std::vector<std::uint64_t> tunnel_connection_counts;
  /// Digest of the discrete-event trace (sim only).
  std::uint64_t trace_digest = 0;
  BrokerStats broker_stats;

  bool operator==(const RunRecord&) const = default;
};

bool has_reply_leg(Pattern p) noexcept;

/// Runs one repetition. Throws InfeasibleConfiguration when a hop refuses the
/// required connections, Error(timeout) when the wall budget runs out, and
/// Error(missing_reply)/Error(misrouted_reply) on pattern violations.
RunRecord run_experiment(const ExperimentConfig& config);

RunRecord run_sim(const ExperimentConfig& config);
RunRecord run_loopback(const ExperimentConfig& config);

}  // namespace streamsim
