#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "streamsim/units.hpp"
#include "streamsim/workload.hpp"

namespace streamsim {

inline constexpr std::uint64_t kDefaultBrokerMemory = kGiB;

enum class OverflowPolicy { reject_publish };
enum class QueueKind { payload, control };
enum class ExchangeKind { direct, fanout };

struct QueueSpec {
  std::string name;
  std::uint64_t capacity_bytes = 0;
  OverflowPolicy overflow_policy = OverflowPolicy::reject_publish;
  QueueKind kind = QueueKind::payload;

  bool operator==(const QueueSpec&) const = default;
};

struct Binding {
  std::string routing_key;  // empty for fanout
  std::string queue;

  bool operator==(const Binding&) const = default;
};

struct Exchange {
  std::string name;
  ExchangeKind kind = ExchangeKind::direct;
  std::vector<Binding> bindings;
};

using ConsumerId = std::uint32_t;
using DeliveryTag = std::uint64_t;

/// Snapshot of a consumer registration. The broker owns the live state;
/// `unacked` reflects the moment the handle was produced.
struct ConsumerHandle {
  ConsumerId consumer_id = 0;
  std::string queue;
  std::uint32_t prefetch = 0;
  std::uint32_t unacked = 0;
};

struct Delivery {
  ConsumerHandle consumer;
  Message message;
  DeliveryTag tag = 0;
};

enum class PublishOutcome { confirm, reject };

struct QueueStats {
  std::string name;
  std::uint64_t capacity_bytes = 0;
  std::uint64_t ready = 0;        // enqueued, not yet delivered
  std::uint64_t unacked = 0;      // delivered, not yet settled
  std::uint64_t bytes = 0;        // ready + unacked payload bytes
  std::uint64_t enqueued = 0;     // confirmed publishes routed here
  std::uint64_t settled = 0;
  std::uint32_t consumers = 0;
};

struct BrokerStats {
  std::uint64_t confirmed_publishes = 0;  // per matched queue
  std::uint64_t rejected_publishes = 0;
  std::uint64_t in_queue = 0;
  std::uint64_t unacked_in_flight = 0;
  std::uint64_t settled = 0;

  bool operator==(const BrokerStats&) const = default;
};

/// Embedded broker with classic bounded queues, direct/fanout routing,
/// prefetch-limited round-robin dispatch, reject-publish overflow and
/// cumulative acknowledgements.
///
/// Every public operation runs under one lock, so callers on any thread see
/// a single serialized event stream and never a partially applied operation.
class Broker {
 public:
  explicit Broker(std::uint64_t memory_budget_bytes = kDefaultBrokerMemory);

  Broker(const Broker&) = delete;
  Broker& operator=(const Broker&) = delete;

  std::uint64_t memory_budget() const noexcept { return budget_; }
  /// 80% of the budget is reserved for payload queues, 20% for control.
  std::uint64_t payload_budget() const noexcept;
  std::uint64_t control_budget() const noexcept;

  /// Idempotent for an identical spec. Throws budget_exceeded or
  /// name_conflict.
  void declare_queue(const QueueSpec& spec);

  void declare_exchange(const std::string& name, ExchangeKind kind);

  /// For fanout exchanges the routing key is ignored.
  void bind(const std::string& exchange, const std::string& queue,
            const std::string& routing_key = {});

  /// All-or-nothing: either every matched queue takes the message or none
  /// changes. Throws unroutable when nothing matches.
  PublishOutcome publish(std::string_view exchange,
                         std::string_view routing_key, Message msg);

  /// Throws unknown_queue, or invalid_argument for prefetch == 0.
  ConsumerHandle register_consumer(std::string_view queue,
                                   std::uint32_t prefetch);

  /// Hands each ready message to the next consumer in its queue's rotation
  /// that is below its prefetch ceiling. Saturated consumers are skipped but
  /// stay in the rotation.
  std::vector<Delivery> deliver_next();

  /// Settles every outstanding delivery of `handle` with tag <= up_to.
  /// Throws unknown_tag when up_to is not outstanding.
  void ack_batch(const ConsumerHandle& handle, DeliveryTag up_to);

  ConsumerHandle consumer(ConsumerId id) const;
  QueueStats queue_stats(std::string_view queue) const;
  std::vector<QueueStats> all_queue_stats() const;
  BrokerStats stats() const;
  Exchange exchange(std::string_view name) const;

 private:
  struct Outstanding {
    DeliveryTag tag;
    std::uint64_t bytes;
  };

  struct QueueState {
    QueueSpec spec;
    std::deque<Message> ready;
    std::uint64_t bytes = 0;
    std::uint64_t unacked = 0;
    std::uint64_t enqueued = 0;
    std::uint64_t settled = 0;
    std::vector<ConsumerId> rotation;
    std::size_t cursor = 0;
  };

  struct ConsumerState {
    ConsumerId id = 0;
    std::size_t queue_index = 0;
    std::uint32_t prefetch = 0;
    DeliveryTag next_tag = 1;
    std::deque<Outstanding> outstanding;
  };

  QueueState& queue_at(std::string_view name);
  const QueueState& queue_at(std::string_view name) const;
  ConsumerHandle handle_of(const ConsumerState& c) const;
  QueueStats stats_of(const QueueState& q) const;

  mutable std::mutex mu_;
  std::uint64_t budget_;
  std::uint64_t payload_declared_ = 0;
  std::uint64_t control_declared_ = 0;
  std::uint64_t rejected_ = 0;
  std::vector<QueueState> queues_;  // declaration order drives dispatch order
  std::unordered_map<std::string, std::size_t> queue_index_;
  std::unordered_map<std::string, Exchange> exchanges_;
  std::vector<ConsumerState> consumers_;
};

}  // namespace streamsim
