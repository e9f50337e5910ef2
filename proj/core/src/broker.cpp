#include "streamsim/broker.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "streamsim/error.hpp"

namespace streamsim {
namespace {

// floor(budget * numerator / 5) without overflowing for numerator <= 5.
std::uint64_t fifths(std::uint64_t budget, std::uint64_t numerator) {
  return budget / 5 * numerator + budget % 5 * numerator / 5;
}

bool fits_fraction(std::uint64_t declared, std::uint64_t extra,
                   std::uint64_t budget, std::uint64_t numerator) {
  return extra <= fifths(budget, numerator) - declared;
}

}  // namespace

Broker::Broker(std::uint64_t memory_budget_bytes)
    : budget_(memory_budget_bytes) {
  if (budget_ == 0) {
    throw Error(Errc::invalid_argument, "broker memory budget must be > 0");
  }
}

std::uint64_t Broker::payload_budget() const noexcept {
  return fifths(budget_, 4);
}

std::uint64_t Broker::control_budget() const noexcept {
  return fifths(budget_, 1);
}

Broker::QueueState& Broker::queue_at(std::string_view name) {
  auto it = queue_index_.find(std::string(name));
  if (it == queue_index_.end()) {
    throw Error(Errc::unknown_queue, fmt::format("unknown queue '{}'", name));
  }
  return queues_[it->second];
}

const Broker::QueueState& Broker::queue_at(std::string_view name) const {
  auto it = queue_index_.find(std::string(name));
  if (it == queue_index_.end()) {
    throw Error(Errc::unknown_queue, fmt::format("unknown queue '{}'", name));
  }
  return queues_[it->second];
}

void Broker::declare_queue(const QueueSpec& spec) {
  std::lock_guard lock(mu_);
  if (spec.name.empty()) {
    throw Error(Errc::invalid_argument, "queue name must not be empty");
  }
  if (spec.capacity_bytes == 0) {
    throw Error(Errc::invalid_argument,
                fmt::format("queue '{}': capacity_bytes must be > 0",
                            spec.name));
  }
  if (auto it = queue_index_.find(spec.name); it != queue_index_.end()) {
    if (queues_[it->second].spec == spec) return;
    throw Error(Errc::name_conflict,
                fmt::format("queue '{}' already declared with a different spec",
                            spec.name));
  }
  if (spec.kind == QueueKind::payload) {
    if (!fits_fraction(payload_declared_, spec.capacity_bytes, budget_, 4)) {
      throw Error(Errc::budget_exceeded,
                  fmt::format("queue '{}': payload queues would exceed 80% of "
                              "the {} byte budget",
                              spec.name, budget_));
    }
    payload_declared_ += spec.capacity_bytes;
  } else {
    if (!fits_fraction(control_declared_, spec.capacity_bytes, budget_, 1)) {
      throw Error(Errc::budget_exceeded,
                  fmt::format("queue '{}': control queues would exceed 20% of "
                              "the {} byte budget",
                              spec.name, budget_));
    }
    control_declared_ += spec.capacity_bytes;
  }
  queue_index_.emplace(spec.name, queues_.size());
  QueueState state;
  state.spec = spec;
  queues_.push_back(std::move(state));
}

void Broker::declare_exchange(const std::string& name, ExchangeKind kind) {
  std::lock_guard lock(mu_);
  if (auto it = exchanges_.find(name); it != exchanges_.end()) {
    if (it->second.kind == kind) return;
    throw Error(Errc::name_conflict,
                fmt::format("exchange '{}' already declared with another kind",
                            name));
  }
  exchanges_.emplace(name, Exchange{name, kind, {}});
}

void Broker::bind(const std::string& exchange, const std::string& queue,
                  const std::string& routing_key) {
  std::lock_guard lock(mu_);
  auto it = exchanges_.find(exchange);
  if (it == exchanges_.end()) {
    throw Error(Errc::unknown_exchange,
                fmt::format("unknown exchange '{}'", exchange));
  }
  (void)queue_at(queue);
  Binding b{it->second.kind == ExchangeKind::fanout ? std::string{}
                                                      : routing_key,
            queue};
  auto& bindings = it->second.bindings;
  if (std::find(bindings.begin(), bindings.end(), b) == bindings.end()) {
    bindings.push_back(std::move(b));
  }
}

PublishOutcome Broker::publish(std::string_view exchange,
                               std::string_view routing_key, Message msg) {
  std::lock_guard lock(mu_);
  auto it = exchanges_.find(std::string(exchange));
  if (it == exchanges_.end()) {
    throw Error(Errc::unknown_exchange,
                fmt::format("unknown exchange '{}'", exchange));
  }
  std::vector<std::size_t> targets;
  for (const auto& b : it->second.bindings) {
    if (it->second.kind == ExchangeKind::fanout || b.routing_key == routing_key) {
      targets.push_back(queue_index_.at(b.queue));
    }
  }
  if (targets.empty()) {
    throw Error(Errc::unroutable,
                fmt::format("no binding on '{}' matches routing key '{}'",
                            exchange, routing_key));
  }
  for (auto qi : targets) {
    const auto& q = queues_[qi];
    if (q.bytes + msg.size_bytes > q.spec.capacity_bytes) {
      ++rejected_;
      return PublishOutcome::reject;
    }
  }
  for (auto qi : targets) {
    auto& q = queues_[qi];
    q.bytes += msg.size_bytes;
    ++q.enqueued;
    q.ready.push_back(msg);
  }
  return PublishOutcome::confirm;
}

ConsumerHandle Broker::register_consumer(std::string_view queue,
                                         std::uint32_t prefetch) {
  std::lock_guard lock(mu_);
  if (prefetch == 0) {
    throw Error(Errc::invalid_argument,
                "prefetch must be >= 1 (unbounded prefetch is not supported)");
  }
  auto qi = queue_index_.find(std::string(queue));
  if (qi == queue_index_.end()) {
    throw Error(Errc::unknown_queue, fmt::format("unknown queue '{}'", queue));
  }
  ConsumerState c;
  c.id = static_cast<ConsumerId>(consumers_.size());
  c.queue_index = qi->second;
  c.prefetch = prefetch;
  queues_[qi->second].rotation.push_back(c.id);
  consumers_.push_back(c);
  return handle_of(consumers_.back());
}

std::vector<Delivery> Broker::deliver_next() {
  std::lock_guard lock(mu_);
  std::vector<Delivery> out;
  for (auto& q : queues_) {
    const std::size_t n = q.rotation.size();
    while (!q.ready.empty() && n > 0) {
      std::size_t chosen = n;
      for (std::size_t k = 0; k < n; ++k) {
        std::size_t idx = (q.cursor + k) % n;
        const auto& c = consumers_[q.rotation[idx]];
        if (c.outstanding.size() < c.prefetch) {
          chosen = idx;
          break;
        }
      }
      if (chosen == n) break;
      auto& c = consumers_[q.rotation[chosen]];
      q.cursor = (chosen + 1) % n;

      Delivery d;
      d.message = std::move(q.ready.front());
      q.ready.pop_front();
      d.tag = c.next_tag++;
      c.outstanding.push_back({d.tag, d.message.size_bytes});
      ++q.unacked;
      d.consumer = handle_of(c);
      out.push_back(std::move(d));
    }
  }
  return out;
}

void Broker::ack_batch(const ConsumerHandle& handle, DeliveryTag up_to) {
  std::lock_guard lock(mu_);
  if (handle.consumer_id >= consumers_.size()) {
    throw Error(Errc::unknown_tag,
                fmt::format("unknown consumer {}", handle.consumer_id));
  }
  auto& c = consumers_[handle.consumer_id];
  bool outstanding =
      std::any_of(c.outstanding.begin(), c.outstanding.end(),
                  [&](const Outstanding& o) { return o.tag == up_to; });
  if (!outstanding) {
    throw Error(Errc::unknown_tag,
                fmt::format("consumer {}: delivery tag {} is not outstanding",
                            c.id, up_to));
  }
  auto& q = queues_[c.queue_index];
  while (!c.outstanding.empty() && c.outstanding.front().tag <= up_to) {
    q.bytes -= c.outstanding.front().bytes;
    --q.unacked;
    ++q.settled;
    c.outstanding.pop_front();
  }
}

ConsumerHandle Broker::handle_of(const ConsumerState& c) const {
  return ConsumerHandle{c.id, queues_[c.queue_index].spec.name, c.prefetch,
                        static_cast<std::uint32_t>(c.outstanding.size())};
}

ConsumerHandle Broker::consumer(ConsumerId id) const {
  std::lock_guard lock(mu_);
  if (id >= consumers_.size()) {
    throw Error(Errc::invalid_argument, fmt::format("unknown consumer {}", id));
  }
  return handle_of(consumers_[id]);
}

QueueStats Broker::stats_of(const QueueState& q) const {
  QueueStats s;
  s.name = q.spec.name;
  s.capacity_bytes = q.spec.capacity_bytes;
  s.ready = q.ready.size();
  s.unacked = q.unacked;
  s.bytes = q.bytes;
  s.enqueued = q.enqueued;
  s.settled = q.settled;
  s.consumers = static_cast<std::uint32_t>(q.rotation.size());
  return s;
}

QueueStats Broker::queue_stats(std::string_view queue) const {
  std::lock_guard lock(mu_);
  return stats_of(queue_at(queue));
}

std::vector<QueueStats> Broker::all_queue_stats() const {
  std::lock_guard lock(mu_);
  std::vector<QueueStats> out;
  out.reserve(queues_.size());
  for (const auto& q : queues_) out.push_back(stats_of(q));
  return out;
}

BrokerStats Broker::stats() const {
  std::lock_guard lock(mu_);
  BrokerStats s;
  s.rejected_publishes = rejected_;
  for (const auto& q : queues_) {
    s.confirmed_publishes += q.enqueued;
    s.in_queue += q.ready.size();
    s.unacked_in_flight += q.unacked;
    s.settled += q.settled;
  }
  return s;
}

Exchange Broker::exchange(std::string_view name) const {
  std::lock_guard lock(mu_);
  auto it = exchanges_.find(std::string(name));
  if (it == exchanges_.end()) {
    throw Error(Errc::unknown_exchange,
                fmt::format("unknown exchange '{}'", name));
  }
  return it->second;
}

}  // namespace streamsim
