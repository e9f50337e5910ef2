// Virtual-clock execution of the three messaging patterns. Producers,
// consumers and the broker are cooperative tasks on one EventLoop; the four
// link chains (producer/consumer side x toward/away from the broker) model
// shared store-and-forward hops.

#include <algorithm>
#include <chrono>
#include <optional>
#include <unordered_map>

#include <fmt/format.h>

#include "harness_internal.hpp"
#include "streamsim/error.hpp"
#include "streamsim/event_loop.hpp"
#include "streamsim/harness.hpp"

namespace streamsim {
namespace {

struct EventKey {
  std::uint32_t producer;
  std::uint64_t sequence;
  std::uint32_t consumer;

  bool operator==(const EventKey&) const = default;
};

struct EventKeyHash {
  std::size_t operator()(const EventKey& k) const noexcept {
    std::uint64_t h = k.sequence * 0x9e3779b97f4a7c15ull;
    h ^= (static_cast<std::uint64_t>(k.producer) << 32 | k.consumer) +
         0x7f4a7c159e3779b9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

struct AckState {
  ConsumerHandle handle;
  DeliveryTag last_tag = 0;
  std::uint32_t pending = 0;
  bool flush_scheduled = false;
};

struct ProducerSim {
  std::uint32_t id = 0;
  std::uint64_t quota = 0;
  std::uint64_t next_seq = 0;
  Nanos last_send{0};
  Nanos backoff = kBackoffInitial;
  bool stopped_by_duration = false;
  std::optional<std::size_t> reply_sub;  // index into acks_
};

struct ConsumerSim {
  std::uint32_t id = 0;
  Nanos busy_until{0};
  Nanos backoff = kBackoffInitial;
};

struct Owner {
  bool is_producer = false;
  std::uint32_t index = 0;
  std::size_t ack_index = 0;
};

class SimRun {
 public:
  explicit SimRun(const ExperimentConfig& config)
      : cfg_(config),
        plan_(plan_queues(config)),
        path_(build_path(config.architecture, path_options(config))),
        loop_(clock_),
        broker_(config.broker_memory),
        prod_up_(path_.chain(Side::producer)),
        prod_down_(path_.chain(Side::producer)),
        cons_up_(path_.chain(Side::consumer)),
        cons_down_(path_.chain(Side::consumer)),
        interval_(to_nanos(pacing_interval(config.workload, config.producers))),
        request_exchange_(detail::request_exchange(plan_)) {}

  RunRecord run();

 private:
  void send(std::uint32_t p);
  void publish_request(std::uint32_t p, Message msg);
  void on_publish(std::uint32_t p, Message msg);
  void on_confirm(std::uint32_t p, Message msg, PublishOutcome outcome);
  void dispatch();
  void on_request(std::uint32_t c, std::size_t ack, Delivery d);
  void send_reply(std::uint32_t c, Message reply);
  void on_reply_publish(std::uint32_t c, Message reply);
  void on_reply(std::uint32_t p, std::size_t ack, Delivery d);
  void note_delivery(std::size_t ack, DeliveryTag tag, LinkChain& back);
  void send_ack(std::size_t ack, LinkChain& back);

  const ExperimentConfig& cfg_;
  QueuePlan plan_;
  PathModel path_;
  VirtualClock clock_;
  EventLoop loop_;
  Broker broker_;
  LinkChain prod_up_;
  LinkChain prod_down_;
  LinkChain cons_up_;
  LinkChain cons_down_;
  Nanos interval_;
  std::string request_exchange_;
  std::optional<detail::TunnelSession> tunnel_;

  std::vector<ProducerSim> producers_;
  std::vector<ConsumerSim> consumers_;
  std::vector<AckState> acks_;
  std::vector<Owner> owners_;  // indexed by broker ConsumerId
  std::unordered_map<EventKey, std::size_t, EventKeyHash> event_index_;
  std::vector<std::uint32_t> gathered_;
  RunRecord rec_;
  bool first_publish_seen_ = false;
};

RunRecord SimRun::run() {
  auto lease = detail::lease_connections(path_, cfg_);
  if (path_.architecture == Architecture::prs) {
    tunnel_ = detail::establish_tunnel(cfg_);
  }
  declare_plan(broker_, plan_, cfg_);

  rec_.pattern = cfg_.pattern;
  rec_.transport = Transport::sim;
  rec_.producers = cfg_.producers;
  rec_.consumers = cfg_.consumers;
  rec_.per_consumer_counts.assign(cfg_.consumers, 0);

  auto subscribe = [&](const std::string& queue, Owner owner) {
    auto handle = broker_.register_consumer(queue, cfg_.prefetch);
    owner.ack_index = acks_.size();
    acks_.push_back(AckState{handle});
    if (owners_.size() <= handle.consumer_id) {
      owners_.resize(handle.consumer_id + 1);
    }
    owners_[handle.consumer_id] = owner;
    return owner.ack_index;
  };

  // Consumers register before any producer publishes.
  for (std::uint32_t c = 0; c < cfg_.consumers; ++c) {
    consumers_.push_back(ConsumerSim{c});
    for (const auto& q : plan_.consumer_queues(c, cfg_.consumers)) {
      subscribe(q, Owner{false, c, 0});
    }
  }
  rec_.last_consumer_registered = clock_.now();

  for (std::uint32_t p = 0; p < cfg_.producers; ++p) {
    ProducerSim ps;
    ps.id = p;
    ps.quota = producer_quota(cfg_, p);
    if (!plan_.reply_queues.empty()) {
      ps.reply_sub = subscribe(plan_.reply_queues.at(p), Owner{true, p, 0});
    } else if (plan_.gather_queue) {
      ps.reply_sub = subscribe(*plan_.gather_queue, Owner{true, p, 0});
    }
    producers_.push_back(ps);
  }
  if (cfg_.pattern == Pattern::broadcast_gather) {
    gathered_.assign(producers_[0].quota, 0);
    rec_.gather_complete.assign(producers_[0].quota, Nanos{0});
  }

  for (std::uint32_t p = 0; p < cfg_.producers; ++p) {
    loop_.schedule_at(clock_.now(), "send", [this, p] { send(p); });
  }

  auto budget = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      cfg_.timeout);
  loop_.run(budget);

  rec_.duration = clock_.now();
  rec_.broker_stats = broker_.stats();
  rec_.trace_digest = loop_.trace_digest();
  if (tunnel_) {
    rec_.tunnel_connection_counts = tunnel_->control->find(tunnel_->uid)->carried;
  }
  bool by_duration =
      std::any_of(producers_.begin(), producers_.end(),
                  [](const ProducerSim& p) { return p.stopped_by_duration; });
  detail::check_completeness(cfg_, rec_, by_duration);
  return rec_;
}

void SimRun::send(std::uint32_t p) {
  auto& ps = producers_[p];
  if (ps.next_seq >= ps.quota) return;
  const Nanos now = clock_.now();
  if (cfg_.duration && now >= *cfg_.duration) {
    ps.stopped_by_duration = true;
    return;
  }
  if (!first_publish_seen_) {
    first_publish_seen_ = true;
    rec_.first_publish = now;
  }
  ps.last_send = now;
  auto msg = make_sized_message({ps.id, ps.next_seq}, MessageKind::request,
                                cfg_.workload.payload_bytes, now);
  if (tunnel_) tunnel_->control->assign_connection(tunnel_->uid);
  publish_request(p, std::move(msg));
}

void SimRun::publish_request(std::uint32_t p, Message msg) {
  Nanos arrival = prod_up_.transmit(msg.size_bytes, clock_.now());
  loop_.schedule_at(arrival, "publish", [this, p, msg = std::move(msg)] {
    on_publish(p, msg);
  });
}

void SimRun::on_publish(std::uint32_t p, Message msg) {
  auto key = detail::request_routing_key(plan_, msg.id.sequence);
  auto outcome = broker_.publish(request_exchange_, key, msg);
  dispatch();
  loop_.schedule_after(prod_down_.control_latency(), "confirm",
                       [this, p, msg = std::move(msg), outcome] {
                         on_confirm(p, msg, outcome);
                       });
}

void SimRun::on_confirm(std::uint32_t p, Message msg, PublishOutcome outcome) {
  auto& ps = producers_[p];
  if (outcome == PublishOutcome::reject) {
    ++rec_.rejected_publishes;
    Nanos wait = ps.backoff;
    ps.backoff = std::min(ps.backoff * 2, kBackoffCap);
    loop_.schedule_after(wait, "retry", [this, p, msg = std::move(msg)] {
      publish_request(p, msg);
    });
    return;
  }
  ++rec_.confirmed_requests;
  ps.backoff = kBackoffInitial;
  ++ps.next_seq;
  Nanos next = std::max(clock_.now(), ps.last_send + interval_);
  loop_.schedule_at(next, "send", [this, p] { send(p); });
}

void SimRun::dispatch() {
  for (auto& d : broker_.deliver_next()) {
    const Owner owner = owners_[d.consumer.consumer_id];
    const Nanos now = clock_.now();
    if (owner.is_producer) {
      Nanos arrival = prod_down_.transmit(d.message.size_bytes, now);
      loop_.schedule_at(arrival, "deliver-reply",
                        [this, owner, d = std::move(d)]() mutable {
                          on_reply(owner.index, owner.ack_index, std::move(d));
                        });
    } else {
      Nanos arrival = cons_down_.transmit(d.message.size_bytes, now);
      loop_.schedule_at(arrival, "deliver",
                        [this, owner, d = std::move(d)]() mutable {
                          on_request(owner.index, owner.ack_index, std::move(d));
                        });
    }
  }
}

void SimRun::on_request(std::uint32_t c, std::size_t ack, Delivery d) {
  auto& cs = consumers_[c];
  const Nanos now = clock_.now();
  const auto& m = d.message;
  DeliveryEvent ev;
  ev.id = m.id;
  ev.consumer = c;
  ev.publish_ts = m.created_at;
  ev.deliver_ts = now;
  if (has_reply_leg(cfg_.pattern)) {
    event_index_.emplace(EventKey{m.id.producer, m.id.sequence, c},
                         rec_.events.size());
  }
  rec_.events.push_back(ev);
  ++rec_.per_consumer_counts[c];

  Nanos done = std::max(now, cs.busy_until) + cfg_.processing_time;
  cs.busy_until = done;
  DeliveryTag tag = d.tag;
  if (!has_reply_leg(cfg_.pattern)) {
    loop_.schedule_at(done, "processed",
                      [this, ack, tag] { note_delivery(ack, tag, cons_up_); });
    return;
  }
  auto reply = make_sized_message(m.id, MessageKind::reply, cfg_.reply_bytes,
                                  m.created_at, c);
  // Reply first, then acknowledge the request.
  loop_.schedule_at(done, "processed",
                    [this, c, ack, tag, reply = std::move(reply)] {
                      send_reply(c, reply);
                      note_delivery(ack, tag, cons_up_);
                    });
}

void SimRun::send_reply(std::uint32_t c, Message reply) {
  Nanos arrival = cons_up_.transmit(reply.size_bytes, clock_.now());
  loop_.schedule_at(arrival, "reply-publish",
                    [this, c, reply = std::move(reply)] {
                      on_reply_publish(c, reply);
                    });
}

void SimRun::on_reply_publish(std::uint32_t c, Message reply) {
  auto [exchange, key] = detail::reply_route(plan_, reply.id.producer);
  auto outcome = broker_.publish(exchange, key, reply);
  dispatch();
  auto& cs = consumers_[c];
  if (outcome == PublishOutcome::confirm) {
    cs.backoff = kBackoffInitial;
    return;
  }
  ++rec_.rejected_publishes;
  Nanos wait = cons_down_.control_latency() + cs.backoff;
  cs.backoff = std::min(cs.backoff * 2, kBackoffCap);
  loop_.schedule_after(wait, "reply-retry", [this, c, reply = std::move(reply)] {
    send_reply(c, reply);
  });
}

void SimRun::on_reply(std::uint32_t p, std::size_t ack, Delivery d) {
  const Nanos now = clock_.now();
  const auto& m = d.message;
  if (m.id.producer != p) {
    ++rec_.misrouted_replies;
  } else {
    auto it = event_index_.find(EventKey{m.id.producer, m.id.sequence, m.responder});
    if (it == event_index_.end()) {
      throw Error(Errc::protocol_error, "reply for a request never delivered");
    }
    auto& ev = rec_.events[it->second];
    ev.reply_ts = now;
    ev.reply_receiver = p;
    if (cfg_.pattern == Pattern::broadcast_gather) {
      auto seq = m.id.sequence;
      if (++gathered_[seq] == cfg_.consumers) {
        rec_.gather_complete[seq] = now - m.created_at;
      }
    }
  }
  note_delivery(ack, d.tag, prod_up_);
}

void SimRun::note_delivery(std::size_t ack, DeliveryTag tag, LinkChain& back) {
  auto& a = acks_[ack];
  a.last_tag = std::max(a.last_tag, tag);
  ++a.pending;
  if (a.pending >= cfg_.ack_batch) {
    send_ack(ack, back);
    return;
  }
  if (!a.flush_scheduled) {
    a.flush_scheduled = true;
    loop_.schedule_after(kAckFlushInterval, "ack-flush", [this, ack, &back] {
      auto& s = acks_[ack];
      s.flush_scheduled = false;
      if (s.pending > 0) send_ack(ack, back);
    });
  }
}

void SimRun::send_ack(std::size_t ack, LinkChain& back) {
  auto& a = acks_[ack];
  DeliveryTag tag = a.last_tag;
  a.pending = 0;
  loop_.schedule_after(back.control_latency(), "ack", [this, ack, tag] {
    broker_.ack_batch(acks_[ack].handle, tag);
    dispatch();
  });
}

}  // namespace

RunRecord run_sim(const ExperimentConfig& config) {
  validate(config);
  SimRun run(config);
  return run.run();
}

}  // namespace streamsim
