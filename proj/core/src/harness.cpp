#include "streamsim/harness.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "harness_internal.hpp"
#include "streamsim/error.hpp"

namespace streamsim {

std::string_view to_string(Pattern p) noexcept {
  switch (p) {
    case Pattern::work_sharing: return "work_sharing";
    case Pattern::work_sharing_feedback: return "work_sharing_feedback";
    case Pattern::broadcast_gather: return "broadcast_gather";
  }
  return "?";
}

std::string_view to_string(Transport t) noexcept {
  return t == Transport::sim ? "sim" : "loopback";
}

Pattern parse_pattern(std::string_view text) {
  if (text == "work_sharing") return Pattern::work_sharing;
  if (text == "work_sharing_feedback") return Pattern::work_sharing_feedback;
  if (text == "broadcast_gather") return Pattern::broadcast_gather;
  throw Error(Errc::invalid_config,
              fmt::format("unknown pattern '{}' (work_sharing, "
                          "work_sharing_feedback, broadcast_gather)",
                          text));
}

Transport parse_transport(std::string_view text) {
  if (text == "sim") return Transport::sim;
  if (text == "loopback") return Transport::loopback;
  throw Error(Errc::invalid_config,
              fmt::format("unknown transport '{}' (sim, loopback)", text));
}

bool has_reply_leg(Pattern p) noexcept {
  return p != Pattern::work_sharing;
}

PathOptions path_options(const ExperimentConfig& config) {
  PathOptions o;
  o.proxy_kind = config.proxy_kind;
  o.num_conn = config.num_conn;
  o.overrides = config.hop_overrides;
  o.mss_consumer_full_chain = config.mss_consumer_full_chain;
  return o;
}

std::uint64_t producer_quota(const ExperimentConfig& config,
                             std::uint32_t producer) {
  std::uint64_t base = config.message_count / config.producers;
  std::uint64_t extra = config.message_count % config.producers;
  return base + (producer < extra ? 1 : 0);
}

namespace {

[[noreturn]] void invalid(const std::string& what) {
  throw Error(Errc::invalid_config, what);
}

std::uint64_t payload_queue_count(const ExperimentConfig& c) {
  return c.pattern == Pattern::broadcast_gather ? c.consumers
                                                : c.work_queue_count;
}

std::uint64_t control_queue_count(const ExperimentConfig& c) {
  switch (c.pattern) {
    case Pattern::work_sharing: return 0;
    case Pattern::work_sharing_feedback: return c.producers;
    case Pattern::broadcast_gather: return 1;
  }
  return 0;
}

}  // namespace

void validate(const ExperimentConfig& c) {
  try {
    validate(c.workload);
  } catch (const Error& e) {
    invalid(e.what());
  }
  if (c.producers < 1) invalid("producers must be >= 1");
  if (c.consumers < 1) invalid("consumers must be >= 1");
  if (c.pattern == Pattern::broadcast_gather && c.producers != 1) {
    invalid("broadcast_gather uses exactly one producer");
  }
  if (c.message_count < 1) invalid("message_count must be >= 1");
  if (c.message_count > c.max_message_count) {
    invalid(fmt::format("message_count {} exceeds the per-run cap of {}",
                        c.message_count, c.max_message_count));
  }
  if (c.duration && *c.duration <= Nanos{0}) invalid("duration must be > 0");
  if (c.prefetch < 1) invalid("prefetch must be >= 1");
  if (c.ack_batch < 1) invalid("ack_batch must be >= 1");
  if (c.ack_batch > c.prefetch) invalid("ack_batch must not exceed prefetch");
  if (c.work_queue_count < 1) invalid("work_queue_count must be >= 1");
  if (c.repetitions < 1) invalid("repetitions must be >= 1");
  if (c.reply_bytes < MessageHeader::kSize) {
    invalid(fmt::format("reply_bytes must be >= {}", MessageHeader::kSize));
  }
  if (c.processing_time < Nanos{0}) invalid("processing_time must be >= 0");
  if (c.timeout <= Nanos{0}) invalid("timeout must be > 0");
  if (c.broker_memory == 0) invalid("broker_memory must be > 0");
  try {
    (void)build_path(c.architecture, path_options(c));
  } catch (const Error& e) {
    invalid(e.what());
  }

  Broker probe(c.broker_memory);
  auto payload_cap = probe.payload_budget() / payload_queue_count(c);
  if (payload_cap < c.workload.payload_bytes) {
    invalid(fmt::format("each of the {} payload queues gets {} bytes, less "
                        "than one {} byte message",
                        payload_queue_count(c), payload_cap,
                        c.workload.payload_bytes));
  }
  if (auto n = control_queue_count(c); n > 0) {
    auto control_cap = probe.control_budget() / n;
    if (control_cap < c.reply_bytes) {
      invalid("reply queues are too small for one reply");
    }
  }
}

std::vector<std::string> QueuePlan::consumer_queues(
    std::uint32_t consumer, std::uint32_t consumers) const {
  if (!broadcast_queues.empty()) return {broadcast_queues.at(consumer)};
  std::vector<std::string> out;
  const auto q = static_cast<std::uint32_t>(work_queues.size());
  if (consumers >= q) {
    out.push_back(work_queues[consumer % q]);
  } else {
    for (std::uint32_t i = consumer; i < q; i += consumers) {
      out.push_back(work_queues[i]);
    }
  }
  return out;
}

std::string QueuePlan::reply_key(std::uint32_t producer) {
  return fmt::format("p{}", producer);
}

QueuePlan plan_queues(const ExperimentConfig& config) {
  validate(config);
  QueuePlan plan;
  if (config.pattern == Pattern::broadcast_gather) {
    plan.fanout_request = "broadcast";
    for (std::uint32_t c = 0; c < config.consumers; ++c) {
      plan.broadcast_queues.push_back(fmt::format("broadcast.c{}", c));
    }
    plan.gather_exchange = "gather";
    plan.gather_queue = "gather";
    return plan;
  }
  plan.work_exchange = "work";
  for (std::uint32_t q = 0; q < config.work_queue_count; ++q) {
    plan.work_queues.push_back(fmt::format("work.{}", q));
  }
  if (config.pattern == Pattern::work_sharing_feedback) {
    plan.reply_exchange = "reply";
    for (std::uint32_t p = 0; p < config.producers; ++p) {
      plan.reply_queues.emplace(p, fmt::format("reply.p{}", p));
    }
  }
  return plan;
}

void declare_plan(Broker& broker, const QueuePlan& plan,
                  const ExperimentConfig& config) {
  const std::uint64_t n_payload = payload_queue_count(config);
  const std::uint64_t payload_cap = broker.payload_budget() / n_payload;
  const std::uint64_t n_control = control_queue_count(config);
  const std::uint64_t control_cap =
      n_control ? broker.control_budget() / n_control : 0;

  auto payload_queue = [&](const std::string& name) {
    broker.declare_queue(QueueSpec{name, payload_cap,
                                   OverflowPolicy::reject_publish,
                                   QueueKind::payload});
  };
  auto control_queue = [&](const std::string& name) {
    broker.declare_queue(QueueSpec{name, control_cap,
                                   OverflowPolicy::reject_publish,
                                   QueueKind::control});
  };

  if (plan.fanout_request) {
    broker.declare_exchange(*plan.fanout_request, ExchangeKind::fanout);
    for (const auto& q : plan.broadcast_queues) {
      payload_queue(q);
      broker.bind(*plan.fanout_request, q);
    }
    broker.declare_exchange(*plan.gather_exchange, ExchangeKind::fanout);
    control_queue(*plan.gather_queue);
    broker.bind(*plan.gather_exchange, *plan.gather_queue);
    return;
  }
  broker.declare_exchange(plan.work_exchange, ExchangeKind::direct);
  for (const auto& q : plan.work_queues) {
    payload_queue(q);
    broker.bind(plan.work_exchange, q, q);
  }
  if (!plan.reply_queues.empty()) {
    broker.declare_exchange(plan.reply_exchange, ExchangeKind::direct);
    for (const auto& [producer, q] : plan.reply_queues) {
      control_queue(q);
      broker.bind(plan.reply_exchange, q, QueuePlan::reply_key(producer));
    }
  }
}

RunRecord run_experiment(const ExperimentConfig& config) {
  validate(config);
  return config.transport == Transport::sim ? run_sim(config)
                                            : run_loopback(config);
}

namespace detail {

PathLease lease_connections(const PathModel& path,
                            const ExperimentConfig& config) {
  PathLease lease;
  lease.pool = std::make_unique<ConnectionPool>(path);
  auto take = [&](Side side, std::uint32_t clients) {
    auto chain = path.chain(side);
    for (std::uint32_t i = 0; i < clients; ++i) {
      for (const auto& hop : chain) {
        for (std::uint32_t k = 0; k < path.num_conn; ++k) {
          lease.connections.push_back(
              acquire_connection(*lease.pool, side, hop.name));
        }
      }
    }
  };
  try {
    take(Side::consumer, config.consumers);
    take(Side::producer, config.producers);
  } catch (const ConnectionLimitError& e) {
    throw InfeasibleConfiguration("connection-limit", e.hop(), e.limit());
  }
  return lease;
}

TunnelSession establish_tunnel(const ExperimentConfig& config) {
  TunnelSession t;
  t.control = std::make_unique<ControlPlane>();
  SessionRequest in;
  in.direction = Direction::inbound;
  in.remote_endpoint = {"producer-gateway", 0};
  in.control_endpoint = {"consumer-s2cs", 5000};
  in.receiver_ports = {5672};
  in.num_conn = config.num_conn;
  in.credential = "streamsim-harness";
  auto inbound = t.control->inbound_request(in);

  SessionRequest out = in;
  out.direction = Direction::outbound;
  out.remote_endpoint = inbound.consumer_proxy;
  out.control_endpoint = {"producer-s2cs", 5000};
  out.receiver_ports = {inbound.consumer_proxy.port};
  t.control->outbound_request(out, inbound.uid);
  t.uid = inbound.uid;
  return t;
}

std::string request_routing_key(const QueuePlan& plan, std::uint64_t seq) {
  if (plan.fanout_request) return {};
  return plan.work_queues[seq % plan.work_queues.size()];
}

std::string request_exchange(const QueuePlan& plan) {
  return plan.fanout_request ? *plan.fanout_request : plan.work_exchange;
}

std::pair<std::string, std::string> reply_route(const QueuePlan& plan,
                                                std::uint32_t producer) {
  if (plan.gather_exchange) return {*plan.gather_exchange, {}};
  return {plan.reply_exchange, QueuePlan::reply_key(producer)};
}

void check_completeness(const ExperimentConfig& config, const RunRecord& rec,
                        bool stopped_by_duration) {
  if (rec.misrouted_replies > 0) {
    throw Error(Errc::misrouted_reply,
                fmt::format("{} replies reached the wrong producer",
                            rec.misrouted_replies));
  }
  if (!stopped_by_duration && rec.confirmed_requests != config.message_count) {
    throw Error(Errc::missing_reply,
                fmt::format("only {} of {} requests were confirmed",
                            rec.confirmed_requests, config.message_count));
  }
  const std::uint64_t fan =
      config.pattern == Pattern::broadcast_gather ? config.consumers : 1;
  if (rec.events.size() != rec.confirmed_requests * fan) {
    throw Error(Errc::missing_reply,
                fmt::format("{} deliveries recorded, expected {}",
                            rec.events.size(), rec.confirmed_requests * fan));
  }
  if (has_reply_leg(config.pattern)) {
    auto missing = std::count_if(rec.events.begin(), rec.events.end(),
                                 [](const DeliveryEvent& e) {
                                   return !e.reply_ts.has_value();
                                 });
    if (missing > 0) {
      throw Error(Errc::missing_reply,
                  fmt::format("{} deliveries never got their reply back",
                              missing));
    }
  }
}

}  // namespace detail
}  // namespace streamsim
