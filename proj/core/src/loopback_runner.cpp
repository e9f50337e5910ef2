// Loopback transport: a real broker server, one TCP relay per hop and side,
// and producer/consumer worker threads that only talk to each other through
// sockets. A coordinator socket carries small msgpack records that sequence
// the run (hello, plan, ready, report, stop).

#include <poll.h>

#include <algorithm>
#include <array>
#include <condition_variable>
#include <deque>
#include <exception>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "harness_internal.hpp"
#include "streamsim/broker_server.hpp"
#include "streamsim/clock.hpp"
#include "streamsim/error.hpp"
#include "streamsim/relay.hpp"

namespace streamsim {
namespace {

using json = nlohmann::json;
using Steady = std::chrono::steady_clock;

constexpr int kRecordVersion = 1;
constexpr auto kPollSlice = std::chrono::milliseconds(1);

void send_record(Socket& sock, json record) {
  record["v"] = kRecordVersion;
  auto bytes = json::to_msgpack(record);
  write_frame(sock, {std::as_bytes(std::span(bytes))});
}

json parse_record(std::span<const std::byte> frame) {
  json record;
  try {
    record = json::from_msgpack(
        reinterpret_cast<const std::uint8_t*>(frame.data()),
        reinterpret_cast<const std::uint8_t*>(frame.data()) + frame.size());
  } catch (const json::exception& e) {
    throw Error(Errc::protocol_error,
                fmt::format("bad coordinator record: {}", e.what()));
  }
  if (!record.is_object() || record.value("v", 0) != kRecordVersion ||
      !record.contains("type")) {
    throw Error(Errc::protocol_error, "coordinator record without v/type");
  }
  return record;
}

/// Blocks until a record arrives or `deadline` passes.
json recv_record(Socket& sock, Steady::time_point deadline,
                 std::string_view expected) {
  while (!sock.wait_readable(std::chrono::milliseconds(20))) {
    if (Steady::now() >= deadline) {
      throw Error(Errc::timeout,
                  fmt::format("timed out waiting for '{}'", expected));
    }
  }
  auto frame = read_frame(sock);
  if (!frame) {
    throw Error(Errc::io_error,
                fmt::format("peer closed before sending '{}'", expected));
  }
  auto record = parse_record(*frame);
  if (record["type"] != expected) {
    throw Error(Errc::protocol_error,
                fmt::format("expected '{}', got '{}'", expected,
                            record["type"].dump()));
  }
  return record;
}

Nanos backoff(std::uint32_t attempt) {
  auto d = kBackoffInitial;
  for (std::uint32_t i = 1; i < attempt && d < kBackoffCap; ++i) d *= 2;
  return std::min(d, kBackoffCap);
}

std::span<const std::byte> view(const Bytes& b) { return b; }

/// Shared by every worker thread of one run.
struct WorkerContext {
  const WallClock& clock;
  std::uint16_t coordinator_port;
  ControlPlane* tunnel = nullptr;
  std::string tunnel_uid;
};

/// One in-flight request or reply that may need to be republished.
struct Pending {
  std::uint32_t attempts = 0;
  Nanos due{0};
};

class ProducerWorker {
 public:
  ProducerWorker(const WorkerContext& ctx, std::uint32_t index)
      : ctx_(ctx), index_(index) {}

  void run() {
    Socket coord = Socket::connect_loopback(ctx_.coordinator_port);
    send_record(coord, {{"type", "hello"}, {"role", "producer"},
                        {"index", index_}});
    // The plan doubles as the start signal: it is only sent once every
    // consumer is subscribed.
    auto plan = recv_record(coord, Steady::time_point::max(), "plan");
    load(plan);

    const std::uint32_t n_conn = plan.at("connections");
    for (std::uint32_t i = 0; i < n_conn; ++i) {
      auto& link = links_.emplace_back(std::make_unique<Link>());
      link->sock = Socket::connect_loopback(plan.at("entry_port"));
    }
    for (auto& link : links_) {
      link->reader = std::thread([this, l = link.get()] { read_loop(*l); });
    }
    try {
      if (!reply_queue_.empty()) subscribe();
      publish_all();
      flush_acks(true);
    } catch (...) {
      shutdown_links();
      throw;
    }
    json report = {{"type", "report"},
                   {"role", "producer"},
                   {"index", index_},
                   {"confirmed", confirmed_},
                   {"rejected", rejected_},
                   {"misrouted", misrouted_},
                   {"first_publish", first_publish_.count()},
                   {"replies", replies_}};
    shutdown_links();
    send_record(coord, std::move(report));
  }

 private:
  struct Link {
    Socket sock;
    std::mutex write_mu;
    std::thread reader;
  };

  void load(const json& plan) {
    profile_.name = plan.at("workload");
    profile_.payload_bytes = plan.at("payload_bytes");
    profile_.events_per_message = plan.at("events_per_message");
    seed_ = plan.at("seed");
    quota_ = plan.at("quota");
    interval_ = Nanos(plan.at("interval_ns").get<std::int64_t>());
    exchange_ = plan.at("exchange");
    keys_ = plan.at("keys").get<std::vector<std::string>>();
    reply_queue_ = plan.at("reply_queue");
    fan_ = plan.at("replies_per_request");
    prefetch_ = plan.at("prefetch");
    ack_batch_ = plan.at("ack_batch");
    window_ = plan.at("window");
    if (plan.contains("duration_ns")) {
      duration_ = Nanos(plan["duration_ns"].get<std::int64_t>());
    }
  }

  void write(Link& link, const Bytes& head, std::span<const std::byte> body = {}) {
    std::lock_guard lock(link.write_mu);
    if (body.empty()) {
      write_frame(link.sock, {view(head)});
    } else {
      write_frame(link.sock, {view(head), body});
    }
  }

  void subscribe() {
    write(*links_[0], wire::encode_consume(1, reply_queue_, prefetch_));
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return subscribed_ || !error_.empty(); });
    if (!error_.empty()) throw Error(Errc::protocol_error, error_);
  }

  Link& route(std::uint64_t) {
    if (ctx_.tunnel && links_.size() > 1) {
      return *links_[ctx_.tunnel->assign_connection(ctx_.tunnel_uid) %
                     links_.size()];
    }
    if (ctx_.tunnel) ctx_.tunnel->assign_connection(ctx_.tunnel_uid);
    return *links_[0];
  }

  void publish(std::uint64_t seq) {
    auto payload = generate_payload(profile_, index_, seq, seed_);
    auto [it, fresh] = publish_ts_.try_emplace(seq, ctx_.clock.now());
    stamp_publish_time(payload, it->second);
    if (fresh && seq == 0) first_publish_ = it->second;
    const auto& key = keys_[seq % keys_.size()];
    write(route(seq), wire::encode_publish(seq, exchange_, key), payload);
  }

  void publish_all() {
    const Nanos start = ctx_.clock.now();
    Nanos next_send = start;
    std::uint64_t next_seq = 0;
    bool stopped = false;
    std::unique_lock lock(mu_);
    for (;;) {
      if (!error_.empty()) throw Error(Errc::protocol_error, error_);
      const Nanos now = ctx_.clock.now();
      if (duration_ && now - start >= *duration_) stopped = true;
      const bool room = inflight_ < window_;

      if (room && !retry_.empty() && retry_.front().second <= now) {
        auto seq = retry_.front().first;
        retry_.pop_front();
        ++inflight_;
        lock.unlock();
        publish(seq);
        lock.lock();
        continue;
      }
      if (room && !stopped && next_seq < quota_ && now >= next_send) {
        auto seq = next_seq++;
        ++inflight_;
        lock.unlock();
        publish(seq);
        lock.lock();
        next_send = now + interval_;
        continue;
      }
      const bool sending_done = stopped || next_seq == quota_;
      if (sending_done && retry_.empty() && inflight_ == 0 &&
          replies_.size() + misrouted_ >= confirmed_ * fan_) {
        return;
      }
      if (readers_done_ == links_.size()) {
        throw Error(Errc::io_error, "broker connection closed mid-run");
      }
      Nanos wake = now + Nanos(5'000'000);
      if (!stopped && next_seq < quota_) wake = std::min(wake, next_send);
      if (!retry_.empty()) wake = std::min(wake, retry_.front().second);
      cv_.wait_until(lock, ctx_.clock.to_time_point(wake));
    }
  }

  void read_loop(Link& link) {
    try {
      for (;;) {
        if (!link.sock.wait_readable(kPollSlice)) {
          flush_acks(false);
          continue;
        }
        auto frame = read_frame(link.sock);
        if (!frame) break;
        on_frame(link, wire::decode(*frame));
      }
    } catch (const std::exception& e) {
      std::lock_guard lock(mu_);
      if (!closing_ && error_.empty()) error_ = e.what();
    }
    std::lock_guard lock(mu_);
    ++readers_done_;
    cv_.notify_all();
  }

  void on_frame(Link& link, const wire::Frame& f) {
    std::unique_lock lock(mu_);
    switch (f.op) {
      case wire::Op::confirm:
        --inflight_;
        ++confirmed_;
        break;
      case wire::Op::reject: {
        --inflight_;
        ++rejected_;
        auto& p = attempts_[f.ref];
        ++p.attempts;
        retry_.emplace_back(f.ref, ctx_.clock.now() + backoff(p.attempts));
        std::stable_sort(retry_.begin(), retry_.end(),
                         [](auto& a, auto& b) { return a.second < b.second; });
        break;
      }
      case wire::Op::consume_ok:
        consumer_id_ = f.consumer;
        subscribed_ = true;
        break;
      case wire::Op::deliver: {
        auto h = decode_header(f.body);
        if (h.kind != MessageKind::reply ||
            (fan_ == 1 && h.id.producer != index_)) {
          ++misrouted_;
        } else {
          replies_.push_back({static_cast<std::int64_t>(h.id.producer),
                              static_cast<std::int64_t>(h.id.sequence),
                              static_cast<std::int64_t>(h.responder),
                              ctx_.clock.now().count()});
        }
        last_tag_ = std::max(last_tag_, f.ref);
        last_delivery_ = ctx_.clock.now();
        if (++pending_acks_ >= ack_batch_) {
          lock.unlock();
          flush_acks(true);
          lock.lock();
        }
        break;
      }
      case wire::Op::error:
        error_ = f.name;
        break;
      default:
        error_ = fmt::format("unexpected op {} at producer",
                             static_cast<int>(f.op));
    }
    (void)link;
    cv_.notify_all();
  }

  /// `force` sends whatever is pending; otherwise only after an idle flush
  /// interval.
  void flush_acks(bool force) {
    Bytes frame;
    {
      std::lock_guard lock(mu_);
      if (pending_acks_ == 0) return;
      if (!force && ctx_.clock.now() - last_delivery_ < kAckFlushInterval) {
        return;
      }
      frame = wire::encode_ack(consumer_id_, last_tag_);
      pending_acks_ = 0;
    }
    write(*links_[0], frame);
  }

  void shutdown_links() {
    {
      std::lock_guard lock(mu_);
      closing_ = true;
    }
    for (auto& l : links_) l->sock.shutdown();
    for (auto& l : links_) {
      if (l->reader.joinable()) l->reader.join();
    }
  }

  const WorkerContext& ctx_;
  std::uint32_t index_;
  WorkloadProfile profile_;
  std::uint64_t seed_ = 0;
  std::uint64_t quota_ = 0;
  Nanos interval_{0};
  std::string exchange_;
  std::vector<std::string> keys_;
  std::string reply_queue_;
  std::uint64_t fan_ = 0;
  std::uint32_t prefetch_ = 0;
  std::uint32_t ack_batch_ = 1;
  std::uint32_t window_ = 1;
  std::optional<Nanos> duration_;

  std::vector<std::unique_ptr<Link>> links_;
  std::map<std::uint64_t, Nanos> publish_ts_;  // publishing thread only
  Nanos first_publish_{0};

  std::mutex mu_;
  std::condition_variable cv_;
  std::uint32_t inflight_ = 0;
  std::uint64_t confirmed_ = 0;
  std::uint64_t rejected_ = 0;
  std::uint64_t misrouted_ = 0;
  std::map<std::uint64_t, Pending> attempts_;
  std::deque<std::pair<std::uint64_t, Nanos>> retry_;
  std::vector<std::array<std::int64_t, 4>> replies_;
  bool subscribed_ = false;
  ConsumerId consumer_id_ = 0;
  DeliveryTag last_tag_ = 0;
  std::uint32_t pending_acks_ = 0;
  Nanos last_delivery_{0};
  std::size_t readers_done_ = 0;
  bool closing_ = false;
  std::string error_;
};

class ConsumerWorker {
 public:
  ConsumerWorker(const WorkerContext& ctx, std::uint32_t index)
      : ctx_(ctx), index_(index) {}

  void run() {
    coord_ = Socket::connect_loopback(ctx_.coordinator_port);
    send_record(coord_, {{"type", "hello"}, {"role", "consumer"},
                         {"index", index_}});
    auto plan = recv_record(coord_, Steady::time_point::max(), "plan");
    load(plan);
    broker_ = Socket::connect_loopback(plan.at("entry_port"));

    const auto queues = plan.at("queues").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < queues.size(); ++i) {
      write(wire::encode_consume(i + 1, queues[i], prefetch_));
      auto frame = read_frame(broker_);
      if (!frame) throw Error(Errc::io_error, "broker closed during consume");
      auto f = wire::decode(*frame);
      if (f.op != wire::Op::consume_ok) {
        throw Error(Errc::protocol_error,
                    fmt::format("subscribe to '{}' failed: {}", queues[i],
                                f.name));
      }
      acks_[f.consumer] = AckState{};
    }
    send_record(coord_, {{"type", "ready"}, {"index", index_}});
    serve();
  }

 private:
  struct AckState {
    DeliveryTag last_tag = 0;
    std::uint32_t pending = 0;
    Nanos last_delivery{0};
  };

  struct OutstandingReply {
    Bytes payload;
    std::string exchange;
    std::string key;
    Pending retry;
  };

  void load(const json& plan) {
    prefetch_ = plan.at("prefetch");
    ack_batch_ = plan.at("ack_batch");
    processing_ = Nanos(plan.at("processing_ns").get<std::int64_t>());
    reply_bytes_ = plan.at("reply_bytes");
    reply_mode_ = plan.at("reply_mode");
    reply_exchange_ = plan.at("reply_exchange");
  }

  void write(const Bytes& head, std::span<const std::byte> body = {}) {
    if (body.empty()) {
      write_frame(broker_, {view(head)});
    } else {
      write_frame(broker_, {view(head), body});
    }
  }

  void serve() {
    bool stopping = false;
    for (;;) {
      pollfd fds[2] = {{broker_.fd(), POLLIN, 0}, {coord_.fd(), POLLIN, 0}};
      int rc = ::poll(fds, 2, static_cast<int>(kPollSlice.count()));
      if (rc < 0 && errno != EINTR) {
        throw Error(Errc::io_error, "poll failed in consumer");
      }
      if (rc > 0 && (fds[0].revents & (POLLIN | POLLHUP | POLLERR))) {
        auto frame = read_frame(broker_);
        if (!frame) throw Error(Errc::io_error, "broker closed mid-run");
        on_frame(wire::decode(*frame));
      }
      if (rc > 0 && (fds[1].revents & (POLLIN | POLLHUP | POLLERR))) {
        auto frame = read_frame(coord_);
        if (!frame) throw Error(Errc::io_error, "coordinator went away");
        auto record = parse_record(*frame);
        if (record["type"] != "stop") {
          throw Error(Errc::protocol_error, "consumer expected 'stop'");
        }
        stopping = true;
      }
      retry_due();
      flush_acks(stopping);
      if (stopping && replies_.empty()) break;
    }
    send_record(coord_, {{"type", "report"},
                         {"role", "consumer"},
                         {"index", index_},
                         {"rejected", rejected_},
                         {"deliveries", deliveries_}});
    broker_.shutdown();
  }

  void on_frame(const wire::Frame& f) {
    switch (f.op) {
      case wire::Op::deliver:
        on_request(f);
        break;
      case wire::Op::confirm:
        replies_.erase(f.ref);
        break;
      case wire::Op::reject: {
        ++rejected_;
        auto& r = replies_.at(f.ref);
        ++r.retry.attempts;
        r.retry.due = ctx_.clock.now() + backoff(r.retry.attempts);
        break;
      }
      case wire::Op::error:
        throw Error(Errc::protocol_error, f.name);
      default:
        throw Error(Errc::protocol_error,
                    fmt::format("unexpected op {} at consumer",
                                static_cast<int>(f.op)));
    }
  }

  void on_request(const wire::Frame& f) {
    const Nanos now = ctx_.clock.now();
    auto h = decode_header(f.body);
    deliveries_.push_back({static_cast<std::int64_t>(h.id.producer),
                           static_cast<std::int64_t>(h.id.sequence),
                           h.publish_ts.count(), now.count()});
    if (processing_ > Nanos{0}) std::this_thread::sleep_for(processing_);

    if (reply_mode_ != "none") {
      MessageHeader rh;
      rh.id = h.id;
      rh.responder = index_;
      rh.publish_ts = h.publish_ts;
      rh.payload_bytes = reply_bytes_;
      rh.kind = MessageKind::reply;
      OutstandingReply r;
      r.payload.assign(reply_bytes_, std::byte{0});
      encode_header(rh, r.payload);
      r.exchange = reply_exchange_;
      if (reply_mode_ == "direct") r.key = QueuePlan::reply_key(h.id.producer);
      auto seq = next_reply_++;
      write(wire::encode_publish(seq, r.exchange, r.key), r.payload);
      replies_.emplace(seq, std::move(r));
    }

    auto& a = acks_.at(f.consumer);
    a.last_tag = std::max(a.last_tag, f.ref);
    a.last_delivery = ctx_.clock.now();
    if (++a.pending >= ack_batch_) {
      write(wire::encode_ack(f.consumer, a.last_tag));
      a.pending = 0;
    }
  }

  void retry_due() {
    const Nanos now = ctx_.clock.now();
    for (auto& [seq, r] : replies_) {
      if (r.retry.attempts > 0 && r.retry.due != Nanos{0} && r.retry.due <= now) {
        r.retry.due = Nanos{0};
        write(wire::encode_publish(seq, r.exchange, r.key), r.payload);
      }
    }
  }

  void flush_acks(bool force) {
    const Nanos now = ctx_.clock.now();
    for (auto& [id, a] : acks_) {
      if (a.pending == 0) continue;
      if (force || now - a.last_delivery >= kAckFlushInterval) {
        write(wire::encode_ack(id, a.last_tag));
        a.pending = 0;
      }
    }
  }

  const WorkerContext& ctx_;
  std::uint32_t index_;
  Socket coord_;
  Socket broker_;
  std::uint32_t prefetch_ = 0;
  std::uint32_t ack_batch_ = 1;
  Nanos processing_{0};
  std::uint32_t reply_bytes_ = 0;
  std::string reply_mode_;
  std::string reply_exchange_;
  std::map<ConsumerId, AckState> acks_;
  std::map<std::uint64_t, OutstandingReply> replies_;
  std::uint64_t next_reply_ = 0;
  std::uint64_t rejected_ = 0;
  std::vector<std::array<std::int64_t, 4>> deliveries_;
};

/// Thread running one worker; remembers how it ended.
struct WorkerThread {
  std::thread thread;
  std::exception_ptr failure;
};

class LoopbackRun {
 public:
  explicit LoopbackRun(const ExperimentConfig& config)
      : cfg_(config),
        plan_(plan_queues(config)),
        path_(build_path(config.architecture, path_options(config))),
        lease_(detail::lease_connections(path_, config)),
        broker_(config.broker_memory),
        deadline_(Steady::now() + config.timeout) {
    if (cfg_.architecture == Architecture::prs) {
      tunnel_ = detail::establish_tunnel(cfg_);
    }
    declare_plan(broker_, plan_, cfg_);
  }

  RunRecord run() {
    BrokerServer server(broker_);
    server.start();
    RelayChain producer_chain(path_.chain(Side::producer), server.port());
    RelayChain consumer_chain(path_.chain(Side::consumer), server.port());
    Listener coord = Listener::bind_loopback();

    WorkerContext ctx{clock_, coord.port(),
                      tunnel_ ? tunnel_->control.get() : nullptr,
                      tunnel_ ? tunnel_->uid : std::string{}};
    std::vector<WorkerThread> workers(cfg_.consumers + cfg_.producers);
    auto launch = [&](WorkerThread& w, auto body) {
      w.thread = std::thread([&w, body] {
        try {
          body();
        } catch (...) {
          w.failure = std::current_exception();
        }
      });
    };
    for (std::uint32_t c = 0; c < cfg_.consumers; ++c) {
      launch(workers[c], [&ctx, c] { ConsumerWorker(ctx, c).run(); });
    }
    for (std::uint32_t p = 0; p < cfg_.producers; ++p) {
      launch(workers[cfg_.consumers + p],
             [&ctx, p] { ProducerWorker(ctx, p).run(); });
    }

    RunRecord rec;
    std::exception_ptr failure;
    try {
      rec = coordinate(coord, producer_chain.entry_port(),
                       consumer_chain.entry_port());
    } catch (...) {
      failure = std::current_exception();
    }
    // Tearing down the sockets unblocks any worker still waiting.
    coord.shutdown();
    for (auto& s : sessions_) s.shutdown();
    producer_chain.stop();
    consumer_chain.stop();
    server.stop();
    for (auto& w : workers) w.thread.join();

    if (failure) {
      for (auto& w : workers) {
        if (w.failure) {
          try {
            std::rethrow_exception(w.failure);
          } catch (const Error& e) {
            if (e.code() != Errc::io_error) throw;
          }
        }
      }
      std::rethrow_exception(failure);
    }
    for (auto& w : workers) {
      if (w.failure) std::rethrow_exception(w.failure);
    }
    return rec;
  }

 private:
  json common_plan(std::uint16_t entry_port) const {
    return {{"type", "plan"},
            {"entry_port", entry_port},
            {"prefetch", cfg_.prefetch},
            {"ack_batch", cfg_.ack_batch}};
  }

  RunRecord coordinate(Listener& coord, std::uint16_t producer_entry,
                       std::uint16_t consumer_entry) {
    const std::size_t total = cfg_.consumers + cfg_.producers;
    std::vector<Socket*> consumers(cfg_.consumers, nullptr);
    std::vector<Socket*> producers(cfg_.producers, nullptr);
    while (sessions_.size() < total) {
      if (!coord.wait_pending(std::chrono::milliseconds(20))) {
        if (Steady::now() >= deadline_) {
          throw Error(Errc::timeout, "workers did not connect in time");
        }
        continue;
      }
      auto& s = sessions_.emplace_back(coord.accept());
      auto hello = recv_record(s, deadline_, "hello");
      const std::uint32_t index = hello.at("index");
      auto& slot = hello.at("role") == "producer" ? producers : consumers;
      if (index >= slot.size() || slot[index]) {
        throw Error(Errc::protocol_error, "duplicate or unknown worker");
      }
      slot[index] = &s;
    }

    const bool gather = plan_.gather_exchange.has_value();
    const std::string reply_mode =
        gather ? "gather" : (has_reply_leg(cfg_.pattern) ? "direct" : "none");
    for (std::uint32_t c = 0; c < cfg_.consumers; ++c) {
      auto plan = common_plan(consumer_entry);
      plan["queues"] = plan_.consumer_queues(c, cfg_.consumers);
      plan["processing_ns"] = cfg_.processing_time.count();
      plan["reply_bytes"] = cfg_.reply_bytes;
      plan["reply_mode"] = reply_mode;
      plan["reply_exchange"] = gather ? *plan_.gather_exchange
                                      : plan_.reply_exchange;
      send_record(*consumers[c], std::move(plan));
    }
    for (auto* s : consumers) recv_record(*s, deadline_, "ready");
    RunRecord rec;
    rec.last_consumer_registered = clock_.now();

    std::vector<std::string> keys;
    if (plan_.fanout_request) {
      keys.push_back("");
    } else {
      keys = plan_.work_queues;
    }
    const auto interval = to_nanos(pacing_interval(cfg_.workload, cfg_.producers));
    for (std::uint32_t p = 0; p < cfg_.producers; ++p) {
      auto plan = common_plan(producer_entry);
      plan["connections"] = tunnel_ ? cfg_.num_conn : 1;
      plan["workload"] = cfg_.workload.name;
      plan["payload_bytes"] = cfg_.workload.payload_bytes;
      plan["events_per_message"] = cfg_.workload.events_per_message;
      plan["seed"] = cfg_.seed;
      plan["quota"] = producer_quota(cfg_, p);
      plan["interval_ns"] = interval.count();
      plan["exchange"] = detail::request_exchange(plan_);
      plan["keys"] = keys;
      plan["reply_queue"] = gather ? *plan_.gather_queue
                            : plan_.reply_queues.count(p)
                                ? plan_.reply_queues.at(p)
                                : std::string{};
      plan["replies_per_request"] =
          gather ? cfg_.consumers : (has_reply_leg(cfg_.pattern) ? 1 : 0);
      plan["window"] = kLoopbackConfirmWindow;
      if (cfg_.duration) plan["duration_ns"] = cfg_.duration->count();
      send_record(*producers[p], std::move(plan));
    }

    std::vector<json> producer_reports;
    for (auto* s : producers) {
      producer_reports.push_back(recv_record(*s, deadline_, "report"));
    }
    wait_drained();
    for (auto* s : consumers) send_record(*s, {{"type", "stop"}});
    std::vector<json> consumer_reports;
    for (auto* s : consumers) {
      consumer_reports.push_back(recv_record(*s, deadline_, "report"));
    }
    rec.duration = clock_.now();
    assemble(rec, producer_reports, consumer_reports);
    return rec;
  }

  void wait_drained() {
    for (;;) {
      auto stats = broker_.stats();
      if (stats.in_queue == 0 && stats.unacked_in_flight == 0) return;
      if (Steady::now() >= deadline_) {
        throw Error(Errc::timeout, "broker did not drain before the timeout");
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  }

  void assemble(RunRecord& rec, const std::vector<json>& producers,
                const std::vector<json>& consumers) {
    rec.pattern = cfg_.pattern;
    rec.transport = Transport::loopback;
    rec.producers = cfg_.producers;
    rec.consumers = cfg_.consumers;
    rec.per_consumer_counts.assign(cfg_.consumers, 0);

    bool first = true;
    for (const auto& r : producers) {
      rec.confirmed_requests += r.at("confirmed").get<std::uint64_t>();
      rec.rejected_publishes += r.at("rejected").get<std::uint64_t>();
      rec.misrouted_replies += r.at("misrouted").get<std::uint64_t>();
      Nanos fp(r.at("first_publish").get<std::int64_t>());
      if (r.at("confirmed").get<std::uint64_t>() > 0 &&
          (first || fp < rec.first_publish)) {
        rec.first_publish = fp;
        first = false;
      }
    }
    for (std::uint32_t c = 0; c < cfg_.consumers; ++c) {
      const auto& r = consumers[c];
      rec.rejected_publishes += r.at("rejected").get<std::uint64_t>();
      for (const auto& d : r.at("deliveries")) {
        DeliveryEvent ev;
        ev.id = {d[0].get<std::uint32_t>(), d[1].get<std::uint64_t>()};
        ev.consumer = c;
        ev.publish_ts = Nanos(d[2].get<std::int64_t>());
        ev.deliver_ts = Nanos(d[3].get<std::int64_t>());
        rec.events.push_back(ev);
        ++rec.per_consumer_counts[c];
      }
    }
    std::stable_sort(rec.events.begin(), rec.events.end(),
                     [](const DeliveryEvent& a, const DeliveryEvent& b) {
                       return a.deliver_ts < b.deliver_ts;
                     });

    std::map<std::tuple<std::uint32_t, std::uint64_t, std::uint32_t>,
             std::size_t>
        index;
    for (std::size_t i = 0; i < rec.events.size(); ++i) {
      const auto& e = rec.events[i];
      index[{e.id.producer, e.id.sequence, e.consumer}] = i;
    }
    const bool gather = cfg_.pattern == Pattern::broadcast_gather;
    if (gather) {
      rec.gather_complete.assign(rec.confirmed_requests, Nanos{0});
    }
    std::map<std::uint64_t, std::uint32_t> gathered;
    for (std::uint32_t p = 0; p < cfg_.producers; ++p) {
      for (const auto& r : producers[p].at("replies")) {
        auto it = index.find({r[0].get<std::uint32_t>(),
                              r[1].get<std::uint64_t>(),
                              r[2].get<std::uint32_t>()});
        if (it == index.end()) {
          throw Error(Errc::protocol_error,
                      "reply for a request never delivered");
        }
        auto& ev = rec.events[it->second];
        ev.reply_ts = Nanos(r[3].get<std::int64_t>());
        ev.reply_receiver = p;
        if (gather && ++gathered[ev.id.sequence] == cfg_.consumers &&
            ev.id.sequence < rec.gather_complete.size()) {
          // The last reply to arrive is the one with the latest timestamp.
          Nanos latest{0};
          for (std::uint32_t c = 0; c < cfg_.consumers; ++c) {
            auto jt = index.find({ev.id.producer, ev.id.sequence, c});
            if (jt != index.end() && rec.events[jt->second].reply_ts) {
              latest = std::max(latest, *rec.events[jt->second].reply_ts);
            }
          }
          rec.gather_complete[ev.id.sequence] = latest - ev.publish_ts;
        }
      }
    }
    if (tunnel_) {
      rec.tunnel_connection_counts =
          tunnel_->control->find(tunnel_->uid)->carried;
    }
    rec.broker_stats = broker_.stats();
    detail::check_completeness(cfg_, rec, cfg_.duration.has_value());
  }

  const ExperimentConfig& cfg_;
  QueuePlan plan_;
  PathModel path_;
  detail::PathLease lease_;
  std::optional<detail::TunnelSession> tunnel_;
  Broker broker_;
  WallClock clock_;
  Steady::time_point deadline_;
  std::deque<Socket> sessions_;
};

}  // namespace

RunRecord run_loopback(const ExperimentConfig& config) {
  validate(config);
  LoopbackRun run(config);
  return run.run();
}

}  // namespace streamsim
