#include "streamsim/broker_server.hpp"

#include <fmt/format.h>

#include "blocking_queue.hpp"
#include "streamsim/error.hpp"

namespace streamsim {
namespace wire {
namespace {

ByteWriter start(Op op) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(op));
  return w;
}

}  // namespace

Bytes encode_publish(std::uint64_t seq, std::string_view exchange,
                     std::string_view routing_key) {
  auto w = start(Op::publish);
  w.u64(seq);
  w.str(exchange);
  w.str(routing_key);
  return w.take();
}

Bytes encode_confirm(std::uint64_t seq) {
  auto w = start(Op::confirm);
  w.u64(seq);
  return w.take();
}

Bytes encode_reject(std::uint64_t seq) {
  auto w = start(Op::reject);
  w.u64(seq);
  return w.take();
}

Bytes encode_error(std::uint64_t ref, std::string_view text) {
  auto w = start(Op::error);
  w.u64(ref);
  w.str(text.substr(0, 0xffff));
  return w.take();
}

Bytes encode_consume(std::uint64_t req, std::string_view queue,
                     std::uint32_t prefetch) {
  auto w = start(Op::consume);
  w.u64(req);
  w.str(queue);
  w.u32(prefetch);
  return w.take();
}

Bytes encode_consume_ok(std::uint64_t req, ConsumerId consumer) {
  auto w = start(Op::consume_ok);
  w.u64(req);
  w.u32(consumer);
  return w.take();
}

Bytes encode_deliver(ConsumerId consumer, DeliveryTag tag) {
  auto w = start(Op::deliver);
  w.u32(consumer);
  w.u64(tag);
  return w.take();
}

Bytes encode_ack(ConsumerId consumer, DeliveryTag up_to) {
  auto w = start(Op::ack);
  w.u32(consumer);
  w.u64(up_to);
  return w.take();
}

Frame decode(std::span<const std::byte> frame) {
  ByteReader r(frame);
  Frame f;
  auto op = r.u8();
  if (op < 1 || op > 8) {
    throw Error(Errc::protocol_error, fmt::format("unknown op {}", op));
  }
  f.op = static_cast<Op>(op);
  switch (f.op) {
    case Op::publish:
      f.ref = r.u64();
      f.exchange = r.str();
      f.name = r.str();
      f.body = r.rest();
      break;
    case Op::confirm:
    case Op::reject:
      f.ref = r.u64();
      break;
    case Op::error:
      f.ref = r.u64();
      f.name = r.str();
      break;
    case Op::consume:
      f.ref = r.u64();
      f.name = r.str();
      f.prefetch = r.u32();
      break;
    case Op::consume_ok:
      f.ref = r.u64();
      f.consumer = r.u32();
      break;
    case Op::deliver:
      f.consumer = r.u32();
      f.ref = r.u64();
      f.body = r.rest();
      break;
    case Op::ack:
      f.consumer = r.u32();
      f.ref = r.u64();
      break;
  }
  if (r.remaining() != 0) {
    throw Error(Errc::protocol_error, "trailing bytes in frame");
  }
  return f;
}

}  // namespace wire

namespace {

struct OutFrame {
  Bytes head;
  std::shared_ptr<const Bytes> body;
};

}  // namespace

struct BrokerServer::Connection {
  Socket sock;
  detail::BlockingQueue<OutFrame> out;
  std::thread reader;
  std::thread writer;
  std::vector<ConsumerId> consumers;

  void send(Bytes head, std::shared_ptr<const Bytes> body = nullptr) {
    out.push(OutFrame{std::move(head), std::move(body)});
  }
};

BrokerServer::BrokerServer(Broker& broker)
    : broker_(broker), listener_(Listener::bind_loopback()) {}

BrokerServer::~BrokerServer() { stop(); }

void BrokerServer::start() {
  acceptor_ = std::thread([this] { accept_loop(); });
}

void BrokerServer::accept_loop() {
  while (!stopping_) {
    Socket s = listener_.accept();
    if (!s.valid()) return;
    auto conn = std::make_shared<Connection>();
    conn->sock = std::move(s);
    std::lock_guard lock(conns_mu_);
    if (stopping_) return;
    conn->writer = std::thread([c = conn.get()] {
      try {
        while (auto f = c->out.pop()) {
          if (f->body) {
            write_frame(c->sock, {std::span<const std::byte>(f->head),
                                  std::span<const std::byte>(*f->body)});
          } else {
            write_frame(c->sock, {std::span<const std::byte>(f->head)});
          }
        }
      } catch (const Error&) {
        c->out.close();
        c->sock.shutdown();
      }
    });
    conn->reader = std::thread([this, conn] { serve(conn); });
    conns_.push_back(std::move(conn));
  }
}

void BrokerServer::serve(const std::shared_ptr<Connection>& conn) {
  try {
    while (auto frame = read_frame(conn->sock)) handle(conn, *frame);
  } catch (const Error&) {
  }
  {
    std::lock_guard lock(dispatch_mu_);
    for (auto id : conn->consumers) owners_.erase(id);
  }
  conn->out.close();
}

void BrokerServer::handle(const std::shared_ptr<Connection>& conn,
                          std::span<const std::byte> frame) {
  wire::Frame f;
  try {
    f = wire::decode(frame);
  } catch (const Error& e) {
    conn->send(wire::encode_error(0, e.what()));
    return;
  }
  try {
    switch (f.op) {
      case wire::Op::publish: {
        auto payload = std::make_shared<const Bytes>(f.body.begin(), f.body.end());
        auto outcome =
            broker_.publish(f.exchange, f.name, message_from_payload(payload));
        conn->send(outcome == PublishOutcome::confirm
                       ? wire::encode_confirm(f.ref)
                       : wire::encode_reject(f.ref));
        break;
      }
      case wire::Op::consume: {
        auto handle = broker_.register_consumer(f.name, f.prefetch);
        {
          std::lock_guard lock(dispatch_mu_);
          owners_[handle.consumer_id] = conn;
          conn->consumers.push_back(handle.consumer_id);
        }
        conn->send(wire::encode_consume_ok(f.ref, handle.consumer_id));
        break;
      }
      case wire::Op::ack:
        broker_.ack_batch(broker_.consumer(f.consumer), f.ref);
        break;
      default:
        throw Error(Errc::protocol_error,
                    fmt::format("op {} is not accepted by the broker",
                                static_cast<int>(f.op)));
    }
  } catch (const Error& e) {
    conn->send(wire::encode_error(f.ref, e.what()));
    return;
  }
  dispatch();
}

void BrokerServer::dispatch() {
  std::lock_guard lock(dispatch_mu_);
  for (auto& d : broker_.deliver_next()) {
    auto it = owners_.find(d.consumer.consumer_id);
    if (it == owners_.end()) continue;
    if (auto conn = it->second.lock()) {
      conn->send(wire::encode_deliver(d.consumer.consumer_id, d.tag),
                 d.message.payload);
    }
  }
}

void BrokerServer::stop() {
  if (stopping_.exchange(true)) return;
  listener_.shutdown();
  if (acceptor_.joinable()) acceptor_.join();
  std::lock_guard lock(conns_mu_);
  for (auto& c : conns_) {
    c->sock.shutdown();
    c->out.close();
  }
  for (auto& c : conns_) {
    if (c->reader.joinable()) c->reader.join();
    if (c->writer.joinable()) c->writer.join();
  }
  conns_.clear();
}

}  // namespace streamsim
