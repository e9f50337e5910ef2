#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "streamsim/broker.hpp"
#include "streamsim/net.hpp"

namespace streamsim {

/// Broker protocol carried inside length-prefixed frames. Every frame starts
/// with a one-byte op; publish and deliver frames end with the raw message.
namespace wire {

enum class Op : std::uint8_t {
  publish = 1,     // u64 seq | str exchange | str key | body
  confirm = 2,     // u64 seq
  reject = 3,      // u64 seq
  error = 4,       // u64 ref | str text
  consume = 5,     // u64 req | str queue | u32 prefetch
  consume_ok = 6,  // u64 req | u32 consumer
  deliver = 7,     // u32 consumer | u64 tag | body
  ack = 8,         // u32 consumer | u64 up_to
};

struct Frame {
  Op op = Op::error;
  std::uint64_t ref = 0;  // seq / req / tag / up_to
  std::uint32_t consumer = 0;
  std::uint32_t prefetch = 0;
  std::string exchange;
  std::string name;  // routing key, queue, or error text
  std::span<const std::byte> body;
};

/// Frame prefixes; publish/deliver bodies are sent as a second part.
Bytes encode_publish(std::uint64_t seq, std::string_view exchange,
                     std::string_view routing_key);
Bytes encode_confirm(std::uint64_t seq);
Bytes encode_reject(std::uint64_t seq);
Bytes encode_error(std::uint64_t ref, std::string_view text);
Bytes encode_consume(std::uint64_t req, std::string_view queue,
                     std::uint32_t prefetch);
Bytes encode_consume_ok(std::uint64_t req, ConsumerId consumer);
Bytes encode_deliver(ConsumerId consumer, DeliveryTag tag);
Bytes encode_ack(ConsumerId consumer, DeliveryTag up_to);

/// `body` points into `frame`. Throws Error(protocol_error).
Frame decode(std::span<const std::byte> frame);

}  // namespace wire

/// Serves a Broker over loopback TCP. Each connection gets a reader thread
/// and a writer thread; deliveries are pushed to the owning connection as
/// soon as a consumer has prefetch room.
class BrokerServer {
 public:
  explicit BrokerServer(Broker& broker);
  ~BrokerServer();

  BrokerServer(const BrokerServer&) = delete;
  BrokerServer& operator=(const BrokerServer&) = delete;

  std::uint16_t port() const noexcept { return listener_.port(); }
  void start();
  void stop();

 private:
  struct Connection;

  void accept_loop();
  void serve(const std::shared_ptr<Connection>& conn);
  void handle(const std::shared_ptr<Connection>& conn,
              std::span<const std::byte> frame);
  void dispatch();

  Broker& broker_;
  Listener listener_;
  std::thread acceptor_;
  std::atomic<bool> stopping_{false};
  std::mutex conns_mu_;
  std::vector<std::shared_ptr<Connection>> conns_;
  // Held across deliver_next() and the hand-off to connection queues so
  // deliveries for one consumer are queued in tag order.
  std::mutex dispatch_mu_;
  std::map<ConsumerId, std::weak_ptr<Connection>> owners_;
};

}  // namespace streamsim
