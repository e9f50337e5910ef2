#include "streamsim/relay.hpp"

#include <chrono>

#include "blocking_queue.hpp"
#include "streamsim/error.hpp"

namespace streamsim {
namespace {

constexpr std::uint64_t kBurstBytes = 64 * 1024;
constexpr std::size_t kFramesInFlight = 4;
constexpr std::size_t kLengthPrefix = 4;

struct HeldFrame {
  TokenBucket::Steady::time_point release;
  std::vector<std::byte> bytes;
};

}  // namespace

struct HopRelay::Bridge {
  Socket client;
  Socket server;
  std::vector<std::thread> threads;
};

HopRelay::HopRelay(HopSpec hop, std::uint16_t target_port)
    : hop_(std::move(hop)),
      target_port_(target_port),
      listener_(Listener::bind_loopback()),
      upstream_(hop_.bandwidth_bps, kBurstBytes),
      downstream_(hop_.bandwidth_bps, kBurstBytes) {}

HopRelay::~HopRelay() { stop(); }

void HopRelay::start() {
  acceptor_ = std::thread([this] { accept_loop(); });
}

void HopRelay::accept_loop() {
  while (!stopping_) {
    Socket client = listener_.accept();
    if (!client.valid()) return;
    std::lock_guard lock(mu_);
    if (stopping_) return;
    if (hop_.conn_limit && live_ >= *hop_.conn_limit) {
      ++refused_;
      continue;
    }
    auto bridge = std::make_unique<Bridge>();
    bridge->client = std::move(client);
    try {
      bridge->server = Socket::connect_loopback(target_port_);
    } catch (const Error&) {
      continue;
    }
    ++live_;
    Bridge& b = *bridge;
    b.threads.emplace_back([this, &b] { pump(b.client, b.server, upstream_); });
    b.threads.emplace_back(
        [this, &b] { pump(b.server, b.client, downstream_); });
    bridges_.push_back(std::move(bridge));
  }
}

// Reader and writer are split so a frame waiting out its hop delay does not
// stop the next frame from being read and scheduled.
void HopRelay::pump(Socket& from, Socket& to, TokenBucket& bucket) {
  detail::BlockingQueue<HeldFrame> held(kFramesInFlight);
  const double tls_bytes =
      std::chrono::duration<double>(hop_.tls_overhead).count() *
      hop_.bandwidth_bps / 8.0;

  std::thread writer([&] {
    try {
      while (auto frame = held.pop()) {
        std::this_thread::sleep_until(frame->release);
        write_frame(to, {std::span<const std::byte>(frame->bytes)});
        ++forwarded_;
      }
      to.shutdown_write();
    } catch (const Error&) {
      held.close();
      from.shutdown();
    }
  });

  try {
    while (auto frame = read_frame(from)) {
      auto occupancy = static_cast<std::uint64_t>(
          static_cast<double>(frame->size() + kLengthPrefix) + tls_bytes);
      auto release = bucket.reserve(occupancy) + hop_.latency;
      if (!held.push(HeldFrame{release, std::move(*frame)})) break;
    }
  } catch (const Error&) {
  }
  held.close();
  writer.join();
}

void HopRelay::stop() {
  if (stopping_.exchange(true)) return;
  listener_.shutdown();
  if (acceptor_.joinable()) acceptor_.join();
  std::lock_guard lock(mu_);
  for (auto& b : bridges_) {
    b->client.shutdown();
    b->server.shutdown();
  }
  for (auto& b : bridges_) {
    for (auto& t : b->threads) t.join();
  }
  bridges_.clear();
  live_ = 0;
}

RelayChain::RelayChain(const std::vector<HopSpec>& hops,
                       std::uint16_t broker_port)
    : entry_(broker_port) {
  relays_.resize(hops.size());
  for (std::size_t i = hops.size(); i-- > 0;) {
    relays_[i] = std::make_unique<HopRelay>(hops[i], entry_);
    relays_[i]->start();
    entry_ = relays_[i]->port();
  }
}

RelayChain::~RelayChain() { stop(); }

void RelayChain::stop() {
  for (auto& r : relays_) r->stop();
}

}  // namespace streamsim
