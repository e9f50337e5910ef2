#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "streamsim/net.hpp"
#include "streamsim/netpath.hpp"

namespace streamsim {

/// Loopback TCP relay standing in for one hop. Every accepted connection is
/// bridged to 127.0.0.1:`target_port`; each frame is held back until the
/// hop's shared bandwidth has carried it, plus TLS and propagation delay.
/// Frames keep their order per direction.
class HopRelay {
 public:
  HopRelay(HopSpec hop, std::uint16_t target_port);
  ~HopRelay();

  HopRelay(const HopRelay&) = delete;
  HopRelay& operator=(const HopRelay&) = delete;

  std::uint16_t port() const noexcept { return listener_.port(); }
  const HopSpec& hop() const noexcept { return hop_; }

  void start();
  /// Closes the listener and every bridged connection, then joins.
  void stop();

  std::uint64_t frames_forwarded() const noexcept { return forwarded_; }
  /// Connections turned away after the hop had accepted conn_limit of them.
  std::uint64_t refused() const noexcept { return refused_; }

 private:
  struct Bridge;

  void accept_loop();
  void pump(Socket& from, Socket& to, TokenBucket& bucket);

  HopSpec hop_;
  std::uint16_t target_port_;
  Listener listener_;
  TokenBucket upstream_;
  TokenBucket downstream_;
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::unique_ptr<Bridge>> bridges_;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> forwarded_{0};
  std::atomic<std::uint64_t> refused_{0};
  std::uint32_t live_ = 0;
};

/// Relays for one side's hop chain, wired back to back in front of
/// `broker_port`. entry_port() is where clients connect.
class RelayChain {
 public:
  RelayChain(const std::vector<HopSpec>& hops, std::uint16_t broker_port);
  ~RelayChain();

  std::uint16_t entry_port() const noexcept { return entry_; }
  void stop();

 private:
  std::vector<std::unique_ptr<HopRelay>> relays_;
  std::uint16_t entry_;
};

}  // namespace streamsim
