#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "streamsim/clock.hpp"

namespace streamsim {

/// Single-threaded discrete-event loop that owns a virtual clock. Events at
/// equal timestamps run in scheduling order, so a run is fully determined by
/// its inputs.
class EventLoop {
 public:
  using Action = std::function<void()>;

  explicit EventLoop(VirtualClock& clock) : clock_(clock) {}

  Nanos now() const { return clock_.now(); }

  /// `label` feeds the trace digest; it must outlive the loop.
  void schedule_at(Nanos at, std::string_view label, Action action);
  void schedule_after(Nanos delay, std::string_view label, Action action);

  /// Runs until no events remain. Throws Error(timeout) once the wall-clock
  /// budget is exhausted.
  void run(std::chrono::steady_clock::duration wall_budget);

  bool empty() const noexcept { return heap_.empty(); }
  std::uint64_t processed() const noexcept { return processed_; }
  /// FNV-1a digest over every executed (label, virtual timestamp) pair.
  std::uint64_t trace_digest() const noexcept { return digest_; }

 private:
  struct Event {
    Nanos at;
    std::uint64_t seq;
    std::string_view label;
    Action action;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  void mix(std::string_view label, Nanos at);

  VirtualClock& clock_;
  std::vector<Event> heap_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t processed_ = 0;
  std::uint64_t digest_ = 0xcbf29ce484222325ull;
};

}  // namespace streamsim
