#include "streamsim/event_loop.hpp"

#include <algorithm>

#include "streamsim/error.hpp"

namespace streamsim {

void EventLoop::schedule_at(Nanos at, std::string_view label, Action action) {
  if (at < clock_.now()) {
    throw Error(Errc::clock_error, "cannot schedule an event in the past");
  }
  heap_.push_back(Event{at, next_seq_++, label, std::move(action)});
  std::push_heap(heap_.begin(), heap_.end(), Later{});
}

void EventLoop::schedule_after(Nanos delay, std::string_view label,
                               Action action) {
  schedule_at(clock_.now() + delay, label, std::move(action));
}

void EventLoop::mix(std::string_view label, Nanos at) {
  constexpr std::uint64_t kPrime = 0x100000001b3ull;
  for (char ch : label) {
    digest_ ^= static_cast<unsigned char>(ch);
    digest_ *= kPrime;
  }
  auto t = static_cast<std::uint64_t>(at.count());
  for (int i = 0; i < 8; ++i) {
    digest_ ^= (t >> (8 * i)) & 0xff;
    digest_ *= kPrime;
  }
}

void EventLoop::run(std::chrono::steady_clock::duration wall_budget) {
  const auto deadline = std::chrono::steady_clock::now() + wall_budget;
  while (!heap_.empty()) {
    std::pop_heap(heap_.begin(), heap_.end(), Later{});
    Event ev = std::move(heap_.back());
    heap_.pop_back();
    clock_.advance_to(ev.at);
    mix(ev.label, ev.at);
    ev.action();
    if ((++processed_ & 0xfff) == 0 &&
        std::chrono::steady_clock::now() > deadline) {
      throw Error(Errc::timeout, "simulation exceeded its wall-clock budget");
    }
  }
}

}  // namespace streamsim
