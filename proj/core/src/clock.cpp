#include "streamsim/clock.hpp"

#include "streamsim/error.hpp"

namespace streamsim {

void VirtualClock::advance(Nanos by) {
  if (by < Nanos{0}) {
    throw Error(Errc::clock_error, "virtual clock cannot move backwards");
  }
  now_ += by;
}

void VirtualClock::advance_to(Nanos t) {
  if (t < now_) {
    throw Error(Errc::clock_error, "virtual clock cannot move backwards");
  }
  now_ = t;
}

void WallClock::advance(Nanos) {
  throw Error(Errc::clock_error, "cannot advance a wall clock");
}

}  // namespace streamsim
