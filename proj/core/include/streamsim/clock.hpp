#pragma once

#include <chrono>

#include "streamsim/units.hpp"

namespace streamsim {

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Nanos now() const = 0;
  /// Only virtual clocks can be advanced; wall clocks throw clock_error.
  virtual void advance(Nanos by) = 0;
  virtual bool is_virtual() const noexcept = 0;
};

/// Monotone clock moved solely by the discrete-event loop.
class VirtualClock final : public Clock {
 public:
  Nanos now() const override { return now_; }
  void advance(Nanos by) override;
  /// Moves forward to `t`; throws clock_error if `t` is in the past.
  void advance_to(Nanos t);
  bool is_virtual() const noexcept override { return true; }

 private:
  Nanos now_{0};
};

/// Real monotonic time measured from construction.
class WallClock final : public Clock {
 public:
  using Steady = std::chrono::steady_clock;

  WallClock() : origin_(Steady::now()) {}

  Nanos now() const override {
    return std::chrono::duration_cast<Nanos>(Steady::now() - origin_);
  }
  void advance(Nanos by) override;
  bool is_virtual() const noexcept override { return false; }

  Steady::time_point to_time_point(Nanos t) const { return origin_ + t; }

 private:
  Steady::time_point origin_;
};

}  // namespace streamsim
