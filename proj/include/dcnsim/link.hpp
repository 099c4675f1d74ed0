#pragma once

#include <cstdint>
#include <optional>

#include "dcnsim/packet.hpp"
#include "dcnsim/sim.hpp"

namespace dcn {

// Buffer sized to the delay-bandwidth product, floored at one full wire
// packet so a standalone packet always fits.
inline std::int64_t delay_bandwidth_capacity(std::int64_t capacity_bps, SimTime delay) {
  std::int64_t product = capacity_bps * delay;  // bit-nanoseconds
  std::int64_t bytes = (product + 8LL * 1'000'000'000LL - 1) / (8LL * 1'000'000'000LL);
  return bytes < kWirePacketBytes ? kWirePacketBytes : bytes;
}

// Drop-tail FIFO output queue plus transmitter for one directed link.
//
// Occupancy is tracked analytically: admitted bytes serialize back to back,
// so the backlog at time t is exactly (busy_until - t) * rate. Admission
// either returns the arrival time at the far end (departure + propagation)
// or drops the packet. FIFO order follows from the busy-horizon chaining:
// later admissions can never depart earlier.
class LinkQueue {
 public:
  struct Counters {
    std::int64_t enqueued_pkts = 0;
    std::int64_t enqueued_bytes = 0;
    std::int64_t dropped_pkts = 0;
    std::int64_t dropped_bytes = 0;
    std::int64_t delivered_pkts = 0;
    std::int64_t delivered_bytes = 0;
    SimTime busy_ns = 0;
  };

  LinkQueue() = default;
  LinkQueue(std::int64_t capacity_bps, SimTime delay, std::int64_t queue_bytes)
      : bps_(capacity_bps), delay_(delay), capacity_bytes_(queue_bytes) {}

  SimTime serialization_ns(std::int64_t wire_bytes) const {
    return (wire_bytes * 8LL * 1'000'000'000LL + bps_ - 1) / bps_;
  }

  std::int64_t backlog_bytes(SimTime now) const {
    if (busy_until_ <= now) return 0;
    return ((busy_until_ - now) * bps_ + 8LL * 1'000'000'000LL - 1) /
           (8LL * 1'000'000'000LL);
  }

  // Returns the arrival time at the far end, or nullopt on tail drop.
  std::optional<SimTime> admit(SimTime now, std::int64_t wire_bytes) {
    if (backlog_bytes(now) + wire_bytes > capacity_bytes_) {
      ++counters_.dropped_pkts;
      counters_.dropped_bytes += wire_bytes;
      return std::nullopt;
    }
    SimTime start = busy_until_ > now ? busy_until_ : now;
    SimTime ser = serialization_ns(wire_bytes);
    busy_until_ = start + ser;
    counters_.busy_ns += ser;
    ++counters_.enqueued_pkts;
    counters_.enqueued_bytes += wire_bytes;
    return busy_until_ + delay_;
  }

  void note_delivered(std::int64_t wire_bytes) {
    ++counters_.delivered_pkts;
    counters_.delivered_bytes += wire_bytes;
  }

  std::int64_t capacity_bytes() const { return capacity_bytes_; }
  std::int64_t capacity_bps() const { return bps_; }
  SimTime delay() const { return delay_; }
  SimTime busy_until() const { return busy_until_; }
  const Counters& counters() const { return counters_; }

  // Bytes accepted but not yet delivered or dropped (buffered or in flight).
  std::int64_t outstanding_bytes() const {
    return counters_.enqueued_bytes - counters_.delivered_bytes;
  }

 private:
  std::int64_t bps_ = 1'000'000'000;
  SimTime delay_ = 0;
  std::int64_t capacity_bytes_ = kWirePacketBytes;
  SimTime busy_until_ = 0;
  Counters counters_;
};

}  // namespace dcn
