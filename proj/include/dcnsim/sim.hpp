#pragma once

#include <cstdint>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace dcn {

// Simulation clock: integer nanoseconds from run start.
using SimTime = std::int64_t;

constexpr SimTime kUs = 1'000;
constexpr SimTime kMs = 1'000'000;
constexpr SimTime kSec = 1'000'000'000;

inline SimTime seconds(double s) { return static_cast<SimTime>(s * 1e9 + 0.5); }
inline double to_seconds(SimTime t) { return static_cast<double>(t) / 1e9; }

// Raised on internal consistency violations; aborts the run with a diagnostic.
struct SimAbort : std::logic_error {
  using std::logic_error::logic_error;
};

[[noreturn]] void sim_fatal(const std::string& msg);

#define DCN_REQUIRE(cond, msg) \
  do {                         \
    if (!(cond)) ::dcn::sim_fatal(msg); \
  } while (0)

using EventFn = void (*)(void* ctx, std::uint64_t arg);

struct EventHandle {
  std::uint64_t seq = 0;
  bool valid() const { return seq != 0; }
};

// Discrete-event scheduler. Events with equal fire_at dispatch in schedule
// order (seq is the tiebreak), so a fixed input always yields the same trace.
class Simulator {
 public:
  SimTime now() const { return now_; }

  EventHandle schedule(SimTime fire_at, EventFn fn, void* ctx, std::uint64_t arg = 0);
  void cancel(EventHandle h);

  // Dispatches every event with fire_at <= deadline, then advances the clock
  // to the deadline even if the queue drained early.
  SimTime run_until(SimTime deadline);

  // Dispatches the single earliest event; returns false on an empty queue.
  bool step();

  bool empty() const { return queue_.size() == cancelled_.size(); }
  std::size_t pending() const { return queue_.size() - cancelled_.size(); }

  std::uint64_t dispatch_count() const { return dispatched_; }
  // Order-sensitive digest of (fire_at, seq) pairs dispatched so far.
  std::uint64_t trace_hash() const { return trace_hash_; }

  void record_trace(bool on) { record_trace_ = on; }
  const std::vector<std::pair<SimTime, std::uint64_t>>& trace() const { return trace_; }

  // Most recent dispatches, oldest first; attached to abort diagnostics.
  std::vector<std::pair<SimTime, std::uint64_t>> recent_dispatches() const;

 private:
  struct Ev {
    SimTime t;
    std::uint64_t seq;
    EventFn fn;
    void* ctx;
    std::uint64_t arg;
  };
  struct Later {
    bool operator()(const Ev& a, const Ev& b) const {
      return a.t > b.t || (a.t == b.t && a.seq > b.seq);
    }
  };

  bool pop_next(Ev& out, SimTime deadline);
  void dispatch(const Ev& ev);

  std::priority_queue<Ev, std::vector<Ev>, Later> queue_;
  std::unordered_set<std::uint64_t> cancelled_;
  SimTime now_ = 0;
  std::uint64_t next_seq_ = 1;
  std::uint64_t dispatched_ = 0;
  std::uint64_t trace_hash_ = 1469598103934665603ULL;
  bool record_trace_ = false;
  std::vector<std::pair<SimTime, std::uint64_t>> trace_;
  static constexpr std::size_t kRecentRing = 32;
  std::vector<std::pair<SimTime, std::uint64_t>> recent_;
  std::size_t recent_pos_ = 0;
};

}  // namespace dcn
