#include "dcnsim/sim.hpp"

namespace dcn {

void sim_fatal(const std::string& msg) { throw SimAbort(msg); }

EventHandle Simulator::schedule(SimTime fire_at, EventFn fn, void* ctx, std::uint64_t arg) {
  DCN_REQUIRE(fire_at >= now_,
              "schedule into the past: fire_at=" + std::to_string(fire_at) +
                  " now=" + std::to_string(now_));
  DCN_REQUIRE(fn != nullptr, "schedule with null action");
  std::uint64_t seq = next_seq_++;
  queue_.push(Ev{fire_at, seq, fn, ctx, arg});
  return EventHandle{seq};
}

void Simulator::cancel(EventHandle h) {
  if (h.valid()) cancelled_.insert(h.seq);
}

bool Simulator::pop_next(Ev& out, SimTime deadline) {
  while (!queue_.empty()) {
    const Ev& top = queue_.top();
    if (top.t > deadline) return false;
    Ev ev = top;
    queue_.pop();
    if (!cancelled_.empty()) {
      auto it = cancelled_.find(ev.seq);
      if (it != cancelled_.end()) {
        cancelled_.erase(it);
        continue;
      }
    }
    out = ev;
    return true;
  }
  return false;
}

void Simulator::dispatch(const Ev& ev) {
  DCN_REQUIRE(ev.t >= now_, "event queue produced a time in the past");
  now_ = ev.t;
  ++dispatched_;
  // FNV-1a over (t, seq).
  auto mix = [this](std::uint64_t v) {
    trace_hash_ ^= v;
    trace_hash_ *= 1099511628211ULL;
  };
  mix(static_cast<std::uint64_t>(ev.t));
  mix(ev.seq);
  if (record_trace_) trace_.emplace_back(ev.t, ev.seq);
  if (recent_.size() < kRecentRing) {
    recent_.emplace_back(ev.t, ev.seq);
  } else {
    recent_[recent_pos_] = {ev.t, ev.seq};
    recent_pos_ = (recent_pos_ + 1) % kRecentRing;
  }
  ev.fn(ev.ctx, ev.arg);
}

SimTime Simulator::run_until(SimTime deadline) {
  DCN_REQUIRE(deadline >= now_, "run_until deadline precedes current time");
  Ev ev;
  while (pop_next(ev, deadline)) dispatch(ev);
  now_ = deadline;
  return now_;
}

bool Simulator::step() {
  Ev ev;
  if (!pop_next(ev, INT64_MAX)) return false;
  dispatch(ev);
  return true;
}

std::vector<std::pair<SimTime, std::uint64_t>> Simulator::recent_dispatches() const {
  std::vector<std::pair<SimTime, std::uint64_t>> out;
  if (recent_.size() < kRecentRing) {
    out = recent_;
  } else {
    out.reserve(kRecentRing);
    for (std::size_t i = 0; i < kRecentRing; ++i)
      out.push_back(recent_[(recent_pos_ + i) % kRecentRing]);
  }
  return out;
}

}  // namespace dcn
