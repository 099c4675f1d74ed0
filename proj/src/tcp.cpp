#include "dcnsim/tcp.hpp"

#include <algorithm>

namespace dcn {

namespace {
constexpr std::uint64_t kDigestSeed = 0x9E3779B97F4A7C15ULL;

std::uint64_t digest_fold(std::uint64_t h, std::int64_t seq, std::int32_t len) {
  h ^= static_cast<std::uint64_t>(seq) + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
  h ^= static_cast<std::uint64_t>(len) + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
  return h;
}
}  // namespace

std::uint64_t stream_digest(std::uint32_t serial, std::int64_t bytes_total, std::int32_t mss) {
  std::uint64_t h = kDigestSeed ^ serial;
  for (std::int64_t off = 0; off < bytes_total; off += mss) {
    std::int32_t len = static_cast<std::int32_t>(std::min<std::int64_t>(mss, bytes_total - off));
    h = digest_fold(h, off, len);
  }
  return h;
}

TcpSender::TcpSender(Simulator& sim, TcpSink& sink, std::uint32_t flow, FlowKey key,
                     std::int64_t bytes_total, const TcpParams& params)
    : sim_(sim),
      sink_(sink),
      flow_(flow),
      key_(key),
      bytes_total_(bytes_total),
      p_(params),
      cwnd_(static_cast<double>(params.init_cwnd)),
      ssthresh_(static_cast<double>(params.init_ssthresh)),
      rto_(params.initial_rto) {}

void TcpSender::start() {
  Packet syn;
  syn.flow = flow_;
  syn.key = key_;
  syn.flags = kFlagSyn;
  syn_sent_ = sim_.now();
  sink_.send_packet(syn);
  arm_timer(sim_.now() + effective_rto());
}

void TcpSender::on_packet(const Packet& p) {
  DCN_REQUIRE(p.to_src, "sender received a forward-direction packet");
  if (p.has(kFlagSyn) && p.has(kFlagAck)) {
    on_synack();
    return;
  }
  if (p.has(kFlagAck)) on_ack(p);
}

void TcpSender::on_synack() {
  if (established_) return;  // retransmitted handshake reply
  established_ = true;
  rtt_sample(sim_.now() - syn_sent_);
  backoff_ = 0;
  check_complete();
  pump();
}

void TcpSender::rtt_sample(SimTime sample) {
  if (sample < 0) sample = 0;
  if (!have_rtt_) {
    srtt_ = sample;
    rttvar_ = sample / 2;
    have_rtt_ = true;
  } else {
    SimTime err = srtt_ - sample;
    if (err < 0) err = -err;
    rttvar_ = (3 * rttvar_ + err) / 4;
    srtt_ = (7 * srtt_ + sample) / 8;
  }
  rto_ = std::clamp(srtt_ + std::max<SimTime>(4 * rttvar_, 1), p_.min_rto, p_.max_rto);
  sink_.on_rtt_sample(sample);
}

void TcpSender::on_ack(const Packet& p) {
  if (!established_ || completed_) return;
  std::int64_t ack = p.ack_seq;
  if (ack > snd_next_) {
    ++acks_for_unsent_;
    return;
  }
  if (ack > snd_una_) {
    std::int64_t newly = ack - snd_una_;
    if (timing_ && ack > timed_seq_) {
      rtt_sample(sim_.now() - timed_sent_);
      timing_ = false;
    }
    backoff_ = 0;
    if (in_recovery_) {
      if (ack >= recovery_point_) {
        snd_una_ = ack;
        in_recovery_ = false;
        dup_acks_ = 0;
        cwnd_ = ssthresh_;
      } else {
        // Partial ack: the next hole starts exactly at the ack point.
        snd_una_ = ack;
        retransmit_front();
        cwnd_ = std::max(cwnd_ - static_cast<double>(newly) + p_.mss,
                         static_cast<double>(p_.mss));
      }
    } else {
      snd_una_ = ack;
      dup_acks_ = 0;
      if (cwnd_ < ssthresh_)
        cwnd_ += p_.mss;
      else
        cwnd_ += static_cast<double>(p_.mss) * p_.mss / cwnd_;
    }
    cwnd_ = std::min(cwnd_, static_cast<double>(p_.max_cwnd));
    update_timer();
    check_complete();
    if (!completed_) pump();
    check_invariants();
    return;
  }
  if (ack == snd_una_ && snd_next_ > snd_una_) {
    ++dup_acks_;
    if (!in_recovery_ && dup_acks_ == 3) {
      enter_recovery();
    } else if (in_recovery_) {
      cwnd_ = std::min(cwnd_ + p_.mss, static_cast<double>(p_.max_cwnd));
      pump();
    }
    check_invariants();
  }
}

void TcpSender::enter_recovery() {
  std::int64_t flight = snd_next_ - snd_una_;
  ssthresh_ = std::max(static_cast<double>(flight) / 2, static_cast<double>(2 * p_.mss));
  recovery_point_ = snd_next_;
  in_recovery_ = true;
  retransmit_front();
  cwnd_ = ssthresh_ + 3 * p_.mss;
  update_timer();
  pump();
}

void TcpSender::pump() {
  if (!established_ || completed_) return;
  std::int64_t wnd = static_cast<std::int64_t>(cwnd_);
  while (snd_next_ < bytes_total_ && snd_next_ - snd_una_ + p_.mss <= wnd) {
    std::int32_t len =
        static_cast<std::int32_t>(std::min<std::int64_t>(p_.mss, bytes_total_ - snd_next_));
    emit_segment(snd_next_, len, false);
    snd_next_ += len;
  }
  update_timer();
}

void TcpSender::emit_segment(std::int64_t seq, std::int32_t len, bool retransmission) {
  Packet p;
  p.flow = flow_;
  p.key = key_;
  p.seq = seq;
  p.payload_len = len;
  if (retransmission) {
    ++retransmits_;
    if (timing_ && seq <= timed_seq_ && timed_seq_ < seq + len) timing_ = false;  // Karn
  } else if (!timing_) {
    timing_ = true;
    timed_seq_ = seq;
    timed_sent_ = sim_.now();
  }
  sink_.send_packet(p);
}

void TcpSender::retransmit_front() {
  std::int64_t remaining = bytes_total_ - snd_una_;
  std::int32_t len = static_cast<std::int32_t>(std::min<std::int64_t>(p_.mss, remaining));
  DCN_REQUIRE(len > 0, "retransmit with nothing outstanding");
  emit_segment(snd_una_, len, true);
  arm_timer(sim_.now() + effective_rto());
}

SimTime TcpSender::effective_rto() const {
  SimTime r = rto_;
  for (int i = 0; i < backoff_ && r < p_.max_rto; ++i) r *= 2;
  return std::min(r, p_.max_rto);
}

void TcpSender::arm_timer(SimTime deadline) {
  timer_armed_ = true;
  timer_deadline_ = deadline;
  // Lazy wakeups: only a deadline earlier than every live wakeup needs a new
  // event; later deadlines are chased when the earliest wakeup fires.
  if (timer_horizons_.empty() || deadline < *timer_horizons_.begin()) {
    timer_horizons_.insert(deadline);
    sim_.schedule(deadline, &TcpSender::timer_event, this, static_cast<std::uint64_t>(deadline));
  }
}

void TcpSender::update_timer() {
  bool outstanding = established_ ? snd_next_ > snd_una_ : !completed_;
  if (!outstanding) {
    timer_armed_ = false;
    return;
  }
  arm_timer(sim_.now() + effective_rto());
}

void TcpSender::timer_event(void* ctx, std::uint64_t fire_at) {
  auto* self = static_cast<TcpSender*>(ctx);
  auto it = self->timer_horizons_.find(static_cast<SimTime>(fire_at));
  if (it != self->timer_horizons_.end()) self->timer_horizons_.erase(it);
  if (!self->timer_armed_) return;
  if (self->sim_.now() < self->timer_deadline_) {
    // Deadline moved since this event was scheduled; chase it.
    self->arm_timer(self->timer_deadline_);
    return;
  }
  self->handle_timeout();
}

void TcpSender::handle_timeout() {
  if (completed_) return;
  ++timeouts_;
  backoff_ = std::min(backoff_ + 1, 12);
  if (!established_) {
    Packet syn;
    syn.flow = flow_;
    syn.key = key_;
    syn.flags = kFlagSyn;
    syn_sent_ = sim_.now();
    sink_.send_packet(syn);
    arm_timer(sim_.now() + effective_rto());
    return;
  }
  if (snd_next_ == snd_una_) {
    timer_armed_ = false;
    return;
  }
  std::int64_t flight = snd_next_ - snd_una_;
  ssthresh_ = std::max(static_cast<double>(flight) / 2, static_cast<double>(2 * p_.mss));
  cwnd_ = p_.mss;
  in_recovery_ = false;
  dup_acks_ = 0;
  timing_ = false;
  retransmit_front();
}

void TcpSender::check_complete() {
  if (completed_ || bytes_total_ == kUnboundedBytes) return;
  if (snd_una_ >= bytes_total_) {
    completed_ = true;
    completed_at_ = sim_.now();
    timer_armed_ = false;
    sink_.on_flow_complete(flow_, completed_at_);
  }
}

void TcpSender::check_invariants() const {
  DCN_REQUIRE(snd_una_ <= snd_next_, "snd_una passed snd_next");
  DCN_REQUIRE(cwnd_ >= p_.mss, "cwnd below one segment");
  DCN_REQUIRE(!in_recovery_ || recovery_point_ > snd_una_,
              "in recovery with recovery point at or below snd_una");
}

TcpReceiver::TcpReceiver(TcpSink& sink, std::uint32_t flow, FlowKey key, std::int32_t mss)
    : sink_(sink), flow_(flow), key_(key), mss_(mss), digest_(kDigestSeed ^ key.serial) {}

void TcpReceiver::on_packet(const Packet& p) {
  DCN_REQUIRE(!p.to_src, "receiver saw a reverse-direction packet");
  if (p.has(kFlagSyn)) {
    syn_seen_ = true;
    Packet reply;
    reply.flow = flow_;
    reply.key = key_;
    reply.flags = kFlagSyn | kFlagAck;
    reply.to_src = true;
    sink_.send_packet(reply);
    return;
  }
  if (p.payload_len <= 0) return;
  DCN_REQUIRE(p.payload_len <= mss_, "payload exceeds MSS");
  std::int64_t end = p.seq + p.payload_len;
  bool is_new = end > rcv_next_ && !pending_.count(p.seq);
  DCN_REQUIRE(p.seq >= rcv_next_ || end <= rcv_next_,
              "segment straddles the in-order point");
  if (is_new) {
    if (p.seq == expected_arrival_) {
      ++reorder_.in_order;
    } else {
      ++reorder_.out_of_order;
      double gap = static_cast<double>(p.seq > expected_arrival_ ? p.seq - expected_arrival_
                                                                 : expected_arrival_ - p.seq);
      reorder_.gap_sum += gap / mss_;
      ++reorder_.gap_samples;
    }
    expected_arrival_ = end;
    new_payload_bytes_ += p.payload_len;
    pending_.emplace(p.seq, p.payload_len);
    while (!pending_.empty() && pending_.begin()->first == rcv_next_) {
      auto [seq, len] = *pending_.begin();
      digest_ = digest_fold(digest_, seq, len);
      rcv_next_ = seq + len;
      pending_.erase(pending_.begin());
    }
  } else {
    ++reorder_.duplicates;
  }
  send_ack();
}

void TcpReceiver::send_ack() {
  Packet ack;
  ack.flow = flow_;
  ack.key = key_;
  ack.flags = kFlagAck;
  ack.to_src = true;
  ack.ack_seq = rcv_next_;
  sink_.send_packet(ack);
}

}  // namespace dcn
