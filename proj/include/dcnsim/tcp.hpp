#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>

#include "dcnsim/packet.hpp"
#include "dcnsim/sim.hpp"

namespace dcn {

constexpr std::int64_t kUnboundedBytes = std::numeric_limits<std::int64_t>::max();

struct TcpParams {
  std::int32_t mss = kMss;
  std::int64_t init_cwnd = 2 * kMss;
  std::int64_t init_ssthresh = 65536;
  std::int64_t max_cwnd = 1 << 20;
  SimTime min_rto = 10 * kMs;
  SimTime max_rto = 60 * kSec;
  SimTime initial_rto = 100 * kMs;  // before the first RTT sample
};

// Arrival-order bookkeeping at the receiver. `expected` tracks the offset
// that would follow the previous new arrival in a perfectly ordered stream;
// every new segment landing elsewhere counts as displaced, with the gap
// measured in segments. Retransmitted duplicates touch neither counter.
struct ReorderStats {
  std::int64_t in_order = 0;
  std::int64_t out_of_order = 0;
  std::int64_t duplicates = 0;
  double gap_sum = 0;
  std::int64_t gap_samples = 0;

  double ratio() const {
    if (out_of_order == 0) return 0;
    return static_cast<double>(out_of_order) /
           static_cast<double>(in_order > 0 ? in_order : 1);
  }
  double window() const { return gap_samples ? gap_sum / static_cast<double>(gap_samples) : 0; }
};

// Deterministic digest of a fully delivered byte stream; the receiver folds
// segments as they enter the in-order prefix, so any loss, duplication, or
// misdelivery leaves a mismatched value.
std::uint64_t stream_digest(std::uint32_t serial, std::int64_t bytes_total, std::int32_t mss);

class TcpSink {
 public:
  virtual ~TcpSink() = default;
  virtual void send_packet(const Packet& p) = 0;
  virtual void on_flow_complete(std::uint32_t flow, SimTime at) { (void)flow, (void)at; }
  virtual void on_rtt_sample(SimTime rtt) { (void)rtt; }
};

// New Reno sender: slow start, congestion avoidance, fast retransmit on the
// third duplicate ack, partial-ack retransmission inside recovery, full-ack
// exit with cwnd = ssthresh. Cumulative acks only; no delayed acks assumed.
class TcpSender {
 public:
  TcpSender(Simulator& sim, TcpSink& sink, std::uint32_t flow, FlowKey key,
            std::int64_t bytes_total, const TcpParams& params);

  void start();                    // emits SYN, arms the handshake timer
  void on_packet(const Packet& p); // SYN-ACK or cumulative ACK

  bool established() const { return established_; }
  bool complete() const { return completed_; }
  SimTime completed_at() const { return completed_at_; }
  std::int64_t snd_una() const { return snd_una_; }
  std::int64_t snd_next() const { return snd_next_; }
  double cwnd() const { return cwnd_; }
  double ssthresh() const { return ssthresh_; }
  bool in_recovery() const { return in_recovery_; }
  std::int64_t recovery_point() const { return recovery_point_; }
  SimTime srtt() const { return srtt_; }
  SimTime rto() const { return rto_; }
  std::int64_t retransmits() const { return retransmits_; }
  std::int64_t timeouts() const { return timeouts_; }
  std::int64_t acks_for_unsent() const { return acks_for_unsent_; }
  std::int64_t bytes_total() const { return bytes_total_; }
  const FlowKey& key() const { return key_; }

 private:
  static void timer_event(void* ctx, std::uint64_t);
  void on_synack();
  void on_ack(const Packet& p);
  void rtt_sample(SimTime sample);
  void pump();
  void emit_segment(std::int64_t seq, std::int32_t len, bool retransmission);
  void retransmit_front();
  void enter_recovery();
  void handle_timeout();
  void arm_timer(SimTime deadline);
  void update_timer();
  void check_complete();
  SimTime effective_rto() const;
  void check_invariants() const;

  Simulator& sim_;
  TcpSink& sink_;
  std::uint32_t flow_;
  FlowKey key_;
  std::int64_t bytes_total_;
  TcpParams p_;

  bool established_ = false;
  bool completed_ = false;
  SimTime completed_at_ = -1;
  std::int64_t snd_una_ = 0;
  std::int64_t snd_next_ = 0;
  double cwnd_;
  double ssthresh_;
  int dup_acks_ = 0;
  bool in_recovery_ = false;
  std::int64_t recovery_point_ = 0;

  SimTime srtt_ = 0;
  SimTime rttvar_ = 0;
  bool have_rtt_ = false;
  SimTime rto_;
  int backoff_ = 0;
  bool timing_ = false;
  std::int64_t timed_seq_ = 0;
  SimTime timed_sent_ = 0;
  SimTime syn_sent_ = 0;

  bool timer_armed_ = false;
  SimTime timer_deadline_ = 0;
  std::multiset<SimTime> timer_horizons_;  // live wakeup events, by fire time

  std::int64_t retransmits_ = 0;
  std::int64_t timeouts_ = 0;
  std::int64_t acks_for_unsent_ = 0;
};

// Receiver: immediate cumulative acks, out-of-order reassembly on segment
// boundaries, reorder statistics over new arrivals only.
class TcpReceiver {
 public:
  TcpReceiver(TcpSink& sink, std::uint32_t flow, FlowKey key, std::int32_t mss = kMss);

  void on_packet(const Packet& p);

  std::int64_t rcv_next() const { return rcv_next_; }
  std::int64_t new_payload_bytes() const { return new_payload_bytes_; }
  const ReorderStats& reorder() const { return reorder_; }
  std::uint64_t digest() const { return digest_; }

 private:
  void send_ack();

  TcpSink& sink_;
  std::uint32_t flow_;
  FlowKey key_;
  std::int32_t mss_;
  bool syn_seen_ = false;
  std::int64_t rcv_next_ = 0;
  std::int64_t expected_arrival_ = 0;
  std::int64_t new_payload_bytes_ = 0;
  std::map<std::int64_t, std::int32_t> pending_;  // out-of-order segments
  ReorderStats reorder_;
  std::uint64_t digest_;
};

}  // namespace dcn
