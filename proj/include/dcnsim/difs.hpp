#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcnsim/fabric.hpp"
#include "dcnsim/packet.hpp"
#include "dcnsim/rng.hpp"
#include "dcnsim/sim.hpp"
#include "dcnsim/topology.hpp"

namespace dcn {

struct ControlConfig {
  SimTime period = 10 * kMs;
  // Imbalance threshold: flow counts in Count mode, bits/s in Rate mode.
  double delta_count = 1;
  double delta_rate_bps = 100e6;
  MetricMode mode = MetricMode::Count;
  int max_ears_per_tick = 1;
  SimTime rate_window = 100 * kMs;
  // Entries idle longer than max(multiple * avg RTT, floor) are dropped.
  double expiry_rtt_multiple = 3;
  SimTime expiry_floor = 20 * kMs;
  // 0 picks half the switch arity (uplink count) per tick.
  int rebalance_move_cap = 0;

  double threshold() const { return mode == MetricMode::Count ? delta_count : delta_rate_bps; }
};

// Reverse-path control message recommending a better path for one flow.
// Wire size is fixed (kEarWireBytes) for overhead accounting.
struct EarMessage {
  std::uint32_t flow = 0;
  FlowKey key;
  PathSpec rec;
  NodeId origin;
  SimTime created = 0;
  std::vector<NodeId> hop_trace;
};

struct ParMessage {
  std::uint32_t flow = 0;
  FlowKey key;
  LinkId in_link;
  bool implicit = true;
};

// How a control unit reaches the rest of the run: EAR transport with
// per-hop latency, bookkeeping callbacks, and the RTT estimate that drives
// entry expiry. Tests stub this; the experiment runner implements it.
class DifsSink {
 public:
  virtual ~DifsSink() = default;
  // Carries an EAR across `via` (a link leaving the calling switch); delivery
  // is reliable and delayed by the link's propagation delay only.
  virtual void forward_ear(EarMessage&& ear, LinkId via) = 0;
  virtual void note_ear_emitted(const EarMessage&, SimTime) {}
  virtual void note_ear_applied(const EarMessage&, SimTime) {}
  virtual void note_ear_discarded(const EarMessage&, SimTime) {}
  virtual void note_path_change(std::uint32_t, NodeId, SimTime) {}
  virtual void report_unreachable(std::uint32_t, NodeId, SimTime) {}
  virtual SimTime avg_rtt() const { return 0; }
};

// Per-switch scheduling unit: periodic control loop (expiry, SIMO
// rebalancing, imbalance detection), path allocation for unseen flows,
// explicit adaptation on received EARs, and link-failure recovery. Reads and
// writes only its own switch's state; everything remote happens via
// messages through the sink.
class DifsUnit {
 public:
  DifsUnit(const Topology& topo, Switch& sw, const ControlConfig& cfg, DifsSink& sink,
           Rng& tiebreak, Rng& ear_pick);

  // One control iteration: expire idle entries, refresh rate windows,
  // rebalance SIMO flows, then scan for MISO imbalance.
  void tick(SimTime now);

  // Assigns an outgoing link for an unseen flow (fewest-flows link, random
  // tiebreak) and installs the table entry. Invalid link id when nothing is
  // feasible.
  LinkId path_allocation(std::uint32_t flow, const FlowKey& key, LinkId in, SimTime now);
  LinkId handle_par(const ParMessage& par, SimTime now);

  void on_ear(EarMessage&& ear, SimTime now);
  // Reallocates entries leaving on `dead`; emits EARs toward sources when no
  // local alternative exists, reports flows with unreachable destinations.
  void on_link_failure(LinkId dead, SimTime now);

  // Control-loop stages, exposed for direct exercise in tests.
  int expire(SimTime now);
  int rebalance_simo(SimTime now);
  bool imbalance_detect(SimTime now);

  const ControlConfig& config() const { return cfg_; }
  Switch& unit_switch() { return sw_; }

  std::int64_t ears_emitted() const { return ears_emitted_; }
  std::int64_t ears_applied() const { return ears_applied_; }
  std::int64_t ears_forwarded() const { return ears_forwarded_; }
  std::int64_t ears_discarded() const { return ears_discarded_; }
  std::int64_t swaps() const { return swaps_; }
  std::int64_t rebalance_moves() const { return rebalance_moves_; }
  std::int64_t expired() const { return expired_; }

 private:
  double out_metric_one(LinkId l) const;
  double in_metric_one(LinkId l) const;
  SimTime expiry_threshold() const;
  // Most recently installed entry leaving on `l` whose destination the
  // candidate link can also serve; 0 when none.
  std::uint32_t latest_movable_on(LinkId l, LinkId candidate, std::uint32_t excluded) const;
  void emit_ear(EarMessage&& ear, LinkId reverse_in, SimTime now);

  const Topology& topo_;
  Switch& sw_;
  ControlConfig cfg_;
  DifsSink& sink_;
  Rng& tiebreak_;
  Rng& ear_pick_;

  std::vector<LinkId> scratch_links_;
  std::vector<double> scratch_metric_;
  std::vector<std::uint32_t> scratch_flows_;

  std::int64_t ears_emitted_ = 0;
  std::int64_t ears_applied_ = 0;
  std::int64_t ears_forwarded_ = 0;
  std::int64_t ears_discarded_ = 0;
  std::int64_t swaps_ = 0;
  std::int64_t rebalance_moves_ = 0;
  std::int64_t expired_ = 0;
};

struct MarginRow {
  std::string scope;
  std::int64_t observed = 0;
  std::int64_t bound = 0;
  std::int64_t max_n = 0;
  std::int64_t min_n = 0;
  // Spread pinned in place by flow destinations (receiving-side rows only):
  // a flow's target host fixes its last-hop edge switch, so demand that
  // concentrates on one edge widens the observed spread through no choice of
  // the scheduler. Only observed - forced counts against the bound.
  std::int64_t forced = 0;
};

struct MarginsReport {
  std::vector<MarginRow> rows;
  bool ok = true;
};

// Brute-force flow-balance audit over all flow tables. Counts, per sending
// side: flows each pod's edge switches forward to each aggregate (bound
// delta*k/2 per pod), flows all aggregates forward to each core (bound 3k,
// global), and flows each pod's aggregates forward down to each edge switch
// (bound k/2 per pod). `switches` is indexed by node id minus host count.
MarginsReport compute_margins(const Topology& topo, const std::vector<const Switch*>& switches,
                              double delta);

}  // namespace dcn
