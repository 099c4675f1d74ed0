#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dcnsim/packet.hpp"
#include "dcnsim/sim.hpp"
#include "dcnsim/topology.hpp"

namespace dcn {

class DifsUnit;

enum class SchedulerKind : std::uint8_t { Difs, Ecmp };
enum class MetricMode : std::uint8_t { Count, Rate };
enum class FlowClass : std::uint8_t { Siso, Simo, Miso };

struct FlowTableEntry {
  std::uint32_t flow = 0;
  FlowKey key;
  LinkId in_link;
  LinkId out_link;
  SimTime last_seen = 0;
  std::uint64_t install_seq = 0;
  std::int64_t bytes_seen = 0;
  // Sending rate, exponentially averaged over fixed windows.
  double rate_bps = 0;
  std::int64_t window_bytes = 0;
  SimTime window_start = 0;
};

// Data plane of one switch: forwarding, per-flow state for scheduled
// elephants, port state vectors, and elephant detection at source edges.
// Never reads another switch's state; coordination happens only through
// packets and control messages.
class Switch {
 public:
  Switch(const Topology& topo, NodeId self, SchedulerKind kind, std::uint64_t ecmp_salt,
         std::int64_t elephant_threshold, const std::vector<char>* link_alive);

  void attach_control(DifsUnit* ctl) { ctl_ = ctl; }

  NodeId self() const { return self_; }
  Layer layer() const { return topo_.layer(self_); }
  SchedulerKind kind() const { return kind_; }

  // Chooses the outgoing link for a packet arriving on `in`, mutating
  // elephant counters and the flow table as side effects. Returns an invalid
  // link when no live route exists.
  LinkId route(LinkId in, Packet& p, SimTime now);

  FlowClass classify(NodeId src_host, NodeId dst_host) const;

  // Live links that can carry traffic toward dst from this switch.
  void feasible_links(NodeId dst, std::vector<LinkId>& out) const;
  bool link_feasible(LinkId l, NodeId dst) const;

  // Incoming links on the downhill side (from cores for an aggregate, from
  // aggregates for an edge switch); the scope of MISO imbalance detection.
  std::span<const LinkId> downhill_in_links() const;

  bool has_entry(std::uint32_t flow) const { return table_.count(flow) != 0; }
  const FlowTableEntry* find_entry(std::uint32_t flow) const;
  FlowTableEntry* find_entry(std::uint32_t flow);
  std::size_t table_size() const { return table_.size(); }
  const std::unordered_map<std::uint32_t, FlowTableEntry>& table() const { return table_; }

  void install_entry(std::uint32_t flow, const FlowKey& key, LinkId in, LinkId out,
                     SimTime now);
  void remove_entry(std::uint32_t flow);
  void move_flow(std::uint32_t flow, LinkId new_out, SimTime now);

  int expire_flows(SimTime now, SimTime idle_threshold);
  void update_rate_windows(SimTime now, SimTime window);

  std::int64_t vo(LinkId l) const { return vo_[topo_.link(l).out_index]; }
  std::int64_t vi(LinkId l) const { return vi_[topo_.link(l).in_index]; }
  // Metric per link of `links`, under the given mode: entry counts, or summed
  // measured rates.
  void out_metrics(std::span<const LinkId> links, MetricMode m, std::vector<double>& v) const;
  void in_metrics(std::span<const LinkId> links, MetricMode m, std::vector<double>& v) const;

  bool alive(LinkId l) const { return !link_alive_ || (*link_alive_)[l.v]; }

  // Recomputes both port state vectors from the flow table and aborts on any
  // disagreement with the incrementally maintained values.
  void psv_recount_check() const;

  std::string dump_state_json(SimTime now) const;

  std::int64_t dropped_no_route() const { return dropped_no_route_; }
  std::uint64_t next_install_seq() const { return install_seq_; }

 private:
  LinkId ecmp_choice(const Packet& p, NodeId dst) const;
  void detect_elephant(Packet& p);

  const Topology& topo_;
  NodeId self_;
  SchedulerKind kind_;
  std::uint64_t salt_;
  std::int64_t elephant_threshold_;
  const std::vector<char>* link_alive_;
  DifsUnit* ctl_ = nullptr;

  struct ElephantState {
    std::int64_t bytes = 0;
    bool marked = false;
  };
  std::unordered_map<std::uint32_t, ElephantState> elephant_;
  std::unordered_map<std::uint32_t, FlowTableEntry> table_;
  std::vector<std::int64_t> vo_;
  std::vector<std::int64_t> vi_;
  std::uint64_t install_seq_ = 1;
  std::int64_t dropped_no_route_ = 0;
};

}  // namespace dcn
