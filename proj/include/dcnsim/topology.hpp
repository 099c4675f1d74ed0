#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dcnsim/sim.hpp"

namespace dcn {

enum class Layer : std::uint8_t { Host, Edge, Aggregate, Core };

struct NodeId {
  std::int32_t v = -1;
  bool valid() const { return v >= 0; }
  friend bool operator==(NodeId a, NodeId b) { return a.v == b.v; }
  friend bool operator!=(NodeId a, NodeId b) { return a.v != b.v; }
  friend bool operator<(NodeId a, NodeId b) { return a.v < b.v; }
};

struct LinkId {
  std::int32_t v = -1;
  bool valid() const { return v >= 0; }
  friend bool operator==(LinkId a, LinkId b) { return a.v == b.v; }
  friend bool operator!=(LinkId a, LinkId b) { return a.v != b.v; }
  friend bool operator<(LinkId a, LinkId b) { return a.v < b.v; }
};

struct NodeInfo {
  Layer layer = Layer::Host;
  std::int16_t pod = -1;    // hosts, edges, aggregates
  std::int16_t pos = -1;    // position inside the enclosing scope
  std::int16_t edge = -1;   // hosts: position of their edge switch in the pod
  std::int16_t group = -1;  // cores: group index
};

struct LinkInfo {
  NodeId from;
  NodeId to;
  std::int64_t capacity_bps = 0;
  SimTime delay = 0;
  LinkId reverse;
  std::int16_t out_index = -1;  // position in from-node's outgoing list
  std::int16_t in_index = -1;   // position in to-node's incoming list
};

// Uphill target recommended to a sender-side switch: either a specific core
// (applies at the flow's uphill aggregate) or a specific aggregate in the
// flow's source pod (applies at the flow's source edge switch).
struct PathSpec {
  NodeId core;
  NodeId uphill_aggregate;
  bool valid() const { return core.valid() || uphill_aggregate.valid(); }
};

// Immutable multi-rooted tree; all runtime state (queues, liveness, tables)
// lives elsewhere. Hosts occupy node ids 0..num_hosts-1 in (pod, edge, pos)
// order, so a host's id doubles as its global host index.
class Topology {
 public:
  // k-ary fat tree: k pods of k/2 edge and k/2 aggregate switches, k/2 hosts
  // per edge switch, (k/2)^2 cores in k/2 groups. The aggregate at pod
  // position j wires to every core of group j; the core at position i of its
  // group uses port i of each such aggregate.
  static Topology fat_tree(int k, std::int64_t capacity_bps, SimTime delay);

  // Degenerate instance for transport micro-tests: n hosts on one switch.
  static Topology single_switch(int n_hosts, std::int64_t capacity_bps, SimTime delay);

  int k() const { return k_; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_links() const { return static_cast<int>(links_.size()); }
  int num_hosts() const { return num_hosts_; }
  int num_pods() const { return k_; }

  const NodeInfo& info(NodeId n) const { return nodes_[n.v]; }
  const LinkInfo& link(LinkId l) const { return links_[l.v]; }
  Layer layer(NodeId n) const { return nodes_[n.v].layer; }

  NodeId host(int pod, int edge, int pos) const;
  NodeId edge_switch(int pod, int pos) const;
  NodeId aggregate(int pod, int pos) const;
  NodeId core(int group, int pos) const;
  NodeId host_by_index(int i) const { return NodeId{i}; }

  std::span<const LinkId> out_links(NodeId n) const { return out_links_[n.v]; }
  std::span<const LinkId> in_links(NodeId n) const { return in_links_[n.v]; }
  // Outgoing links toward the next layer up (empty for cores and hosts).
  std::span<const LinkId> uplinks(NodeId n) const { return uplinks_[n.v]; }

  LinkId link_between(NodeId a, NodeId b) const;

  LinkId host_uplink(NodeId host) const;
  NodeId edge_of(NodeId host) const;
  bool host_under_edge(NodeId host, NodeId edge) const;
  LinkId edge_to_host(NodeId edge, NodeId host) const;
  LinkId agg_down_to_edge(NodeId agg, int edge_pos) const;
  LinkId core_down_to_pod(NodeId core, int pod) const;

  // All minimal-hop paths between two distinct hosts, as link sequences:
  // (k/2)^2 inter-pod (one per core), k/2 same-pod-different-edge (one per
  // aggregate), 1 same-edge. Order is aggregate-major, then core position.
  std::vector<std::vector<LinkId>> equal_cost_paths(NodeId src, NodeId dst) const;

  // Maps an incoming downhill link of `sw` to the uphill choice a sender-side
  // switch must make so the flow arrives on that link. For an aggregate the
  // incoming link comes from a core and the mirror is that core; for an edge
  // switch it comes from the aggregate at pod position j and the mirror is
  // the aggregate at position j in the flow's source pod.
  PathSpec mirror_uplink(NodeId sw, LinkId incoming, int src_pod) const;

  std::string node_name(NodeId n) const;
  std::string describe_pathspec(const PathSpec& p) const;
  std::string to_json_string() const;

 private:
  NodeId add_node(const NodeInfo& info);
  void add_cable(NodeId a, NodeId b, std::int64_t bps, SimTime delay);
  void finalize();

  int k_ = 0;
  int num_hosts_ = 0;
  std::vector<NodeInfo> nodes_;
  std::vector<LinkInfo> links_;
  std::vector<std::vector<LinkId>> out_links_;
  std::vector<std::vector<LinkId>> in_links_;
  std::vector<std::vector<LinkId>> uplinks_;
  std::unordered_map<std::uint64_t, LinkId> link_index_;
  // Dense id tables filled by the builders.
  std::vector<std::int32_t> edge_ids_, agg_ids_, core_ids_;
};

}  // namespace dcn
