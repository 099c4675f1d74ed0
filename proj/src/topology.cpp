#include "dcnsim/topology.hpp"

#include <algorithm>

#include "json.hpp"

namespace dcn {

namespace {
std::uint64_t pair_key(NodeId a, NodeId b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a.v)) << 32) |
         static_cast<std::uint32_t>(b.v);
}
}  // namespace

NodeId Topology::add_node(const NodeInfo& info) {
  NodeId id{static_cast<std::int32_t>(nodes_.size())};
  nodes_.push_back(info);
  return id;
}

void Topology::add_cable(NodeId a, NodeId b, std::int64_t bps, SimTime delay) {
  LinkId ab{static_cast<std::int32_t>(links_.size())};
  LinkId ba{ab.v + 1};
  links_.push_back(LinkInfo{a, b, bps, delay, ba, -1, -1});
  links_.push_back(LinkInfo{b, a, bps, delay, ab, -1, -1});
  link_index_[pair_key(a, b)] = ab;
  link_index_[pair_key(b, a)] = ba;
}

void Topology::finalize() {
  out_links_.assign(nodes_.size(), {});
  in_links_.assign(nodes_.size(), {});
  uplinks_.assign(nodes_.size(), {});
  for (std::int32_t i = 0; i < static_cast<std::int32_t>(links_.size()); ++i) {
    LinkInfo& l = links_[i];
    l.out_index = static_cast<std::int16_t>(out_links_[l.from.v].size());
    l.in_index = static_cast<std::int16_t>(in_links_[l.to.v].size());
    out_links_[l.from.v].push_back(LinkId{i});
    in_links_[l.to.v].push_back(LinkId{i});
    Layer from = nodes_[l.from.v].layer;
    Layer to = nodes_[l.to.v].layer;
    bool up = (from == Layer::Edge && to == Layer::Aggregate) ||
              (from == Layer::Aggregate && to == Layer::Core);
    if (up) uplinks_[l.from.v].push_back(LinkId{i});
  }
}

Topology Topology::fat_tree(int k, std::int64_t capacity_bps, SimTime delay) {
  DCN_REQUIRE(k >= 4 && k % 2 == 0, "fat tree requires an even k >= 4");
  Topology t;
  t.k_ = k;
  const int half = k / 2;
  t.num_hosts_ = k * k * k / 4;

  for (int p = 0; p < k; ++p)
    for (int e = 0; e < half; ++e)
      for (int h = 0; h < half; ++h)
        t.add_node(NodeInfo{Layer::Host, static_cast<std::int16_t>(p),
                            static_cast<std::int16_t>(h), static_cast<std::int16_t>(e), -1});

  t.edge_ids_.resize(static_cast<std::size_t>(k) * half);
  for (int p = 0; p < k; ++p)
    for (int e = 0; e < half; ++e)
      t.edge_ids_[p * half + e] =
          t.add_node(NodeInfo{Layer::Edge, static_cast<std::int16_t>(p),
                              static_cast<std::int16_t>(e), -1, -1})
              .v;

  t.agg_ids_.resize(static_cast<std::size_t>(k) * half);
  for (int p = 0; p < k; ++p)
    for (int a = 0; a < half; ++a)
      t.agg_ids_[p * half + a] =
          t.add_node(NodeInfo{Layer::Aggregate, static_cast<std::int16_t>(p),
                              static_cast<std::int16_t>(a), -1, -1})
              .v;

  t.core_ids_.resize(static_cast<std::size_t>(half) * half);
  for (int g = 0; g < half; ++g)
    for (int c = 0; c < half; ++c)
      t.core_ids_[g * half + c] =
          t.add_node(NodeInfo{Layer::Core, -1, static_cast<std::int16_t>(c), -1,
                              static_cast<std::int16_t>(g)})
              .v;

  for (int p = 0; p < k; ++p)
    for (int e = 0; e < half; ++e)
      for (int h = 0; h < half; ++h)
        t.add_cable(t.host(p, e, h), t.edge_switch(p, e), capacity_bps, delay);

  for (int p = 0; p < k; ++p)
    for (int e = 0; e < half; ++e)
      for (int a = 0; a < half; ++a)
        t.add_cable(t.edge_switch(p, e), t.aggregate(p, a), capacity_bps, delay);

  // Aggregate at pod position g owns core group g; core (g, c) sits on
  // aggregate port c.
  for (int p = 0; p < k; ++p)
    for (int g = 0; g < half; ++g)
      for (int c = 0; c < half; ++c)
        t.add_cable(t.aggregate(p, g), t.core(g, c), capacity_bps, delay);

  t.finalize();
  return t;
}

Topology Topology::single_switch(int n_hosts, std::int64_t capacity_bps, SimTime delay) {
  DCN_REQUIRE(n_hosts >= 1, "single_switch requires at least one host");
  Topology t;
  t.k_ = 0;
  t.num_hosts_ = n_hosts;
  for (int h = 0; h < n_hosts; ++h)
    t.add_node(NodeInfo{Layer::Host, 0, static_cast<std::int16_t>(h), 0, -1});
  t.edge_ids_.push_back(t.add_node(NodeInfo{Layer::Edge, 0, 0, -1, -1}).v);
  for (int h = 0; h < n_hosts; ++h)
    t.add_cable(t.host(0, 0, h), t.edge_switch(0, 0), capacity_bps, delay);
  t.finalize();
  return t;
}

NodeId Topology::host(int pod, int edge, int pos) const {
  int half = k_ == 0 ? num_hosts_ : k_ / 2;
  int per_pod = k_ == 0 ? num_hosts_ : half * half;
  return NodeId{pod * per_pod + edge * half + pos};
}

NodeId Topology::edge_switch(int pod, int pos) const {
  int half = k_ == 0 ? 1 : k_ / 2;
  return NodeId{edge_ids_[pod * half + pos]};
}

NodeId Topology::aggregate(int pod, int pos) const {
  return NodeId{agg_ids_[pod * (k_ / 2) + pos]};
}

NodeId Topology::core(int group, int pos) const {
  return NodeId{core_ids_[group * (k_ / 2) + pos]};
}

LinkId Topology::link_between(NodeId a, NodeId b) const {
  auto it = link_index_.find(pair_key(a, b));
  return it == link_index_.end() ? LinkId{} : it->second;
}

LinkId Topology::host_uplink(NodeId host) const {
  DCN_REQUIRE(layer(host) == Layer::Host, "host_uplink on non-host");
  return out_links_[host.v][0];
}

NodeId Topology::edge_of(NodeId host) const {
  const NodeInfo& i = info(host);
  return edge_switch(i.pod, i.edge);
}

bool Topology::host_under_edge(NodeId host, NodeId edge) const {
  return layer(host) == Layer::Host && edge_of(host) == edge;
}

LinkId Topology::edge_to_host(NodeId edge, NodeId host) const {
  return link_between(edge, host);
}

LinkId Topology::agg_down_to_edge(NodeId agg, int edge_pos) const {
  return link_between(agg, edge_switch(info(agg).pod, edge_pos));
}

LinkId Topology::core_down_to_pod(NodeId core, int pod) const {
  return link_between(core, aggregate(pod, info(core).group));
}

std::vector<std::vector<LinkId>> Topology::equal_cost_paths(NodeId src, NodeId dst) const {
  DCN_REQUIRE(layer(src) == Layer::Host && layer(dst) == Layer::Host && src != dst,
              "equal_cost_paths requires two distinct hosts");
  const NodeInfo& s = info(src);
  const NodeInfo& d = info(dst);
  std::vector<std::vector<LinkId>> paths;
  NodeId se = edge_of(src);
  NodeId de = edge_of(dst);
  if (se == de) {
    paths.push_back({link_between(src, se), link_between(se, dst)});
    return paths;
  }
  const int half = k_ / 2;
  if (s.pod == d.pod) {
    for (int a = 0; a < half; ++a) {
      NodeId agg = aggregate(s.pod, a);
      paths.push_back({link_between(src, se), link_between(se, agg),
                       link_between(agg, de), link_between(de, dst)});
    }
    return paths;
  }
  for (int g = 0; g < half; ++g) {
    NodeId sa = aggregate(s.pod, g);
    NodeId da = aggregate(d.pod, g);
    for (int c = 0; c < half; ++c) {
      NodeId mid = core(g, c);
      paths.push_back({link_between(src, se), link_between(se, sa),
                       link_between(sa, mid), link_between(mid, da),
                       link_between(da, de), link_between(de, dst)});
    }
  }
  return paths;
}

PathSpec Topology::mirror_uplink(NodeId sw, LinkId incoming, int src_pod) const {
  const LinkInfo& l = link(incoming);
  DCN_REQUIRE(l.to == sw, "mirror_uplink: link does not terminate at switch");
  NodeId from = l.from;
  if (layer(sw) == Layer::Aggregate) {
    DCN_REQUIRE(layer(from) == Layer::Core, "aggregate mirror expects a core link");
    return PathSpec{from, NodeId{}};
  }
  if (layer(sw) == Layer::Edge) {
    DCN_REQUIRE(layer(from) == Layer::Aggregate, "edge mirror expects an aggregate link");
    return PathSpec{NodeId{}, aggregate(src_pod, info(from).pos)};
  }
  sim_fatal("mirror_uplink applies to aggregate and edge switches only");
}

std::string Topology::node_name(NodeId n) const {
  const NodeInfo& i = info(n);
  switch (i.layer) {
    case Layer::Host:
      return "h" + std::to_string(i.pod) + "." + std::to_string(i.edge) + "." +
             std::to_string(i.pos);
    case Layer::Edge:
      return "e" + std::to_string(i.pod) + "." + std::to_string(i.pos);
    case Layer::Aggregate:
      return "a" + std::to_string(i.pod) + "." + std::to_string(i.pos);
    case Layer::Core:
      return "c" + std::to_string(i.group) + "." + std::to_string(i.pos);
  }
  return "?";
}

std::string Topology::describe_pathspec(const PathSpec& p) const {
  if (p.core.valid()) return "core:" + node_name(p.core);
  if (p.uphill_aggregate.valid()) return "agg:" + node_name(p.uphill_aggregate);
  return "none";
}

std::string Topology::to_json_string() const {
  nlohmann::json j;
  j["k"] = k_;
  j["num_hosts"] = num_hosts_;
  j["num_nodes"] = num_nodes();
  j["num_links"] = num_links();
  nlohmann::json nodes = nlohmann::json::array();
  for (std::int32_t i = 0; i < num_nodes(); ++i) {
    NodeId id{i};
    const NodeInfo& n = info(id);
    nlohmann::json e;
    e["id"] = i;
    e["name"] = node_name(id);
    e["layer"] = static_cast<int>(n.layer);
    e["pod"] = n.pod;
    e["pos"] = n.pos;
    if (n.layer == Layer::Host) e["edge"] = n.edge;
    if (n.layer == Layer::Core) e["group"] = n.group;
    nodes.push_back(std::move(e));
  }
  j["nodes"] = std::move(nodes);
  nlohmann::json links = nlohmann::json::array();
  for (std::int32_t i = 0; i < num_links(); ++i) {
    const LinkInfo& l = links_[static_cast<std::size_t>(i)];
    nlohmann::json e;
    e["id"] = i;
    e["from"] = l.from.v;
    e["to"] = l.to.v;
    e["capacity_bps"] = l.capacity_bps;
    e["delay_ns"] = l.delay;
    links.push_back(std::move(e));
  }
  j["links"] = std::move(links);
  return j.dump(2);
}

}  // namespace dcn
