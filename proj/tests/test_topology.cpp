#include <algorithm>
#include <cstdint>
#include <map>
#include <queue>
#include <set>
#include <vector>

#include "dcnsim/sim.hpp"
#include "dcnsim/topology.hpp"
#include "doctest.h"

using namespace dcn;

namespace {

constexpr std::int64_t kGbps = 1'000'000'000;
constexpr SimTime kDelay = 10 * kUs;

// Independent oracle: enumerate every minimal-hop path between two nodes by
// BFS distance labeling plus DFS expansion along distance-decreasing links.
std::vector<std::vector<LinkId>> all_shortest_paths(const Topology& t, NodeId src, NodeId dst) {
  std::vector<int> dist(t.num_nodes(), -1);
  std::queue<NodeId> q;
  dist[dst.v] = 0;
  q.push(dst);
  while (!q.empty()) {
    NodeId n = q.front();
    q.pop();
    for (LinkId l : t.in_links(n)) {
      NodeId m = t.link(l).from;
      if (dist[m.v] == -1) {
        dist[m.v] = dist[n.v] + 1;
        q.push(m);
      }
    }
  }
  std::vector<std::vector<LinkId>> paths;
  std::vector<LinkId> cur;
  auto dfs = [&](auto&& self, NodeId n) -> void {
    if (n == dst) {
      paths.push_back(cur);
      return;
    }
    for (LinkId l : t.out_links(n)) {
      NodeId m = t.link(l).to;
      if (dist[m.v] == dist[n.v] - 1) {
        cur.push_back(l);
        self(self, m);
        cur.pop_back();
      }
    }
  };
  if (dist[src.v] != -1) dfs(dfs, src);
  return paths;
}

std::vector<std::vector<std::int32_t>> as_ints(const std::vector<std::vector<LinkId>>& paths) {
  std::vector<std::vector<std::int32_t>> out;
  for (const auto& p : paths) {
    std::vector<std::int32_t> row;
    for (LinkId l : p) row.push_back(l.v);
    out.push_back(row);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("fat tree node and link counts match the closed forms") {
  for (int k : {4, 6, 8}) {
    Topology t = Topology::fat_tree(k, kGbps, kDelay);
    CAPTURE(k);
    int hosts = k * k * k / 4;
    int edges = k * k / 2;
    int aggs = k * k / 2;
    int cores = (k / 2) * (k / 2);
    CHECK(t.k() == k);
    CHECK(t.num_hosts() == hosts);
    CHECK(t.num_pods() == k);
    CHECK(t.num_nodes() == hosts + edges + aggs + cores);
    // Cables: host-edge k^3/4, edge-aggregate k^3/4, aggregate-core k^3/4.
    CHECK(t.num_links() == 2 * 3 * k * k * k / 4);
  }
}

TEST_CASE("hosts occupy ids 0..num_hosts-1 in pod, edge, position order") {
  for (int k : {4, 6}) {
    Topology t = Topology::fat_tree(k, kGbps, kDelay);
    int half = k / 2;
    int idx = 0;
    for (int p = 0; p < k; ++p)
      for (int e = 0; e < half; ++e)
        for (int pos = 0; pos < half; ++pos) {
          NodeId h = t.host(p, e, pos);
          CHECK(h.v == idx);
          CHECK(t.host_by_index(idx) == h);
          CHECK(t.layer(h) == Layer::Host);
          CHECK(t.info(h).pod == p);
          CHECK(t.info(h).edge == e);
          CHECK(t.info(h).pos == pos);
          ++idx;
        }
    CHECK(idx == t.num_hosts());
    for (int n = t.num_hosts(); n < t.num_nodes(); ++n)
      CHECK(t.layer(NodeId{n}) != Layer::Host);
  }
}

TEST_CASE("every link has a reverse twin with endpoints swapped") {
  Topology t = Topology::fat_tree(6, kGbps, kDelay);
  for (int v = 0; v < t.num_links(); ++v) {
    LinkId l{v};
    const LinkInfo& li = t.link(l);
    CHECK(li.reverse.valid());
    const LinkInfo& ri = t.link(li.reverse);
    CHECK(ri.reverse == l);
    CHECK(ri.from == li.to);
    CHECK(ri.to == li.from);
    CHECK(li.capacity_bps == kGbps);
    CHECK(li.delay == kDelay);
    // Index annotations point back at the right slots.
    CHECK(t.out_links(li.from)[li.out_index] == l);
    CHECK(t.in_links(li.to)[li.in_index] == l);
  }
}

TEST_CASE("degree profile per layer") {
  for (int k : {4, 8}) {
    Topology t = Topology::fat_tree(k, kGbps, kDelay);
    int half = k / 2;
    CAPTURE(k);
    for (int n = 0; n < t.num_nodes(); ++n) {
      NodeId id{n};
      switch (t.layer(id)) {
        case Layer::Host:
          CHECK(t.out_links(id).size() == 1);
          CHECK(t.uplinks(id).size() == 0);
          break;
        case Layer::Edge:
        case Layer::Aggregate:
          CHECK(t.out_links(id).size() == static_cast<std::size_t>(k));
          CHECK(t.uplinks(id).size() == static_cast<std::size_t>(half));
          break;
        case Layer::Core:
          CHECK(t.out_links(id).size() == static_cast<std::size_t>(k));
          CHECK(t.uplinks(id).size() == 0);
          break;
      }
      CHECK(t.in_links(id).size() == t.out_links(id).size());
    }
  }
}

TEST_CASE("aggregate at pod position j wires to every core of group j") {
  for (int k : {4, 6}) {
    Topology t = Topology::fat_tree(k, kGbps, kDelay);
    int half = k / 2;
    for (int p = 0; p < k; ++p)
      for (int j = 0; j < half; ++j) {
        NodeId a = t.aggregate(p, j);
        for (int i = 0; i < half; ++i) {
          NodeId c = t.core(j, i);
          CHECK(t.info(c).group == j);
          CHECK(t.info(c).pos == i);
          LinkId up = t.link_between(a, c);
          REQUIRE(up.valid());
          // The core at group position i sits on port i of each aggregate:
          // uplink order therefore matches core position.
          CHECK(t.uplinks(a)[i] == up);
          LinkId down = t.core_down_to_pod(c, p);
          REQUIRE(down.valid());
          CHECK(t.link(down).to == a);
          CHECK(t.link(up).reverse == down);
        }
        // No stray links to cores of other groups.
        for (int g = 0; g < half; ++g) {
          if (g == j) continue;
          for (int i = 0; i < half; ++i) CHECK(!t.link_between(a, t.core(g, i)).valid());
        }
      }
  }
}

TEST_CASE("host navigation helpers agree with each other") {
  Topology t = Topology::fat_tree(4, kGbps, kDelay);
  for (int i = 0; i < t.num_hosts(); ++i) {
    NodeId h = t.host_by_index(i);
    NodeId e = t.edge_of(h);
    CHECK(t.layer(e) == Layer::Edge);
    CHECK(t.info(e).pod == t.info(h).pod);
    CHECK(t.info(e).pos == t.info(h).edge);
    CHECK(t.host_under_edge(h, e));
    LinkId up = t.host_uplink(h);
    CHECK(t.link(up).from == h);
    CHECK(t.link(up).to == e);
    LinkId down = t.edge_to_host(e, h);
    CHECK(down == t.link(up).reverse);
    // Not under any other edge switch.
    for (int p = 0; p < t.k(); ++p)
      for (int pos = 0; pos < t.k() / 2; ++pos) {
        NodeId other = t.edge_switch(p, pos);
        if (other != e) CHECK(!t.host_under_edge(h, other));
      }
  }
}

TEST_CASE("equal cost path counts follow the three locality classes") {
  Topology t = Topology::fat_tree(4, kGbps, kDelay);
  int half = t.k() / 2;
  NodeId a = t.host(0, 0, 0);
  CHECK(t.equal_cost_paths(a, t.host(0, 0, 1)).size() == 1);
  CHECK(t.equal_cost_paths(a, t.host(0, 1, 0)).size() == static_cast<std::size_t>(half));
  CHECK(t.equal_cost_paths(a, t.host(2, 1, 1)).size() == static_cast<std::size_t>(half * half));
}

TEST_CASE("equal cost paths match the exhaustive shortest-path oracle") {
  for (int k : {4, 6}) {
    Topology t = Topology::fat_tree(k, kGbps, kDelay);
    CAPTURE(k);
    for (int i = 0; i < t.num_hosts(); ++i)
      for (int j = 0; j < t.num_hosts(); ++j) {
        if (i == j) continue;
        NodeId s = t.host_by_index(i), d = t.host_by_index(j);
        auto got = as_ints(t.equal_cost_paths(s, d));
        auto want = as_ints(all_shortest_paths(t, s, d));
        REQUIRE(got == want);
      }
  }
  // Spot checks at k=8 keep the suite fast: one pair per locality class.
  Topology t = Topology::fat_tree(8, kGbps, kDelay);
  for (auto [i, j] : {std::pair{0, 1}, {0, 5}, {0, 100}, {77, 121}}) {
    NodeId s = t.host_by_index(i), d = t.host_by_index(j);
    CHECK(as_ints(t.equal_cost_paths(s, d)) == as_ints(all_shortest_paths(t, s, d)));
  }
}

TEST_CASE("each equal cost path chains src to dst with valid hops") {
  Topology t = Topology::fat_tree(6, kGbps, kDelay);
  NodeId s = t.host(1, 0, 2), d = t.host(4, 2, 0);
  auto paths = t.equal_cost_paths(s, d);
  std::set<std::vector<std::int32_t>> uniq;
  for (const auto& p : paths) {
    REQUIRE(!p.empty());
    CHECK(t.link(p.front()).from == s);
    CHECK(t.link(p.back()).to == d);
    for (std::size_t i = 1; i < p.size(); ++i) CHECK(t.link(p[i]).from == t.link(p[i - 1]).to);
    std::vector<std::int32_t> row;
    for (LinkId l : p) row.push_back(l.v);
    CHECK(uniq.insert(row).second);
  }
}

TEST_CASE("mirror uplink inverts the downhill arrival choice") {
  Topology t = Topology::fat_tree(4, kGbps, kDelay);
  int half = t.k() / 2;
  // At an aggregate, the incoming downhill link comes from a core and the
  // mirror names that core.
  for (int p = 0; p < t.k(); ++p)
    for (int j = 0; j < half; ++j) {
      NodeId a = t.aggregate(p, j);
      for (int i = 0; i < half; ++i) {
        NodeId c = t.core(j, i);
        LinkId down = t.core_down_to_pod(c, p);
        PathSpec spec = t.mirror_uplink(a, down, 2);
        CHECK(spec.valid());
        CHECK(spec.core == c);
        CHECK(!spec.uphill_aggregate.valid());
      }
    }
  // At an edge switch, the incoming link comes from the aggregate at pod
  // position j and the mirror is position j of the source pod.
  for (int p = 0; p < t.k(); ++p)
    for (int e = 0; e < half; ++e) {
      NodeId es = t.edge_switch(p, e);
      for (int j = 0; j < half; ++j) {
        NodeId a = t.aggregate(p, j);
        LinkId down = t.agg_down_to_edge(a, e);
        for (int sp = 0; sp < t.k(); ++sp) {
          PathSpec spec = t.mirror_uplink(es, down, sp);
          CHECK(!spec.core.valid());
          CHECK(spec.uphill_aggregate == t.aggregate(sp, j));
        }
      }
    }
}

TEST_CASE("node names are distinct and layer tagged") {
  Topology t = Topology::fat_tree(4, kGbps, kDelay);
  std::set<std::string> names;
  for (int n = 0; n < t.num_nodes(); ++n) names.insert(t.node_name(NodeId{n}));
  CHECK(names.size() == static_cast<std::size_t>(t.num_nodes()));
  CHECK(t.node_name(t.host(0, 0, 0)) == "h0.0.0");
  CHECK(t.node_name(t.edge_switch(2, 1)) == "e2.1");
  CHECK(t.node_name(t.aggregate(3, 0)) == "a3.0");
  CHECK(t.node_name(t.core(1, 1)) == "c1.1");
}

TEST_CASE("single switch variant hangs n hosts off one edge") {
  Topology t = Topology::single_switch(3, kGbps, kDelay);
  CHECK(t.num_hosts() == 3);
  CHECK(t.num_nodes() == 4);
  CHECK(t.num_links() == 6);
  NodeId sw{3};
  CHECK(t.layer(sw) == Layer::Edge);
  for (int i = 0; i < 3; ++i) {
    NodeId h = t.host_by_index(i);
    CHECK(t.edge_of(h) == sw);
    auto paths = t.equal_cost_paths(h, t.host_by_index((i + 1) % 3));
    CHECK(paths.size() == 1);
    CHECK(paths[0].size() == 2);
  }
}

TEST_CASE("fat tree construction rejects invalid k") {
  CHECK_THROWS_AS(Topology::fat_tree(3, kGbps, kDelay), SimAbort);
  CHECK_THROWS_AS(Topology::fat_tree(0, kGbps, kDelay), SimAbort);
  CHECK_THROWS_AS(Topology::fat_tree(-2, kGbps, kDelay), SimAbort);
}
