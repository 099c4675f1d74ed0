#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dcnsim/rng.hpp"
#include "dcnsim/sim.hpp"
#include "dcnsim/topology.hpp"
#include "dcnsim/traffic.hpp"
#include "doctest.h"

using namespace dcn;

namespace {
constexpr std::int64_t kGbps = 1'000'000'000;

Topology topo4() { return Topology::fat_tree(4, kGbps, 10 * kUs); }
}  // namespace

TEST_CASE("pattern text forms parse and round-trip") {
  TrafficPattern p = TrafficPattern::parse("stride:4");
  CHECK(p.kind == PatternKind::Stride);
  CHECK(p.stride == 4);
  CHECK(p.canonical() == "stride:4");

  p = TrafficPattern::parse("stag:0.5:0.3");
  CHECK(p.kind == PatternKind::Staggered);
  CHECK(p.p_edge == doctest::Approx(0.5));
  CHECK(p.p_pod == doctest::Approx(0.3));
  CHECK(p.canonical() == "stag:0.5:0.3");

  p = TrafficPattern::parse("random");
  CHECK(p.kind == PatternKind::Randx);
  CHECK(p.per_host == 1);
  CHECK(p.canonical() == "random");

  p = TrafficPattern::parse("randx:3");
  CHECK(p.per_host == 3);
  CHECK(p.canonical() == "randx:3");

  p = TrafficPattern::parse("randbij");
  CHECK(p.kind == PatternKind::Randbij);

  p = TrafficPattern::parse("shuffle:5000000");
  CHECK(p.kind == PatternKind::Shuffle);
  CHECK(p.shuffle_bytes == 5'000'000);
  CHECK(TrafficPattern::parse("shuffle").shuffle_bytes == 5'000'000);  // default size

  CHECK_THROWS(TrafficPattern::parse("nonsense"));
  CHECK_THROWS(TrafficPattern::parse("stride:0"));
  CHECK_THROWS(TrafficPattern::parse("stride:x"));
  CHECK_THROWS(TrafficPattern::parse("stride"));
  CHECK_THROWS(TrafficPattern::parse("stag:0.8:0.4"));  // probabilities over 1
  CHECK_THROWS(TrafficPattern::parse("stag:-0.1:0.4"));
  CHECK_THROWS(TrafficPattern::parse("randx:0"));
  CHECK_THROWS(TrafficPattern::parse("shuffle:0"));
  CHECK_THROWS(TrafficPattern::parse("random:1"));
}

TEST_CASE("stride wraps around the host index space") {
  Topology t = topo4();
  Rng rng(1, "traffic-gen");
  TrafficPattern p = TrafficPattern::parse("stride:4");
  auto flows = generate_flows(t, p, rng);
  REQUIRE(flows.size() == 16);
  for (int h = 0; h < 16; ++h) {
    CHECK(flows[static_cast<std::size_t>(h)].src == t.host_by_index(h));
    CHECK(flows[static_cast<std::size_t>(h)].dst == t.host_by_index((h + 4) % 16));
    CHECK(flows[static_cast<std::size_t>(h)].bytes == kUnboundedBytes);
    CHECK(flows[static_cast<std::size_t>(h)].start == 0);
  }
  // Stride 1 pairs neighbours; stride num_hosts/2 pairs opposite halves.
  TrafficPattern one = TrafficPattern::parse("stride:1");
  auto nf = generate_flows(t, one, rng);
  CHECK(nf[15].dst == t.host_by_index(0));
}

TEST_CASE("per-host fan-out counts match the requested multiplicity") {
  Topology t = topo4();
  Rng rng(7, "traffic-gen");
  TrafficPattern p = TrafficPattern::parse("randx:3");
  auto flows = generate_flows(t, p, rng);
  REQUIRE(flows.size() == 48);
  std::map<std::int32_t, int> per_src;
  for (const auto& f : flows) {
    ++per_src[f.src.v];
    CHECK(f.src != f.dst);  // never self-directed
    CHECK(f.dst.v >= 0);
    CHECK(f.dst.v < 16);
  }
  REQUIRE(per_src.size() == 16);
  for (const auto& [src, n] : per_src) CHECK(n == 3);
}

TEST_CASE("bijective pattern is a derangement") {
  Topology t = topo4();
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 99ULL}) {
    Rng rng(seed, "traffic-gen");
    auto flows = generate_flows(t, TrafficPattern::parse("randbij"), rng);
    REQUIRE(flows.size() == 16);
    std::set<std::int32_t> dsts;
    for (const auto& f : flows) {
      CHECK(f.src != f.dst);
      dsts.insert(f.dst.v);
    }
    CHECK(dsts.size() == 16);  // permutation: every host receives exactly once
  }
}

TEST_CASE("staggered locality scopes are exact at the extremes") {
  Topology t = topo4();
  Rng rng(5, "traffic-gen");
  auto same_edge = generate_flows(t, TrafficPattern::parse("stag:1:0"), rng);
  for (const auto& f : same_edge) {
    CHECK(f.src != f.dst);
    CHECK(t.info(f.src).pod == t.info(f.dst).pod);
    CHECK(t.info(f.src).edge == t.info(f.dst).edge);
  }
  auto same_pod = generate_flows(t, TrafficPattern::parse("stag:0:1"), rng);
  for (const auto& f : same_pod) {
    CHECK(t.info(f.src).pod == t.info(f.dst).pod);
    CHECK(t.info(f.src).edge != t.info(f.dst).edge);
  }
  auto inter_pod = generate_flows(t, TrafficPattern::parse("stag:0:0"), rng);
  for (const auto& f : inter_pod) CHECK(t.info(f.src).pod != t.info(f.dst).pod);
}

TEST_CASE("staggered mixes roughly follow the probabilities") {
  Topology t = Topology::fat_tree(8, kGbps, 10 * kUs);  // 128 hosts for volume
  Rng rng(11, "traffic-gen");
  TrafficPattern p = TrafficPattern::parse("stag:0.5:0.3");
  int edge = 0, pod = 0, far = 0;
  for (int round = 0; round < 20; ++round) {
    for (const auto& f : generate_flows(t, p, rng)) {
      if (t.info(f.src).pod != t.info(f.dst).pod)
        ++far;
      else if (t.info(f.src).edge != t.info(f.dst).edge)
        ++pod;
      else
        ++edge;
    }
  }
  int total = edge + pod + far;
  REQUIRE(total == 20 * 128);
  // 2560 draws: each share should sit within a few points of its target.
  CHECK(edge > total * 0.45);
  CHECK(edge < total * 0.55);
  CHECK(pod > total * 0.25);
  CHECK(pod < total * 0.35);
  CHECK(far > total * 0.15);
  CHECK(far < total * 0.25);
}

TEST_CASE("identical seeds reproduce the flow list exactly") {
  Topology t = topo4();
  for (const char* text : {"random", "randx:2", "randbij", "stag:0.3:0.3"}) {
    Rng a(42, "traffic-gen"), b(42, "traffic-gen");
    auto fa = generate_flows(t, TrafficPattern::parse(text), a);
    auto fb = generate_flows(t, TrafficPattern::parse(text), b);
    REQUIRE(fa.size() == fb.size());
    for (std::size_t i = 0; i < fa.size(); ++i) {
      CHECK(fa[i].src == fb[i].src);
      CHECK(fa[i].dst == fb[i].dst);
    }
    Rng c(43, "traffic-gen");
    auto fc = generate_flows(t, TrafficPattern::parse(text), c);
    bool any_differ = false;
    for (std::size_t i = 0; i < fa.size(); ++i)
      if (fa[i].dst != fc[i].dst) any_differ = true;
    CHECK(any_differ);
  }
}

TEST_CASE("shuffle schedules every ordered pair exactly once") {
  Topology t = topo4();
  Rng rng(3, "traffic-gen");
  ShuffleJob job = make_shuffle(t, 5'000'000, rng);
  CHECK(job.total_transfers == 16 * 15);
  REQUIRE(job.per_receiver.size() == 16);
  for (int r = 0; r < 16; ++r) {
    const auto& q = job.per_receiver[static_cast<std::size_t>(r)];
    REQUIRE(q.size() == 15);
    std::set<std::int32_t> senders;
    for (const auto& tr : q) {
      CHECK(tr.dst == t.host_by_index(r));
      CHECK(tr.src != tr.dst);
      CHECK(tr.bytes == 5'000'000);
      senders.insert(tr.src.v);
    }
    CHECK(senders.size() == 15);  // every other host appears exactly once
  }
  // Receiver orders differ between hosts (independent shuffles).
  bool orders_differ = false;
  for (std::size_t i = 2; i < 16; ++i)
    if (job.per_receiver[0][0].src.v % 16 != job.per_receiver[i][0].src.v % 16)
      orders_differ = true;
  CHECK(orders_differ);
}
