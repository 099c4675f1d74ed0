#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcnsim/rng.hpp"
#include "dcnsim/sim.hpp"
#include "dcnsim/tcp.hpp"
#include "dcnsim/topology.hpp"

namespace dcn {

enum class PatternKind : std::uint8_t { Stride, Staggered, Randx, Randbij, Shuffle };

// Communication pattern selecting who talks to whom. Text forms:
//   stride:<i>           host x sends to host (x+i) mod N, forever
//   stag:<Pe>:<Pp>       destination under same edge w.p. Pe, same pod w.p.
//                        Pp, otherwise another pod; one flow per host
//   random               one flow per host to a uniform other host
//   randx:<x>            x flows per host, each to a uniform other host
//   randbij              random permutation with no fixed points
//   shuffle:<bytes>      every host fetches <bytes> from every other host,
//                        one inbound transfer at a time
struct TrafficPattern {
  PatternKind kind = PatternKind::Randx;
  int stride = 1;
  double p_edge = 0;
  double p_pod = 0;
  int per_host = 1;
  std::int64_t shuffle_bytes = 5'000'000;

  static TrafficPattern parse(const std::string& text);
  std::string canonical() const;
};

struct FlowSpec {
  NodeId src;
  NodeId dst;
  std::int64_t bytes = kUnboundedBytes;
  SimTime start = 0;
};

// Flow list for the static patterns, in deterministic order (host id, then
// flow index). Shuffle is staged by the runner instead; see make_shuffle.
std::vector<FlowSpec> generate_flows(const Topology& topo, const TrafficPattern& pattern,
                                     Rng& rng);

struct ShuffleJob {
  struct Transfer {
    NodeId src;
    NodeId dst;
    std::int64_t bytes = 0;
  };
  // One queue per receiving host, drained front to back, all hosts at once.
  std::vector<std::vector<Transfer>> per_receiver;
  std::int64_t total_transfers = 0;
};

ShuffleJob make_shuffle(const Topology& topo, std::int64_t bytes_per_transfer, Rng& rng);

}  // namespace dcn
