#include "dcnsim/traffic.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>

namespace dcn {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t at = 0;
  while (true) {
    std::size_t next = s.find(sep, at);
    parts.push_back(s.substr(at, next - at));
    if (next == std::string::npos) break;
    at = next + 1;
  }
  return parts;
}

double parse_num(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("pattern: bad " + what + " value '" + s + "'");
  }
}

}  // namespace

TrafficPattern TrafficPattern::parse(const std::string& text) {
  std::vector<std::string> parts = split(text, ':');
  const std::string& name = parts[0];
  auto want_args = [&](std::size_t n) {
    if (parts.size() != n + 1)
      throw std::runtime_error("pattern '" + name + "' takes " + std::to_string(n) +
                               " argument(s), got '" + text + "'");
  };
  TrafficPattern p;
  if (name == "stride") {
    want_args(1);
    p.kind = PatternKind::Stride;
    p.stride = static_cast<int>(parse_num(parts[1], "stride"));
    if (p.stride < 1) throw std::runtime_error("pattern: stride must be >= 1");
  } else if (name == "stag") {
    want_args(2);
    p.kind = PatternKind::Staggered;
    p.p_edge = parse_num(parts[1], "edge probability");
    p.p_pod = parse_num(parts[2], "pod probability");
    if (p.p_edge < 0 || p.p_pod < 0 || p.p_edge + p.p_pod > 1)
      throw std::runtime_error("pattern: stag probabilities must be >= 0 and sum to <= 1");
  } else if (name == "random") {
    want_args(0);
    p.kind = PatternKind::Randx;
    p.per_host = 1;
  } else if (name == "randx") {
    want_args(1);
    p.kind = PatternKind::Randx;
    p.per_host = static_cast<int>(parse_num(parts[1], "flows per host"));
    if (p.per_host < 1) throw std::runtime_error("pattern: randx count must be >= 1");
  } else if (name == "randbij") {
    want_args(0);
    p.kind = PatternKind::Randbij;
  } else if (name == "shuffle") {
    if (parts.size() > 2) want_args(1);
    p.kind = PatternKind::Shuffle;
    if (parts.size() == 2) {
      p.shuffle_bytes = static_cast<std::int64_t>(parse_num(parts[1], "transfer bytes"));
      if (p.shuffle_bytes < 1) throw std::runtime_error("pattern: shuffle bytes must be >= 1");
    }
  } else {
    throw std::runtime_error("pattern: unknown name '" + name + "'");
  }
  return p;
}

std::string TrafficPattern::canonical() const {
  char buf[64];
  switch (kind) {
    case PatternKind::Stride:
      std::snprintf(buf, sizeof buf, "stride:%d", stride);
      return buf;
    case PatternKind::Staggered:
      std::snprintf(buf, sizeof buf, "stag:%g:%g", p_edge, p_pod);
      return buf;
    case PatternKind::Randx:
      if (per_host == 1) return "random";
      std::snprintf(buf, sizeof buf, "randx:%d", per_host);
      return buf;
    case PatternKind::Randbij:
      return "randbij";
    case PatternKind::Shuffle:
      std::snprintf(buf, sizeof buf, "shuffle:%lld", static_cast<long long>(shuffle_bytes));
      return buf;
  }
  return "?";
}

namespace {

NodeId other_host_uniform(const Topology& topo, int self, Rng& rng) {
  int n = topo.num_hosts();
  auto pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1)));
  if (pick >= self) ++pick;
  return topo.host_by_index(pick);
}

// Uniform host with the given locality relative to `self`: 0 same edge,
// 1 same pod different edge, 2 different pod.
NodeId scoped_host(const Topology& topo, int self, int scope, Rng& rng) {
  const NodeInfo& me = topo.info(topo.host_by_index(self));
  int half = topo.k() / 2;
  int per_pod = half * half;
  if (scope == 0) {
    auto pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(half - 1)));
    if (pick >= me.pos) ++pick;
    return topo.host(me.pod, me.edge, pick);
  }
  if (scope == 1) {
    auto pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(per_pod - half)));
    int edge = pick / half;
    if (edge >= me.edge) ++edge;
    return topo.host(me.pod, edge, pick % half);
  }
  auto pick =
      static_cast<int>(rng.below(static_cast<std::uint64_t>(topo.num_hosts() - per_pod)));
  int pod = pick / per_pod;
  if (pod >= me.pod) ++pod;
  int rest = pick % per_pod;
  return topo.host(pod, rest / half, rest % half);
}

}  // namespace

std::vector<FlowSpec> generate_flows(const Topology& topo, const TrafficPattern& pattern,
                                     Rng& rng) {
  int n = topo.num_hosts();
  std::vector<FlowSpec> flows;
  switch (pattern.kind) {
    case PatternKind::Stride:
      for (int h = 0; h < n; ++h)
        flows.push_back({topo.host_by_index(h), topo.host_by_index((h + pattern.stride) % n),
                         kUnboundedBytes, 0});
      break;
    case PatternKind::Staggered:
      for (int h = 0; h < n; ++h) {
        double u = rng.uniform01();
        int scope = u < pattern.p_edge ? 0 : (u < pattern.p_edge + pattern.p_pod ? 1 : 2);
        flows.push_back({topo.host_by_index(h), scoped_host(topo, h, scope, rng),
                         kUnboundedBytes, 0});
      }
      break;
    case PatternKind::Randx:
      for (int h = 0; h < n; ++h)
        for (int i = 0; i < pattern.per_host; ++i)
          flows.push_back(
              {topo.host_by_index(h), other_host_uniform(topo, h, rng), kUnboundedBytes, 0});
      break;
    case PatternKind::Randbij: {
      std::vector<int> perm(static_cast<std::size_t>(n));
      bool deranged = false;
      while (!deranged) {
        for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
        rng.shuffle(perm);
        deranged = true;
        for (int i = 0; i < n; ++i)
          if (perm[static_cast<std::size_t>(i)] == i) {
            deranged = false;
            break;
          }
      }
      for (int h = 0; h < n; ++h)
        flows.push_back({topo.host_by_index(h),
                         topo.host_by_index(perm[static_cast<std::size_t>(h)]), kUnboundedBytes,
                         0});
      break;
    }
    case PatternKind::Shuffle:
      // Staged by the runner via make_shuffle.
      break;
  }
  return flows;
}

ShuffleJob make_shuffle(const Topology& topo, std::int64_t bytes_per_transfer, Rng& rng) {
  int n = topo.num_hosts();
  ShuffleJob job;
  job.per_receiver.resize(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    std::vector<int> senders;
    senders.reserve(static_cast<std::size_t>(n - 1));
    for (int s = 0; s < n; ++s)
      if (s != r) senders.push_back(s);
    rng.shuffle(senders);
    auto& queue = job.per_receiver[static_cast<std::size_t>(r)];
    for (int s : senders)
      queue.push_back({topo.host_by_index(s), topo.host_by_index(r), bytes_per_transfer});
    job.total_transfers += static_cast<std::int64_t>(queue.size());
  }
  return job;
}

}  // namespace dcn
