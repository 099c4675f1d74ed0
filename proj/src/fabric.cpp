#include "dcnsim/fabric.hpp"

#include <algorithm>

#include "dcnsim/difs.hpp"
#include "dcnsim/rng.hpp"
#include "json.hpp"

namespace dcn {

Switch::Switch(const Topology& topo, NodeId self, SchedulerKind kind, std::uint64_t ecmp_salt,
               std::int64_t elephant_threshold, const std::vector<char>* link_alive)
    : topo_(topo),
      self_(self),
      kind_(kind),
      salt_(ecmp_salt),
      elephant_threshold_(elephant_threshold),
      link_alive_(link_alive) {
  vo_.assign(topo_.out_links(self_).size(), 0);
  vi_.assign(topo_.in_links(self_).size(), 0);
}

FlowClass Switch::classify(NodeId src_host, NodeId dst_host) const {
  switch (layer()) {
    case Layer::Edge: {
      bool src_here = topo_.host_under_edge(src_host, self_);
      bool dst_here = topo_.host_under_edge(dst_host, self_);
      if (src_here) return dst_here ? FlowClass::Siso : FlowClass::Simo;
      DCN_REQUIRE(dst_here, "flow transits an edge switch hosting neither endpoint");
      return FlowClass::Miso;
    }
    case Layer::Aggregate: {
      int pod = topo_.info(self_).pod;
      bool src_here = topo_.info(src_host).pod == pod;
      bool dst_here = topo_.info(dst_host).pod == pod;
      DCN_REQUIRE(src_here || dst_here, "flow transits an aggregate outside both pods");
      if (src_here && dst_here) return FlowClass::Siso;
      return src_here ? FlowClass::Simo : FlowClass::Miso;
    }
    case Layer::Core:
      return FlowClass::Siso;
    case Layer::Host:
      break;
  }
  sim_fatal("classify on a host");
}

void Switch::feasible_links(NodeId dst, std::vector<LinkId>& out) const {
  out.clear();
  switch (layer()) {
    case Layer::Edge:
      if (topo_.host_under_edge(dst, self_)) {
        LinkId l = topo_.edge_to_host(self_, dst);
        if (alive(l)) out.push_back(l);
        return;
      }
      break;
    case Layer::Aggregate:
      if (topo_.info(dst).pod == topo_.info(self_).pod) {
        LinkId l = topo_.agg_down_to_edge(self_, topo_.info(dst).edge);
        if (alive(l)) out.push_back(l);
        return;
      }
      break;
    case Layer::Core: {
      LinkId l = topo_.core_down_to_pod(self_, topo_.info(dst).pod);
      if (alive(l)) out.push_back(l);
      return;
    }
    case Layer::Host:
      sim_fatal("feasible_links on a host");
  }
  for (LinkId l : topo_.uplinks(self_))
    if (alive(l)) out.push_back(l);
}

bool Switch::link_feasible(LinkId l, NodeId dst) const {
  if (!alive(l)) return false;
  switch (layer()) {
    case Layer::Edge:
      if (topo_.host_under_edge(dst, self_)) return topo_.link(l).to == dst;
      return topo_.layer(topo_.link(l).to) == Layer::Aggregate;
    case Layer::Aggregate:
      if (topo_.info(dst).pod == topo_.info(self_).pod)
        return topo_.link(l).to == topo_.edge_switch(topo_.info(dst).pod, topo_.info(dst).edge);
      return topo_.layer(topo_.link(l).to) == Layer::Core;
    case Layer::Core:
      return topo_.link(l).to == topo_.aggregate(topo_.info(dst).pod, topo_.info(self_).group);
    case Layer::Host:
      break;
  }
  return false;
}

std::span<const LinkId> Switch::downhill_in_links() const {
  std::span<const LinkId> in = topo_.in_links(self_);
  switch (layer()) {
    case Layer::Edge:
    case Layer::Aggregate: {
      // Incoming lists order host/edge links first, then uplink-side links.
      std::size_t half = in.size() / 2;
      return in.subspan(half);
    }
    default:
      return {};
  }
}

LinkId Switch::ecmp_choice(const Packet& p, NodeId dst) const {
  std::uint64_t h = salt_;
  h = splitmix64(h ^ static_cast<std::uint32_t>(p.key.src.v));
  h = splitmix64(h ^ static_cast<std::uint32_t>(p.key.dst.v));
  h = splitmix64(h ^ p.key.serial);
  h = splitmix64(h ^ (p.to_src ? 0x5DEECE66DULL : 0));

  switch (layer()) {
    case Layer::Edge:
      if (topo_.host_under_edge(dst, self_)) {
        LinkId l = topo_.edge_to_host(self_, dst);
        return alive(l) ? l : LinkId{};
      }
      break;
    case Layer::Aggregate:
      if (topo_.info(dst).pod == topo_.info(self_).pod) {
        LinkId l = topo_.agg_down_to_edge(self_, topo_.info(dst).edge);
        return alive(l) ? l : LinkId{};
      }
      break;
    case Layer::Core: {
      LinkId l = topo_.core_down_to_pod(self_, topo_.info(dst).pod);
      return alive(l) ? l : LinkId{};
    }
    case Layer::Host:
      return LinkId{};
  }
  std::span<const LinkId> ups = topo_.uplinks(self_);
  if (!link_alive_) return ups.empty() ? LinkId{} : ups[h % ups.size()];
  // Hash over the live subset so a failure only remaps affected flows.
  std::uint32_t n = 0;
  for (LinkId l : ups)
    if (alive(l)) ++n;
  if (n == 0) return LinkId{};
  std::uint32_t pick = static_cast<std::uint32_t>(h % n);
  for (LinkId l : ups) {
    if (!alive(l)) continue;
    if (pick == 0) return l;
    --pick;
  }
  return LinkId{};
}

void Switch::detect_elephant(Packet& p) {
  ElephantState& st = elephant_[p.flow];
  if (st.marked || elephant_threshold_ <= 0) p.flags |= kFlagElephant;
  st.bytes += p.payload_len;
  if (!st.marked && st.bytes > elephant_threshold_) st.marked = true;
}

LinkId Switch::route(LinkId in, Packet& p, SimTime now) {
  NodeId dst = p.dest_node();
  if (kind_ == SchedulerKind::Difs && layer() == Layer::Edge && !p.to_src &&
      topo_.host_under_edge(p.key.src, self_)) {
    detect_elephant(p);
  }
  if (kind_ == SchedulerKind::Difs && !p.to_src && p.has(kFlagElephant)) {
    auto it = table_.find(p.flow);
    if (it != table_.end()) {
      FlowTableEntry& e = it->second;
      if (alive(e.out_link)) {
        if (e.in_link != in) {
          // The flow moved upstream; track the observed arrival link.
          --vi_[topo_.link(e.in_link).in_index];
          ++vi_[topo_.link(in).in_index];
          e.in_link = in;
        }
        e.last_seen = now;
        e.bytes_seen += p.payload_len;
        e.window_bytes += p.payload_len;
        return e.out_link;
      }
      remove_entry(p.flow);
    }
    DCN_REQUIRE(ctl_ != nullptr, "scheduled switch without a control unit");
    LinkId out = ctl_->path_allocation(p.flow, p.key, in, now);
    if (!out.valid()) ++dropped_no_route_;
    if (out.valid()) {
      FlowTableEntry* e = find_entry(p.flow);
      e->bytes_seen += p.payload_len;
      e->window_bytes += p.payload_len;
    }
    return out;
  }
  LinkId out = ecmp_choice(p, dst);
  if (!out.valid()) ++dropped_no_route_;
  return out;
}

const FlowTableEntry* Switch::find_entry(std::uint32_t flow) const {
  auto it = table_.find(flow);
  return it == table_.end() ? nullptr : &it->second;
}

FlowTableEntry* Switch::find_entry(std::uint32_t flow) {
  auto it = table_.find(flow);
  return it == table_.end() ? nullptr : &it->second;
}

void Switch::install_entry(std::uint32_t flow, const FlowKey& key, LinkId in, LinkId out,
                           SimTime now) {
  DCN_REQUIRE(flow != 0, "flow ids start at 1; 0 is the no-flow sentinel");
  DCN_REQUIRE(!table_.count(flow), "duplicate flow-table install");
  FlowTableEntry e;
  e.flow = flow;
  e.key = key;
  e.in_link = in;
  e.out_link = out;
  e.last_seen = now;
  e.install_seq = install_seq_++;
  e.window_start = now;
  table_.emplace(flow, e);
  ++vo_[topo_.link(out).out_index];
  ++vi_[topo_.link(in).in_index];
}

void Switch::remove_entry(std::uint32_t flow) {
  auto it = table_.find(flow);
  DCN_REQUIRE(it != table_.end(), "removing a missing flow-table entry");
  --vo_[topo_.link(it->second.out_link).out_index];
  --vi_[topo_.link(it->second.in_link).in_index];
  table_.erase(it);
}

void Switch::move_flow(std::uint32_t flow, LinkId new_out, SimTime now) {
  FlowTableEntry* e = find_entry(flow);
  DCN_REQUIRE(e != nullptr, "moving a flow without an entry");
  if (e->out_link == new_out) return;
  --vo_[topo_.link(e->out_link).out_index];
  ++vo_[topo_.link(new_out).out_index];
  e->out_link = new_out;
  e->install_seq = install_seq_++;
  e->last_seen = now;
}

int Switch::expire_flows(SimTime now, SimTime idle_threshold) {
  std::vector<std::uint32_t> stale;
  for (const auto& [id, e] : table_)
    if (now - e.last_seen > idle_threshold) stale.push_back(id);
  std::sort(stale.begin(), stale.end());
  for (std::uint32_t id : stale) remove_entry(id);
  return static_cast<int>(stale.size());
}

void Switch::update_rate_windows(SimTime now, SimTime window) {
  for (auto& [id, e] : table_) {
    SimTime elapsed = now - e.window_start;
    if (elapsed < window) continue;
    double inst = static_cast<double>(e.window_bytes) * 8e9 / static_cast<double>(elapsed);
    e.rate_bps = e.rate_bps == 0 ? inst : 0.5 * e.rate_bps + 0.5 * inst;
    e.window_bytes = 0;
    e.window_start = now;
  }
}

void Switch::out_metrics(std::span<const LinkId> links, MetricMode m,
                         std::vector<double>& v) const {
  v.assign(links.size(), 0);
  if (m == MetricMode::Count) {
    for (std::size_t i = 0; i < links.size(); ++i)
      v[i] = static_cast<double>(vo_[topo_.link(links[i]).out_index]);
    return;
  }
  for (const auto& [id, e] : table_)
    for (std::size_t i = 0; i < links.size(); ++i)
      if (links[i] == e.out_link) v[i] += e.rate_bps;
}

void Switch::in_metrics(std::span<const LinkId> links, MetricMode m,
                        std::vector<double>& v) const {
  v.assign(links.size(), 0);
  if (m == MetricMode::Count) {
    for (std::size_t i = 0; i < links.size(); ++i)
      v[i] = static_cast<double>(vi_[topo_.link(links[i]).in_index]);
    return;
  }
  for (const auto& [id, e] : table_)
    for (std::size_t i = 0; i < links.size(); ++i)
      if (links[i] == e.in_link) v[i] += e.rate_bps;
}

void Switch::psv_recount_check() const {
  std::vector<std::int64_t> vo(vo_.size(), 0), vi(vi_.size(), 0);
  for (const auto& [id, e] : table_) {
    ++vo[topo_.link(e.out_link).out_index];
    ++vi[topo_.link(e.in_link).in_index];
  }
  DCN_REQUIRE(vo == vo_ && vi == vi_,
              "port state vectors diverged from the flow table at " + topo_.node_name(self_));
}

std::string Switch::dump_state_json(SimTime now) const {
  nlohmann::json j;
  j["switch"] = topo_.node_name(self_);
  j["time_s"] = to_seconds(now);
  std::vector<std::uint32_t> ids;
  ids.reserve(table_.size());
  for (const auto& [id, e] : table_) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  nlohmann::json entries = nlohmann::json::array();
  for (std::uint32_t id : ids) {
    const FlowTableEntry& e = table_.at(id);
    nlohmann::json je;
    je["flow"] = e.flow;
    je["src"] = topo_.node_name(e.key.src);
    je["dst"] = topo_.node_name(e.key.dst);
    je["serial"] = e.key.serial;
    je["in"] = topo_.node_name(topo_.link(e.in_link).from);
    je["out"] = topo_.node_name(topo_.link(e.out_link).to);
    je["bytes"] = e.bytes_seen;
    je["rate_bps"] = e.rate_bps;
    je["age_s"] = to_seconds(now - e.last_seen);
    entries.push_back(std::move(je));
  }
  j["entries"] = std::move(entries);
  nlohmann::json vo = nlohmann::json::array(), vi = nlohmann::json::array();
  for (auto c : vo_) vo.push_back(c);
  for (auto c : vi_) vi.push_back(c);
  j["vo"] = std::move(vo);
  j["vi"] = std::move(vi);
  return j.dump();
}

}  // namespace dcn
