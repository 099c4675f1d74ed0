#include "dcnsim/difs.hpp"

#include <algorithm>

namespace dcn {

namespace {
constexpr std::uint32_t kNoFlow = 0;
}

DifsUnit::DifsUnit(const Topology& topo, Switch& sw, const ControlConfig& cfg, DifsSink& sink,
                   Rng& tiebreak, Rng& ear_pick)
    : topo_(topo), sw_(sw), cfg_(cfg), sink_(sink), tiebreak_(tiebreak), ear_pick_(ear_pick) {
  DCN_REQUIRE(cfg_.period > 0, "control period must be positive");
  DCN_REQUIRE(cfg_.mode == MetricMode::Rate || cfg_.delta_count >= 1,
              "count-mode imbalance threshold below one flow");
  sw_.attach_control(this);
}

void DifsUnit::tick(SimTime now) {
  expire(now);
  sw_.update_rate_windows(now, cfg_.rate_window);
  rebalance_simo(now);
  imbalance_detect(now);
  sw_.psv_recount_check();
}

SimTime DifsUnit::expiry_threshold() const {
  auto from_rtt =
      static_cast<SimTime>(cfg_.expiry_rtt_multiple * static_cast<double>(sink_.avg_rtt()));
  return std::max(from_rtt, cfg_.expiry_floor);
}

int DifsUnit::expire(SimTime now) {
  int n = sw_.expire_flows(now, expiry_threshold());
  expired_ += n;
  return n;
}

double DifsUnit::out_metric_one(LinkId l) const {
  if (cfg_.mode == MetricMode::Count) return static_cast<double>(sw_.vo(l));
  double r = 0;
  for (const auto& [id, e] : sw_.table())
    if (e.out_link == l) r += e.rate_bps;
  return r;
}

double DifsUnit::in_metric_one(LinkId l) const {
  if (cfg_.mode == MetricMode::Count) return static_cast<double>(sw_.vi(l));
  double r = 0;
  for (const auto& [id, e] : sw_.table())
    if (e.in_link == l) r += e.rate_bps;
  return r;
}

LinkId DifsUnit::path_allocation(std::uint32_t flow, const FlowKey& key, LinkId in, SimTime now) {
  sw_.feasible_links(key.dst, scratch_links_);
  if (scratch_links_.empty()) {
    sink_.report_unreachable(flow, sw_.self(), now);
    return LinkId{};
  }
  LinkId pick = scratch_links_[0];
  if (scratch_links_.size() > 1) {
    sw_.out_metrics(scratch_links_, cfg_.mode, scratch_metric_);
    double best = *std::min_element(scratch_metric_.begin(), scratch_metric_.end());
    std::size_t nmin = 0;
    for (double m : scratch_metric_)
      if (m == best) ++nmin;
    std::uint64_t want = nmin > 1 ? tiebreak_.below(nmin) : 0;
    for (std::size_t i = 0; i < scratch_links_.size(); ++i) {
      if (scratch_metric_[i] != best) continue;
      if (want == 0) {
        pick = scratch_links_[i];
        break;
      }
      --want;
    }
  }
  sw_.install_entry(flow, key, in, pick, now);
  return pick;
}

LinkId DifsUnit::handle_par(const ParMessage& par, SimTime now) {
  if (const FlowTableEntry* e = sw_.find_entry(par.flow)) return e->out_link;
  return path_allocation(par.flow, par.key, par.in_link, now);
}

int DifsUnit::rebalance_simo(SimTime now) {
  std::span<const LinkId> ups = topo_.uplinks(sw_.self());
  if (ups.size() < 2) return 0;
  int cap = cfg_.rebalance_move_cap > 0 ? cfg_.rebalance_move_cap : static_cast<int>(ups.size());
  int moves = 0;
  while (moves < cap) {
    scratch_links_.clear();
    for (LinkId l : ups)
      if (sw_.alive(l)) scratch_links_.push_back(l);
    if (scratch_links_.size() < 2) break;
    sw_.out_metrics(scratch_links_, cfg_.mode, scratch_metric_);
    std::size_t imax = 0, imin = 0;
    for (std::size_t i = 1; i < scratch_metric_.size(); ++i) {
      if (scratch_metric_[i] > scratch_metric_[imax]) imax = i;
      if (scratch_metric_[i] < scratch_metric_[imin]) imin = i;
    }
    if (scratch_metric_[imax] - scratch_metric_[imin] <= cfg_.threshold()) break;
    std::uint32_t victim = latest_movable_on(scratch_links_[imax], scratch_links_[imin], kNoFlow);
    if (victim == kNoFlow) break;
    if (cfg_.mode == MetricMode::Rate) {
      // Only move when the spread between the two links strictly shrinks;
      // otherwise a heavy flow would ping-pong between ticks.
      double r = sw_.find_entry(victim)->rate_bps;
      if (!(r > 0) || scratch_metric_[imin] + r >= scratch_metric_[imax]) break;
    }
    sw_.move_flow(victim, scratch_links_[imin], now);
    sink_.note_path_change(victim, sw_.self(), now);
    ++moves;
  }
  rebalance_moves_ += moves;
  return moves;
}

bool DifsUnit::imbalance_detect(SimTime now) {
  std::span<const LinkId> down = sw_.downhill_in_links();
  if (down.size() < 2) return false;
  scratch_links_.clear();
  for (LinkId l : down)
    if (sw_.alive(l)) scratch_links_.push_back(l);
  if (scratch_links_.size() < 2) return false;
  sw_.in_metrics(scratch_links_, cfg_.mode, scratch_metric_);
  std::size_t imin = 0;
  for (std::size_t i = 1; i < scratch_metric_.size(); ++i)
    if (scratch_metric_[i] < scratch_metric_[imin]) imin = i;
  double minv = scratch_metric_[imin];

  scratch_flows_.clear();
  for (const auto& [id, e] : sw_.table())
    if (sw_.classify(e.key.src, e.key.dst) == FlowClass::Miso) scratch_flows_.push_back(id);
  std::sort(scratch_flows_.begin(), scratch_flows_.end());
  ear_pick_.shuffle(scratch_flows_);

  int emitted = 0;
  for (std::uint32_t id : scratch_flows_) {
    const FlowTableEntry* e = sw_.find_entry(id);
    auto it = std::find(scratch_links_.begin(), scratch_links_.end(), e->in_link);
    if (it == scratch_links_.end()) continue;
    double m = scratch_metric_[static_cast<std::size_t>(it - scratch_links_.begin())];
    if (m - minv <= cfg_.threshold()) continue;
    EarMessage ear;
    ear.flow = id;
    ear.key = e->key;
    ear.rec = topo_.mirror_uplink(sw_.self(), scratch_links_[imin], topo_.info(e->key.src).pod);
    ear.origin = sw_.self();
    ear.created = now;
    ear.hop_trace.push_back(sw_.self());
    emit_ear(std::move(ear), e->in_link, now);
    if (++emitted >= cfg_.max_ears_per_tick) break;
  }
  return emitted > 0;
}

void DifsUnit::emit_ear(EarMessage&& ear, LinkId reverse_in, SimTime now) {
  ++ears_emitted_;
  sink_.note_ear_emitted(ear, now);
  LinkId back = topo_.link(reverse_in).reverse;
  if (!sw_.alive(back) || topo_.layer(topo_.link(back).to) == Layer::Host) {
    ++ears_discarded_;
    sink_.note_ear_discarded(ear, now);
    return;
  }
  sink_.forward_ear(std::move(ear), back);
}

void DifsUnit::on_ear(EarMessage&& ear, SimTime now) {
  ear.hop_trace.push_back(sw_.self());
  FlowTableEntry* e = sw_.find_entry(ear.flow);
  if (e == nullptr) {
    ++ears_discarded_;
    sink_.note_ear_discarded(ear, now);
    return;
  }
  NodeId rec = ear.rec.core.valid() ? ear.rec.core : ear.rec.uphill_aggregate;
  LinkId l = topo_.link_between(sw_.self(), rec);
  if (l.valid() && sw_.alive(l) && sw_.link_feasible(l, e->key.dst)) {
    if (l == e->out_link) {
      ++ears_applied_;
      sink_.note_ear_applied(ear, now);
      return;
    }
    if (out_metric_one(l) >= out_metric_one(e->out_link)) {
      std::uint32_t victim = latest_movable_on(l, e->out_link, ear.flow);
      if (victim != kNoFlow) {
        sw_.move_flow(victim, e->out_link, now);
        ++swaps_;
        sink_.note_path_change(victim, sw_.self(), now);
      }
    }
    sw_.move_flow(ear.flow, l, now);
    ++ears_applied_;
    sink_.note_path_change(ear.flow, sw_.self(), now);
    sink_.note_ear_applied(ear, now);
    return;
  }
  LinkId back = topo_.link(e->in_link).reverse;
  if (!sw_.alive(back) || topo_.layer(topo_.link(back).to) == Layer::Host) {
    ++ears_discarded_;
    sink_.note_ear_discarded(ear, now);
    return;
  }
  ++ears_forwarded_;
  sink_.forward_ear(std::move(ear), back);
}

void DifsUnit::on_link_failure(LinkId dead, SimTime now) {
  scratch_flows_.clear();
  for (const auto& [id, e] : sw_.table())
    if (e.out_link == dead) scratch_flows_.push_back(id);
  std::sort(scratch_flows_.begin(), scratch_flows_.end());
  for (std::uint32_t id : scratch_flows_) {
    FlowTableEntry e = *sw_.find_entry(id);
    sw_.remove_entry(id);
    sw_.feasible_links(e.key.dst, scratch_links_);
    if (!scratch_links_.empty()) {
      path_allocation(id, e.key, e.in_link, now);
      sink_.note_path_change(id, sw_.self(), now);
      continue;
    }
    const NodeInfo& me = topo_.info(sw_.self());
    int half = topo_.k() / 2;
    PathSpec rec;
    if (sw_.layer() == Layer::Core && half > 1) {
      // Shift the flow to a sibling core; the sending pod's aggregate is
      // adjacent to every core in the group and applies the move.
      int pos = static_cast<int>(ear_pick_.below(static_cast<std::uint64_t>(half - 1)));
      if (pos >= me.pos) ++pos;
      rec.core = topo_.core(me.group, pos);
    } else if (sw_.layer() == Layer::Aggregate && half > 1) {
      // My link down to the destination edge died; only a different
      // aggregate position can reach it, which the source edge selects.
      int pos = static_cast<int>(ear_pick_.below(static_cast<std::uint64_t>(half - 1)));
      if (pos >= me.pos) ++pos;
      rec.uphill_aggregate = topo_.aggregate(topo_.info(e.key.src).pod, pos);
    } else {
      sink_.report_unreachable(id, sw_.self(), now);
      continue;
    }
    EarMessage ear;
    ear.flow = id;
    ear.key = e.key;
    ear.rec = rec;
    ear.origin = sw_.self();
    ear.created = now;
    ear.hop_trace.push_back(sw_.self());
    emit_ear(std::move(ear), e.in_link, now);
  }
}

std::uint32_t DifsUnit::latest_movable_on(LinkId l, LinkId candidate,
                                          std::uint32_t excluded) const {
  std::uint32_t best = kNoFlow;
  std::uint64_t best_seq = 0;
  for (const auto& [id, e] : sw_.table()) {
    if (e.out_link != l || id == excluded) continue;
    if (!sw_.link_feasible(candidate, e.key.dst)) continue;
    if (e.install_seq > best_seq) {
      best_seq = e.install_seq;
      best = id;
    }
  }
  return best;
}

MarginsReport compute_margins(const Topology& topo, const std::vector<const Switch*>& switches,
                              double delta) {
  DCN_REQUIRE(topo.k() >= 4, "balance audit needs a pod topology");
  MarginsReport rep;
  int k = topo.k();
  int half = k / 2;
  auto sw_at = [&](NodeId n) -> const Switch& {
    return *switches.at(static_cast<std::size_t>(n.v - topo.num_hosts()));
  };
  auto add_row = [&](std::string scope, const std::vector<std::int64_t>& n, std::int64_t bound,
                     std::int64_t forced = 0) {
    auto [mn, mx] = std::minmax_element(n.begin(), n.end());
    MarginRow row;
    row.scope = std::move(scope);
    row.observed = *mx - *mn;
    row.bound = bound;
    row.max_n = *mx;
    row.min_n = *mn;
    row.forced = forced;
    if (row.observed - row.forced > row.bound) rep.ok = false;
    rep.rows.push_back(std::move(row));
  };

  std::int64_t agg_bound = static_cast<std::int64_t>(delta * half);
  for (int p = 0; p < k; ++p) {
    std::vector<std::int64_t> n(static_cast<std::size_t>(half), 0);
    for (int e = 0; e < half; ++e) {
      const Switch& sw = sw_at(topo.edge_switch(p, e));
      for (const auto& [id, ent] : sw.table()) {
        NodeId to = topo.link(ent.out_link).to;
        if (topo.layer(to) == Layer::Aggregate) ++n[static_cast<std::size_t>(topo.info(to).pos)];
      }
    }
    add_row("pod" + std::to_string(p) + "-aggregate", n, agg_bound);
  }

  std::vector<std::int64_t> nc(static_cast<std::size_t>(half * half), 0);
  for (int p = 0; p < k; ++p) {
    for (int a = 0; a < half; ++a) {
      const Switch& sw = sw_at(topo.aggregate(p, a));
      for (const auto& [id, ent] : sw.table()) {
        NodeId to = topo.link(ent.out_link).to;
        if (topo.layer(to) == Layer::Core)
          ++nc[static_cast<std::size_t>(topo.info(to).group * half + topo.info(to).pos)];
      }
    }
  }
  add_row("core-global", nc, 3 * k);

  for (int p = 0; p < k; ++p) {
    std::vector<std::int64_t> n(static_cast<std::size_t>(half), 0);
    std::vector<std::int64_t> demand(static_cast<std::size_t>(half), 0);
    for (int a = 0; a < half; ++a) {
      const Switch& sw = sw_at(topo.aggregate(p, a));
      for (const auto& [id, ent] : sw.table()) {
        NodeId to = topo.link(ent.out_link).to;
        if (topo.layer(to) != Layer::Edge) continue;
        ++n[static_cast<std::size_t>(topo.info(to).pos)];
        // The destination dictates which edge the flow must descend to; tally
        // that baseline so only scheduler-added spread counts.
        const NodeInfo& dst = topo.info(ent.key.dst);
        if (dst.pod == p) ++demand[static_cast<std::size_t>(dst.edge)];
      }
    }
    auto [dmn, dmx] = std::minmax_element(demand.begin(), demand.end());
    add_row("pod" + std::to_string(p) + "-edge", n, half, *dmx - *dmn);
  }
  return rep;
}

}  // namespace dcn
