#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "dcnsim/difs.hpp"
#include "dcnsim/fabric.hpp"
#include "dcnsim/link.hpp"
#include "dcnsim/metrics.hpp"
#include "dcnsim/rng.hpp"
#include "dcnsim/sim.hpp"
#include "dcnsim/tcp.hpp"
#include "dcnsim/topology.hpp"
#include "dcnsim/traffic.hpp"

namespace dcn {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  int k = 4;
  std::string scheduler = "difs";  // "difs" | "ecmp"
  std::string pattern = "random";
  double duration_s = 10;
  std::uint64_t seed = 1;
  std::string metric_mode = "count";  // "count" | "rate"
  double delta = 1;
  double delta_rate_bps = 100e6;
  double link_gbps = 1;
  double link_delay_us = 10;
  std::int64_t elephant_threshold_bytes = 100'000;
  int queue_floor_packets = 64;
  double control_period_s = 0.01;
  double warmup_s = -1;    // < 0: duration / 6
  double cooldown_s = -1;  // < 0: duration / 6
  std::string out_dir;     // empty: keep results in memory only
  bool validate_bounds = false;

  // Throws ConfigError naming the offending field.
  static ExperimentConfig from_json_text(const std::string& text);
  void validate() const;
  std::string to_json() const;

  SchedulerKind scheduler_kind() const;
  MetricMode mode() const;
  SimTime duration() const { return seconds(duration_s); }
};

struct RunOutputs {
  MetricsReport report;
  std::string summary_json;
  std::string timeseries_csv;
  std::string ear_log_csv;
  std::string margins_csv;
  std::string links_csv;
};

// One simulation instance: topology, link queues, switches, transport
// endpoints, control units, and metric accumulators on a single event
// timeline. execute() drives the configured pattern; the scripting surface
// (open_flow, force_flow_path, fail_cable, advance_to) supports scripted
// reproductions and failure drills without a pattern.
class Run : public TcpSink, public DifsSink {
 public:
  explicit Run(const ExperimentConfig& cfg);
  ~Run() override;
  Run(const Run&) = delete;
  Run& operator=(const Run&) = delete;

  RunOutputs execute();

  std::uint32_t open_flow(NodeId src, NodeId dst, std::int64_t bytes);
  // Pre-installs table entries for `flow` along the node path
  // host, switch..., host. Scheduled runs never need this; scripted
  // collision reproductions start from a known placement.
  void force_flow_path(std::uint32_t flow, const std::vector<NodeId>& path);
  // Cuts both directions of the cable between adjacent nodes and lets the
  // attached switches reallocate.
  void fail_cable(NodeId a, NodeId b);
  void advance_to(SimTime t);

  // Current switch-table path of a flow from its source host; empty when a
  // hop has no entry yet.
  std::vector<LinkId> current_path(std::uint32_t flow) const;
  std::int64_t flow_rx_bytes(std::uint32_t flow) const;
  const TcpSender& sender(std::uint32_t flow) const;
  const TcpReceiver& receiver(std::uint32_t flow) const;

  // Report over everything seen so far; usable from scripted runs.
  MetricsReport build_report();

  const Topology& topology() const { return topo_; }
  Simulator& simulator() { return sim_; }
  Switch& switch_at(NodeId n);
  const Switch& switch_at(NodeId n) const;
  DifsUnit* unit_at(NodeId n);
  const std::vector<EarLogRow>& ear_log() const { return ear_log_; }
  std::int64_t ear_count() const { return ear_count_; }
  std::int64_t ear_bytes() const { return ear_bytes_; }

  // TcpSink
  void send_packet(const Packet& p) override;
  void on_flow_complete(std::uint32_t flow, SimTime at) override;
  void on_rtt_sample(SimTime rtt) override;

  // DifsSink
  void forward_ear(EarMessage&& ear, LinkId via) override;
  void note_ear_emitted(const EarMessage& ear, SimTime now) override;
  void note_ear_applied(const EarMessage& ear, SimTime now) override;
  void note_ear_discarded(const EarMessage& ear, SimTime now) override;
  void note_path_change(std::uint32_t flow, NodeId sw, SimTime now) override;
  void report_unreachable(std::uint32_t flow, NodeId sw, SimTime now) override;
  SimTime avg_rtt() const override { return avg_rtt_; }

 private:
  struct FlowRec {
    FlowKey key;
    std::int64_t bytes = 0;
    std::unique_ptr<TcpSender> snd;
    std::unique_ptr<TcpReceiver> rcv;
    bool done = false;
    bool unreachable = false;
    SimTime done_at = -1;
  };

  static void ev_arrival(void* ctx, std::uint64_t arg);
  static void ev_tick(void* ctx, std::uint64_t arg);
  static void ev_ear(void* ctx, std::uint64_t arg);
  static void ev_snapshot(void* ctx, std::uint64_t);

  std::uint32_t alloc_packet(const Packet& p);
  void free_packet(std::uint32_t idx);
  void transmit(LinkId l, std::uint32_t idx);
  void deliver(LinkId l, std::uint32_t idx);
  void host_rx(NodeId host, std::int64_t delta);
  void control_tick(std::size_t unit_idx);
  void snapshot_margins();
  void start_pattern();
  void open_next_shuffle(std::size_t receiver_index);
  void check_reverse_path(const EarMessage& ear);
  std::size_t switch_index(NodeId n) const;
  void note_violation(const std::string& what);

  ExperimentConfig cfg_;
  TrafficPattern pattern_;
  Topology topo_;
  Simulator sim_;
  Rng rng_salt_;
  Rng rng_tiebreak_;
  Rng rng_traffic_;
  Rng rng_ear_;
  std::uint64_t salt_;
  ControlConfig ctl_cfg_;

  std::vector<LinkQueue> queues_;
  std::vector<char> alive_;
  std::vector<std::unique_ptr<Switch>> switches_;
  std::vector<std::unique_ptr<DifsUnit>> units_;  // index-aligned; empty for hash scheduler
  std::deque<FlowRec> flows_;                     // flow id - 1

  std::vector<Packet> pool_;
  std::vector<std::uint32_t> free_;
  std::unordered_set<void*> ears_in_flight_;  // owned; reclaimed on teardown

  SimTime duration_;
  std::vector<std::vector<std::int64_t>> rx_bins_;
  SimTime wstart_ = 0;
  SimTime wend_ = 0;
  std::int64_t window_bytes_ = 0;
  std::int64_t total_rx_ = 0;

  std::vector<EarLogRow> ear_log_;
  std::int64_t ear_count_ = 0;
  std::int64_t ear_bytes_ = 0;
  std::int64_t ear_applied_ = 0;
  std::int64_t ear_discarded_ = 0;
  SimTime last_ear_ = -1;
  std::vector<SimTime> last_emit_by_switch_;
  bool in_failure_ = false;

  MarginsReport margins_;
  int snapshots_ = 0;
  std::string violation_;

  ShuffleJob shuffle_;
  std::vector<std::size_t> shuffle_next_;
  std::int64_t transfers_done_ = 0;
  std::vector<SimTime> host_completion_;

  SimTime avg_rtt_ = 0;
  std::int64_t dropped_queue_ = 0;
  std::int64_t dropped_dead_ = 0;
  std::int64_t flows_done_ = 0;
  std::int64_t unreachable_flows_ = 0;
  std::int64_t property_violations_ = 0;
  std::string property_detail_;
};

RunOutputs run_experiment(const ExperimentConfig& cfg);

struct ScenarioResult {
  bool pass = false;
  bool disjoint = false;
  std::vector<double> flow_gbps;
  double wall_seconds = 0;
  std::string detail;
};

// Scripted two-flow collision reproductions on a 4-pod fabric:
//   local    both flows enter at one edge switch; allocation alone must put
//            them on different uplinks
//   remote1  both flows forced through one core, colliding on its link down
//            to the destination pod; an adaptation request naming the idle
//            sibling core must split them
//   remote2  flows from two pods forced onto one aggregate-to-edge link; an
//            adaptation request naming a different uphill aggregate must
//            split them
// Passes when the paths are fully link-disjoint shortly after ten control
// periods and each flow then sustains >= 90% of link rate.
ScenarioResult scenario_check(const std::string& name, std::uint64_t seed);

}  // namespace dcn
