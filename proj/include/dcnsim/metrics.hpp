#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcnsim/difs.hpp"
#include "dcnsim/sim.hpp"

namespace dcn {

struct ReorderSummary {
  double ratio_avg = 0;
  double ratio_max = 0;
  double window_avg = 0;
  double window_max = 0;
  std::int64_t flows_measured = 0;
};

struct MetricsReport {
  int k = 0;
  int num_hosts = 0;
  std::string scheduler;
  std::string pattern;
  std::uint64_t seed = 0;
  SimTime duration = 0;
  SimTime bin = 100 * kMs;
  SimTime window_start = 0;
  SimTime window_end = 0;

  // Payload bytes received per host per bin; the authoritative series.
  std::vector<std::vector<std::int64_t>> rx_bins;

  // Sum over hosts of window-average receive rate, and the independently
  // accumulated whole-window counter it must agree with.
  double bisection_bps = 0;
  double crosscheck_bps = 0;

  SimTime convergence = 0;
  bool converged = true;

  ReorderSummary reorder;

  std::int64_t ear_count = 0;
  std::int64_t ear_bytes = 0;
  std::int64_t ear_applied = 0;
  std::int64_t ear_forwarded = 0;
  std::int64_t ear_discarded = 0;

  MarginsReport margins;
  int margin_snapshots = 0;
  std::string margin_violation;

  bool is_shuffle = false;
  SimTime shuffle_total = 0;
  double completion_mean_s = 0;
  std::vector<SimTime> host_completion;
  bool shuffle_finished = true;

  std::int64_t total_rx_payload = 0;
  std::int64_t packets_dropped_queue = 0;
  std::int64_t packets_dropped_no_route = 0;
  std::int64_t packets_dropped_dead_link = 0;
  std::int64_t flows_total = 0;
  std::int64_t flows_completed = 0;
  std::int64_t flows_unreachable = 0;
  std::int64_t rebalance_moves = 0;
  std::int64_t swaps = 0;
  std::int64_t expired_entries = 0;
  std::int64_t property_violations = 0;
  std::string property_detail;

  double wall_seconds = 0;

  // Aggregate receive rate per bin, bits per second.
  std::vector<double> aggregate_bins_bps() const;
};

// Earliest time after which the aggregate rate stays at or above
// fraction * steady, where steady is the mean of the final quarter of the
// series. A series that never holds the level reports `duration` and clears
// *converged.
SimTime convergence_time(const std::vector<double>& series_bps, SimTime bin, double fraction,
                         SimTime duration, bool* converged);

// Means of consecutive groups of `chunk` values; a short final group is
// averaged over its actual size. chunk < 2 returns the series unchanged.
std::vector<double> mean_chunks(const std::vector<double>& series, std::size_t chunk);

struct EarLogRow {
  SimTime t = 0;
  std::string origin;
  std::uint32_t flow = 0;
  std::string recommendation;
};

struct LinkUsageRow {
  std::string from;
  std::string to;
  std::int64_t delivered_bytes = 0;
  std::int64_t dropped_packets = 0;
  double utilization = 0;
};

std::string render_timeseries_csv(const MetricsReport& r);
std::string render_ear_log_csv(const std::vector<EarLogRow>& rows);
std::string render_margins_csv(const MarginsReport& m);
std::string render_links_csv(const std::vector<LinkUsageRow>& rows);
// `config_json` is the exact configuration echo embedded under "config".
std::string render_summary_json(const MetricsReport& r, const std::string& config_json);

// Writes via a temporary file and rename so readers never see partial output.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace dcn
