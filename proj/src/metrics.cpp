#include "dcnsim/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace dcn {

std::vector<double> MetricsReport::aggregate_bins_bps() const {
  std::size_t nbins = 0;
  for (const auto& h : rx_bins) nbins = std::max(nbins, h.size());
  std::vector<double> agg(nbins, 0);
  double per_byte = 8e9 / static_cast<double>(bin);
  for (const auto& h : rx_bins)
    for (std::size_t b = 0; b < h.size(); ++b)
      agg[b] += static_cast<double>(h[b]) * per_byte;
  return agg;
}

SimTime convergence_time(const std::vector<double>& series_bps, SimTime bin, double fraction,
                         SimTime duration, bool* converged) {
  *converged = true;
  if (series_bps.empty()) return 0;
  std::size_t n = series_bps.size();
  std::size_t tail = std::max<std::size_t>(1, n / 4);
  double steady = 0;
  for (std::size_t i = n - tail; i < n; ++i) steady += series_bps[i];
  steady /= static_cast<double>(tail);
  double target = fraction * steady;
  if (target <= 0) return 0;
  std::size_t first_good = n;
  for (std::size_t i = n; i-- > 0;) {
    if (series_bps[i] < target) break;
    first_good = i;
  }
  if (first_good == n) {
    *converged = false;
    return duration;
  }
  return static_cast<SimTime>(first_good) * bin;
}

std::vector<double> mean_chunks(const std::vector<double>& series, std::size_t chunk) {
  if (chunk < 2) return series;
  std::vector<double> out;
  out.reserve((series.size() + chunk - 1) / chunk);
  for (std::size_t i = 0; i < series.size(); i += chunk) {
    std::size_t end = std::min(series.size(), i + chunk);
    double sum = 0;
    for (std::size_t j = i; j < end; ++j) sum += series[j];
    out.push_back(sum / static_cast<double>(end - i));
  }
  return out;
}

namespace {

void append_time(std::string& out, SimTime t, const char* fmt) {
  char buf[40];
  std::snprintf(buf, sizeof buf, fmt, to_seconds(t));
  out += buf;
}

}  // namespace

std::string render_timeseries_csv(const MetricsReport& r) {
  std::string out = "time_s,host,rx_bps\n";
  std::size_t nbins = 0;
  for (const auto& h : r.rx_bins) nbins = std::max(nbins, h.size());
  // Exact integer rate: bytes * 8 * (1e9 / bin) with bin dividing 8e9.
  std::int64_t mult = 8'000'000'000 / r.bin;
  char buf[96];
  for (std::size_t b = 0; b < nbins; ++b) {
    for (std::size_t h = 0; h < r.rx_bins.size(); ++h) {
      std::int64_t bytes = b < r.rx_bins[h].size() ? r.rx_bins[h][b] : 0;
      std::snprintf(buf, sizeof buf, "%.3f,%zu,%lld\n",
                    to_seconds(static_cast<SimTime>(b) * r.bin), h,
                    static_cast<long long>(bytes * mult));
      out += buf;
    }
  }
  return out;
}

std::string render_ear_log_csv(const std::vector<EarLogRow>& rows) {
  std::string out = "time_s,origin,flow,recommendation\n";
  for (const auto& row : rows) {
    append_time(out, row.t, "%.6f");
    out += ',';
    out += row.origin;
    out += ',';
    out += std::to_string(row.flow);
    out += ',';
    out += row.recommendation;
    out += '\n';
  }
  return out;
}

std::string render_margins_csv(const MarginsReport& m) {
  std::string out = "scope,observed,forced,bound,max_flows,min_flows\n";
  for (const auto& row : m.rows) {
    out += row.scope;
    out += ',';
    out += std::to_string(row.observed);
    out += ',';
    out += std::to_string(row.forced);
    out += ',';
    out += std::to_string(row.bound);
    out += ',';
    out += std::to_string(row.max_n);
    out += ',';
    out += std::to_string(row.min_n);
    out += '\n';
  }
  return out;
}

std::string render_links_csv(const std::vector<LinkUsageRow>& rows) {
  std::string out = "from,to,delivered_bytes,dropped_packets,utilization\n";
  char buf[32];
  for (const auto& row : rows) {
    out += row.from;
    out += ',';
    out += row.to;
    out += ',';
    out += std::to_string(row.delivered_bytes);
    out += ',';
    out += std::to_string(row.dropped_packets);
    out += ',';
    std::snprintf(buf, sizeof buf, "%.6f\n", row.utilization);
    out += buf;
  }
  return out;
}

std::string render_summary_json(const MetricsReport& r, const std::string& config_json) {
  nlohmann::json j;
  j["config"] = nlohmann::json::parse(config_json);
  j["bisection_gbps"] = r.bisection_bps / 1e9;
  j["crosscheck_gbps"] = r.crosscheck_bps / 1e9;
  j["window"] = {{"start_s", to_seconds(r.window_start)}, {"end_s", to_seconds(r.window_end)}};
  j["convergence"] = {{"time_s", to_seconds(r.convergence)}, {"converged", r.converged}};
  j["reorder"] = {{"ratio_avg", r.reorder.ratio_avg},
                  {"ratio_max", r.reorder.ratio_max},
                  {"window_avg", r.reorder.window_avg},
                  {"window_max", r.reorder.window_max},
                  {"flows_measured", r.reorder.flows_measured}};
  j["ear"] = {{"count", r.ear_count},
              {"bytes", r.ear_bytes},
              {"applied", r.ear_applied},
              {"forwarded", r.ear_forwarded},
              {"discarded", r.ear_discarded}};
  nlohmann::json margins;
  margins["ok"] = r.margins.ok;
  margins["snapshots"] = r.margin_snapshots;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.margins.rows)
    rows.push_back({{"scope", row.scope},
                    {"observed", row.observed},
                    {"forced", row.forced},
                    {"bound", row.bound},
                    {"max_flows", row.max_n},
                    {"min_flows", row.min_n}});
  margins["rows"] = std::move(rows);
  if (!r.margin_violation.empty()) margins["violation"] = r.margin_violation;
  j["margins"] = std::move(margins);
  if (r.is_shuffle) {
    nlohmann::json sh;
    sh["total_s"] = to_seconds(r.shuffle_total);
    sh["completion_mean_s"] = r.completion_mean_s;
    sh["finished"] = r.shuffle_finished;
    nlohmann::json comp = nlohmann::json::array();
    for (SimTime t : r.host_completion) comp.push_back(to_seconds(t));
    sh["host_completion_s"] = std::move(comp);
    j["shuffle"] = std::move(sh);
  }
  j["counters"] = {{"total_rx_payload", r.total_rx_payload},
                   {"dropped_queue", r.packets_dropped_queue},
                   {"dropped_no_route", r.packets_dropped_no_route},
                   {"dropped_dead_link", r.packets_dropped_dead_link},
                   {"flows_total", r.flows_total},
                   {"flows_completed", r.flows_completed},
                   {"flows_unreachable", r.flows_unreachable},
                   {"rebalance_moves", r.rebalance_moves},
                   {"swaps", r.swaps},
                   {"expired_entries", r.expired_entries},
                   {"property_violations", r.property_violations}};
  if (!r.property_detail.empty()) j["counters"]["property_detail"] = r.property_detail;
  // Wall-clock time stays out of the file: identical runs must produce
  // identical bytes.
  return j.dump(2) + "\n";
}

void write_file_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + tmp);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f.good()) throw std::runtime_error("short write: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("rename failed: " + path);
}

}  // namespace dcn
